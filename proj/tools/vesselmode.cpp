#include <vesselmode/flowsynth.hpp>

#include <CLI11.hpp>

#include <iostream>

using namespace vesselmode;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out;
  unsigned threads = 1;
  std::string seed = "0x5EED";
};

std::uint64_t parse_seed(const std::string& s) {
  try {
    return std::stoull(s, nullptr, 16);
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, "--seed expects a hexadecimal value, got '" + s + "'");
  }
}

ExperimentConfig need_config(const Globals& g) {
  if (g.config.empty()) throw Error(ErrorKind::config, "this command needs --config PATH");
  return load_config(g.config);
}

fs::path out_dir(const Globals& g, const ExperimentConfig& c) {
  fs::path p = g.out.empty() ? fs::path(c.output_dir) : fs::path(g.out);
  fs::create_directories(p);
  return p;
}

CrossSectionPtr build(const ExperimentConfig& c, double h, BoundaryCurve& curve_out) {
  curve_out = BoundaryCurve(c.geometry.curve, std::size_t(c.geometry.boundary_nodes));
  return make_cross_section(mesh_domain(curve_out, h));
}

int cmd_mesh(const Globals& g) {
  const auto c = need_config(g);
  BoundaryCurve curve(c.geometry.curve, std::size_t(c.geometry.boundary_nodes));
  const auto m = mesh_domain(curve, c.geometry.h);
  const auto path = out_dir(g, c) / "mesh.txt";
  save_mesh(path.string(), m);
  fmt::print("{}: {} nodes, {} triangles, {} boundary edges, h = {:.4g}, min angle {:.1f}°, area {:.10g}\n",
             path.string(), m.nodes.size(), m.triangles.size(), m.bedges.size(), m.h, m.min_angle_deg(), m.area());
  return 0;
}

int cmd_poiseuille(const Globals& g) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.geometry.h, curve);
  const auto f = solve_poiseuille(cs, c.nu);
  const auto dir = out_dir(g, c);
  write_text(dir / "poiseuille.csv", field_csv(cs->space(), f.values));
  fmt::print("Poiseuille flux {:.12g}\n", f.flux().real());
  if (const double R = disk_radius_of(c.geometry.curve); R > 0)
    fmt::print("disk closed form {:.12g}\n", DiskOracle(R, c.nu, 0.0).poiseuille_flux());
  return 0;
}

int cmd_womersley(const Globals& g, const std::vector<double>& omegas_in) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.geometry.h, curve);
  const auto dir = out_dir(g, c);
  const std::vector<double> omegas = omegas_in.empty() ? std::vector<double>{c.scan.omega} : omegas_in;
  std::string flux = "omega,re_flux,im_flux,residual\n";
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const auto sol = solve_womersley_mode(cs, c.nu, omegas[i]);
    const auto id = flux_identity_residual(sol, c.nu);
    write_text(dir / fmt::format("womersley_{}.csv", i), field_csv(cs->space(), sol.field.values));
    flux += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", omegas[i], sol.flux.real(), sol.flux.imag(), id.residual);
    fmt::print("ω = {:g}: flux ({:.10g}, {:.10g}), identity residual {:.2e}\n", omegas[i], sol.flux.real(),
               sol.flux.imag(), id.residual);
  }
  write_text(dir / "womersley_flux.csv", flux);
  return 0;
}

int cmd_pencil_scan(const Globals& g, const std::string& kind, std::optional<double> omega, bool coo) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.scan.h, curve);
  const double w = omega.value_or(c.scan.omega);
  StripScanConfig cfg;
  cfg.beta_max = c.scan.beta_max;
  cfg.n_beta = c.scan.n_beta;
  cfg.xi_max = c.scan.xi_max;
  cfg.n_xi = c.scan.n_xi;
  cfg.threshold = c.scan.threshold;
  cfg.threads = g.threads;
  PencilContext ctx;
  if (kind == "rigid") {
    ctx = assemble_rigid_pencil(cs, c.nu, w);
    cfg.exclusion_radius = 0.05;
  } else {
    ctx = assemble_elastic_pencil(cs, curve, c.nu, w, c.wall.material);
  }
  const auto dir = out_dir(g, c);
  const auto L = sigma_min_landscape(ctx, cfg);
  const auto rep = locate_eigenvalues_in_strip(ctx, L);
  const auto b = estimate_beta_star(L, &rep);
  std::ostringstream os;
  write_landscape_csv(os, L);
  write_text(dir / "landscape.csv", os.str());
  write_text(dir / "spectrum.json", spectrum_json(rep, L, b).dump(2) + "\n");
  if (coo) {
    std::ostringstream co;
    export_pencil_coo(ctx, co);
    write_text(dir / "pencil_coo.txt", co.str());
  }
  fmt::print("{} pencil, ω = {:g}: min σ_rel {:.3e}, {} eigenvalue(s), {} unresolved, β* ≈ {:g} ({})\n", kind, w,
             L.min(), rep.eigenvalues.size(), rep.unresolved.size(), b.beta_star, b.diagnostic);
  for (const auto& e : rep.eigenvalues)
    fmt::print("  λ = ({:.6g}, {:.6g}), residual {:.2e}, multiplicity {}\n", e.lambda.real(), e.lambda.imag(),
               e.residual, e.multiplicity);
  return 0;
}

int cmd_static_wall(const Globals& g, std::optional<double> p0_in, std::optional<double> p1_in) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.geometry.h, curve);
  const double p0 = p0_in.value_or(c.waveform.coeffs[0].real());
  const double p1 = p1_in.value_or(c.wall.p1);
  std::vector<double> s(c.wall.nodes);
  for (int i = 0; i < c.wall.nodes; ++i) s[i] = curve.length() * i / c.wall.nodes;
  const VecC dn = conormal_on_curve(solve_poiseuille(cs, c.nu), c.nu, 0.0, s);
  const auto w = static_wall_solve(p0, p1, VecR(dn.real()), c.wall.material, curve, c.wall.nodes);
  const auto hom = homogeneous_wall_solutions(c.wall.material, curve, c.wall.nodes);
  write_text(out_dir(g, c) / "wall_displacement.csv", wall_csv(w));
  fmt::print("b1 = {:.12g}, b2 = {:.12g}, α = {:.6g}, β = {:.6g}, residual {:.2e}\n", w.b1, w.b2, w.alpha,
             w.beta_wall, w.diagnostics.residual);
  fmt::print("homogeneous family: {}\n", hom.certificate_note);
  return 0;
}

int cmd_synthesize(const Globals& g) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.geometry.h, curve);
  const auto r = synthesize_rigid_periodic(cs, c.nu, c.waveform, c.time_samples, disk_radius_of(c.geometry.curve),
                                           g.threads);
  write_text(out_dir(g, c) / "flux_rigid.csv", flux_csv(r));
  for (const auto& m : r.modes)
    fmt::print("k = {}: Ψ_k = ({:.8g}, {:.8g}){}\n", m.k, m.flux.real(), m.flux.imag(), m.failed ? " FAILED: " + m.error : "");
  fmt::print("mean flux {:.10g}, peak-to-mean {:.4f}\n", r.mean, r.peak_to_mean);
  return 0;
}

int cmd_certify(const Globals& g) {
  const auto c = need_config(g);
  BoundaryCurve curve(Circle{1.0}, 64);
  const auto cs = build(c, c.scan.h, curve);
  CertifyOptions opt;
  opt.xi_max = c.scan.xi_max;
  opt.n_xi = c.scan.n_xi;
  opt.threshold = c.scan.threshold;
  opt.n_t = c.time_samples;
  opt.wall_nodes = c.wall.nodes;
  opt.p1 = c.wall.p1;
  opt.threads = g.threads;
  const auto cert = certify_elastic_rigidity(cs, curve, c.nu, c.wall.material, c.waveform, opt);
  const auto dir = out_dir(g, c);
  write_text(dir / "certificate.csv", certificate_csv(cert));
  write_text(dir / "flux_elastic.csv", flux_csv(cert.flow));
  write_text(dir / "wall_displacement.csv", wall_csv(*cert.wall));
  for (std::size_t i = 0; i < cert.harmonics.size(); ++i)
    fmt::print("k = {}: min σ_rel = {:.3e}\n", cert.harmonics[i], cert.margins[i]);
  for (const auto& f : cert.failures) fmt::print("  failure at k = {}, ξ = {:g}: σ = {:.3e}\n", f.k, f.xi, f.sigma_min);
  fmt::print("{}\n", cert.note);
  return cert.passed ? 0 : 3;
}

int cmd_compare(const Globals& g) {
  const auto c = need_config(g);
  const auto r = run_experiment(c, g.out, g.threads, parse_seed(g.seed));
  for (const auto& a : r.artifacts) fmt::print("wrote {}\n", a);
  fmt::print("rigid: mean flux {:.10g}, peak-to-mean {:.4f}\n", r.rigid.mean, r.rigid.peak_to_mean);
  if (r.elastic)
    fmt::print("elastic: certificate {}, constant flux {:.10g}\n", r.elastic->passed ? "passed" : "FAILED",
               r.elastic->flow.mean);
  if (!r.ok) fmt::print(stderr, "error: {}\n", r.message);
  return r.ok ? 0 : (r.elastic && !r.elastic->passed ? 3 : 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modal flow solver for straight vessels with rigid or elastic walls"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may also follow the verb
  Globals g;
  app.add_option("--config", g.config, "experiment configuration (INI)");
  app.add_option("--out", g.out, "output directory (overrides [output] dir)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "random seed (hex)");

  auto* mesh = app.add_subcommand("mesh", "mesh the cross-section and write it");
  auto* pois = app.add_subcommand("poiseuille", "steady axial flow");
  auto* wom = app.add_subcommand("womersley", "oscillatory axial modes");
  std::vector<double> omegas;
  wom->add_option("--omega", omegas, "angular frequencies");
  auto* scan = app.add_subcommand("pencil-scan", "σ_min landscape and eigenvalues of a pencil");
  std::string kind = "rigid";
  std::optional<double> scan_omega;
  bool coo = false;
  scan->add_option("--kind", kind, "rigid or elastic")->check(CLI::IsMember({"rigid", "elastic"}));
  scan->add_option("--omega", scan_omega, "angular frequency (default [scan] omega)");
  scan->add_flag("--coo", coo, "also export A0, A1, A2 in coordinate format");
  auto* wall = app.add_subcommand("static-wall", "steady wall displacement");
  std::optional<double> p0, p1;
  wall->add_option("--p0", p0, "axial pressure gradient (default p*_0)");
  wall->add_option("--p1", p1, "pressure offset (default [wall] p1)");
  auto* syn = app.add_subcommand("synthesize", "rigid-wall periodic flow from the waveform");
  auto* cert = app.add_subcommand("certify", "elastic-wall certificate");
  auto* cmp = app.add_subcommand("compare", "full rigid versus elastic experiment");

  CLI11_PARSE(app, argc, argv);
  try {
    parse_seed(g.seed);
    if (*mesh) return cmd_mesh(g);
    if (*pois) return cmd_poiseuille(g);
    if (*wom) return cmd_womersley(g, omegas);
    if (*scan) return cmd_pencil_scan(g, kind, scan_omega, coo);
    if (*wall) return cmd_static_wall(g, p0, p1);
    if (*syn) return cmd_synthesize(g);
    if (*cert) return cmd_certify(g);
    if (*cmp) return cmd_compare(g);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.kind() == ErrorKind::config ? 2 : 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
