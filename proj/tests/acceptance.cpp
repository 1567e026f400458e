// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "support.hpp"
#include "wall_reference.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <iostream>
#include <set>

using namespace vesselmode;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  // Records a measured quantity; the criterion fails if any check does.
  void check(bool ok, const std::string& what) {
    notes.push_back((ok ? "" : "!") + what);
    pass = pass && ok;
  }
};

std::string g(double x) { return fmt::format("{:.3g}", x); }

double cosine(const VecC& a, const VecC& b) { return std::abs(a.dot(b)) / (a.norm() * b.norm()); }

double max_abs(const SpMatC& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMatC::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

// -- 1 ----------------------------------------------------------------------

Outcome poiseuille_oracle() {
  Outcome o;
  const DiskOracle exact(1.0, 1.0, 0.0);
  std::vector<double> l2;
  for (double h : {0.2, 0.1, 0.05}) {
    const auto cs = fixtures::disk(h);
    const auto v = solve_poiseuille(cs, 1.0);
    l2.push_back(l2_error(cs->space(), v.values, [&](const Vec2& x) { return exact.poiseuille(x.norm()); }));
    if (h == 0.05) {
      const auto& X = cs->space().nodes();
      double err = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < X.size(); ++i) {
        const double e = exact.poiseuille(X[i].norm());
        err = std::max(err, std::abs(v.values[i] - e));
        ref = std::max(ref, std::abs(e));
      }
      o.check(err / ref < 2e-3, "Linf rel " + g(err / ref));
      const double flux = flux_of(v).real();
      const double rel = std::abs(flux / (-pi / 8.0) - 1.0);
      o.check(rel < 5e-3, "flux rel " + g(rel));
    }
  }
  const double p1 = std::log2(l2[0] / l2[1]), p2 = std::log2(l2[1] / l2[2]);
  o.check(std::min(p1, p2) >= 1.9, "orders " + g(p1) + ", " + g(p2));
  return o;
}

// -- 2, 3 -------------------------------------------------------------------

Outcome womersley_oracle(bool identity_only) {
  Outcome o;
  const auto cs = fixtures::disk(0.05);
  const VecC zero = VecC::Zero(cs->space().size());
  for (double w : {1.0, 10.0}) {
    const DiskOracle exact(1.0, 1.0, w);
    const auto sol = solve_womersley_mode(cs, 1.0, w);
    const std::string tag = "omega=" + g(w) + " ";
    if (identity_only) {
      const double r = flux_identity_residual(sol, 1.0).residual;
      o.check(r < 1e-10, tag + "identity " + g(r));
      continue;
    }
    auto ref = [&](const Vec2& x) { return exact.womersley(x.norm()); };
    const double rel = l2_error(cs->space(), sol.field.values, ref) / l2_error(cs->space(), zero, ref);
    o.check(rel < 1e-3, tag + "L2 rel " + g(rel));
    const double frel = std::abs(sol.flux - exact.womersley_flux()) / std::abs(exact.womersley_flux());
    o.check(frel < 1e-3, tag + "flux rel " + g(frel));
  }
  return o;
}

// -- 4 ----------------------------------------------------------------------

Outcome rigid_spectrum() {
  Outcome o;
  const PencilContext c = assemble_rigid_pencil(fixtures::disk(0.2), 1.0, 1.0);
  StripScanConfig cfg;  // 11 × 41 grid over [−0.5, 0.5] × [−5, 5]
  cfg.threshold = 1e-4;
  cfg.exclusion_radius = 0.05;
  const auto L = sigma_min_landscape(c, cfg);
  const auto rep = locate_eigenvalues_in_strip(c, L);
  o.check(rep.candidates.size() == 1 && rep.eigenvalues.size() == 1 && rep.unresolved.empty(),
          fmt::format("{} minima below threshold", rep.candidates.size()));
  if (rep.eigenvalues.size() != 1) return o;
  const auto& e = rep.eigenvalues[0];
  o.check(std::abs(e.lambda) < 1e-4, "|lambda| " + g(std::abs(e.lambda)));
  VecC p = VecC::Zero(e.vector.size());
  p.segment(c.layout.off_p(), c.layout.nv).setOnes();
  const double cs = cosine(e.vector, p);
  o.check(cs > 0.999, "cos(kernel, const p) " + fmt::format("{:.6f}", cs));
  const double b = estimate_beta_star(L, &rep).beta_star;
  o.check(b > 0.0, "beta* " + g(b));
  return o;
}

// -- 5 ----------------------------------------------------------------------

Outcome elastic_regularity() {
  Outcome o;
  const auto cs = fixtures::disk(0.2);
  for (double w : {2.0 * pi, 4.0 * pi}) {
    const auto c = assemble_elastic_pencil(cs, fixtures::unit_circle(), 1.0, w, WallMaterial::default_demo());
    const auto L = sigma_min_landscape(c, StripScanConfig::axis(32.0, 129, 1e-6));
    const auto rep = locate_eigenvalues_in_strip(c, L);
    const std::string tag = "omega=" + g(w) + " ";
    o.check(L.min() > 1e-6, tag + "min sigma_rel " + g(L.min()));
    o.check(rep.candidates.empty(), tag + fmt::format("{} candidates", rep.candidates.size()));
  }
  return o;
}

// -- 6 ----------------------------------------------------------------------

// ‖f‖₀ + ‖g₂‖₀ + ‖g₃‖₀ + |ξ|^{1/2}‖g₁‖₀ written out with explicit loops.
double data_norm_by_hand(const PencilContext& c, const ModalRhs& r, double xi) {
  const SpMatR& M = c.cs->ops().M;
  double f2 = 0.0;
  for (const auto& f : r.f) {
    if (!f.size()) continue;
    const VecC Mf = M.cast<cplx>() * f;
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) acc += std::conj(f[i]) * Mf[i];
    f2 += acc.real();
  }
  const double w = c.wall->weight();
  auto gn = [&](const VecC& v) {
    if (!v.size()) return 0.0;
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::norm(v[i]);
    return std::sqrt(w * s);
  };
  return std::sqrt(std::max(0.0, f2)) + gn(r.g[1]) + gn(r.g[2]) + std::sqrt(std::abs(xi)) * gn(r.g[0]);
}

Outcome resolvent_scaling() {
  Outcome o;
  const auto c = assemble_elastic_pencil(fixtures::disk(0.2), fixtures::unit_circle(), 1.0, 1.0,
                                         WallMaterial::default_demo());
  const int n = c.cs->space().size(), nt = c.layout.nt;
  ModalRhs load;
  load.g = {VecC::Zero(nt), VecC::Ones(nt), VecC::Ones(nt)};
  const auto probe = resolvent_scaling_probe(c, {8.0, 16.0, 32.0}, load);
  o.check(probe.slope_v >= -2.4 && probe.slope_v <= -1.6, "slope " + g(probe.slope_v));

  std::vector<std::pair<ModalRhs, double>> inputs(3);
  inputs[0].first.g = {VecC::Ones(nt), VecC::Zero(nt), VecC::Zero(nt)};
  inputs[0].second = 16.0;
  inputs[1].first.g = {VecC::Constant(nt, cplx(0.5, -1.0)), VecC::Constant(nt, 2.0), VecC::Constant(nt, cplx(0.0, 3.0))};
  inputs[1].second = -9.0;
  inputs[2].first.f = {interpolate<cplx>(c.cs->space(), [](const Vec2& x) { return cplx(x.x(), x.y()); }),
                       VecC::Zero(n), VecC::Constant(n, cplx(1.0, 0.25))};
  inputs[2].first.g = {VecC::LinSpaced(nt, 0.0, 1.0), VecC::Zero(nt), VecC::LinSpaced(nt, -1.0, 1.0)};
  inputs[2].second = 8.0;
  int same = 0;
  for (const auto& [rhs, xi] : inputs) same += data_norm(c, rhs, xi) == data_norm_by_hand(c, rhs, xi);
  o.check(same == 3, fmt::format("N bit-identical on {}/3 inputs", same));
  return o;
}

// -- 7 ----------------------------------------------------------------------

Outcome static_wall() {
  Outcome o;
  const double R = 1.5, k = 2.0, h = 0.5, rho_b = 1.2, p1 = -0.8;
  Mat3 Q = Mat3::Zero();
  Q.diagonal() << 3.0, 0.7, 1.9;
  const double sigma = rho_b / h;
  const WallMaterial mat = WallMaterial::constant(Q, 1.0, k, h, rho_b);
  const BoundaryCurve circle(Circle{R}, 512);
  const int N = 128;
  const auto sol = static_wall_solve(0.0, p1, VecR::Zero(N), mat, circle, N);
  const double b1 = sigma * p1 * R * Q(0, 0) / (k * R * R + Q(0, 0));
  const double U1 = -sigma * p1 * R * R / (k * R * R + Q(0, 0));
  const double e = std::max({std::abs(sol.b1 - b1), std::abs(sol.b2),
                             (sol.u[0].col(0) - VecR::Constant(N, U1)).cwiseAbs().maxCoeff()});
  o.check(e < 1e-10, "closed form " + g(e));
  o.check(sol.diagnostics.residual < 1e-8, "residual " + g(sol.diagnostics.residual));

  const auto s64 = static_wall_solve(0.0, p1, VecR::Zero(64), mat, circle, 64);
  const double d = (s64.u[0] - fixtures::brute_force_static(s64.grid, p1)).cwiseAbs().maxCoeff();
  o.check(d < 1e-6, "brute force (64 nodes) " + g(d));

  const auto hom = homogeneous_wall_solutions(mat, circle, N);
  const bool zero = hom.layer_solution.head<2>().isZero(0.0) && hom.b1 == 0.0 && hom.b2 == 0.0;
  o.check(hom.certificate && zero, hom.certificate ? "collapse certificate issued" : hom.certificate_note);
  return o;
}

// -- 8 ----------------------------------------------------------------------

Outcome headline(const fs::path& configs) {
  Outcome o;
  const auto cfg = load_config((configs / "disk-rigid-vs-elastic.ini").string());
  const fs::path out = fs::temp_directory_path() / "vesselmode_acceptance";
  const auto res = run_experiment(cfg, out.string(), 1, 0x5EED);
  o.check(res.ok, res.ok ? "run ok" : "run failed: " + res.message);
  double worst = 0.0;
  for (const auto& m : res.rigid.modes)
    worst = std::max(worst, m.failed ? 1.0 : std::abs(m.flux - m.oracle_flux) / std::abs(m.oracle_flux));
  o.check(res.rigid.modes.size() == 6 && worst < 1e-2, "worst harmonic rel " + g(worst));
  o.check(res.rigid.peak_to_mean > 1.05, "peak/mean " + g(res.rigid.peak_to_mean));
  if (!res.elastic) {
    o.check(false, "no elastic certificate");
    return o;
  }
  const auto& cert = *res.elastic;
  double margin = std::numeric_limits<double>::infinity();
  for (double m : cert.margins) margin = std::min(margin, m);
  o.check(cert.passed && cert.harmonics.size() == 5, fmt::format("certificate over {} harmonics, min margin {}",
                                                                 cert.harmonics.size(), g(margin)));
  const double exact = cfg.waveform.coeffs[0].real() * (-pi / (8.0 * cfg.nu));
  const double rel = std::abs(cert.flow.mean / exact - 1.0);
  o.check(rel < 5e-3 && cert.flow.variance == 0.0, "elastic flux rel " + g(rel));
  return o;
}

// -- 9 ----------------------------------------------------------------------

Outcome manufactured(const PencilContext& c) {
  Outcome o;
  const auto& V = c.cs->space();
  const auto& L = c.layout;
  std::array<VecC, 3> v;
  for (int a = 0; a < 3; ++a)
    v[a] = interpolate<cplx>(V, [a](const Vec2& x) { return cplx(std::cos(x.x() + a), 0.3 * x.y() * (a + 1)); });
  WallDisplacementField u{VecC(L.nt), VecC(L.nt), VecC(L.nt)};
  const cplx iw(0.0, c.omega);
  for (int k = 0; k < L.nt; ++k) {
    const double s = V.trace_s()[k];
    u.u1[k] = cplx(std::cos(s), 0.2);
    u.u2[k] = cplx(0.0, std::sin(2.0 * s));
    u.u3[k] = 0.5 * std::cos(s);
    const int gi = V.trace()[k];
    v[0][gi] = iw * (c.trace_n[k].x() * u.u1[k] + c.trace_t[k].x() * u.u2[k]);
    v[1][gi] = iw * (c.trace_n[k].y() * u.u1[k] + c.trace_t[k].y() * u.u2[k]);
    v[2][gi] = iw * u.u3[k];
  }
  const VecC x = pack_state(c, v, u, VecC::LinSpaced(L.nv, -1.0, 1.0));
  const SpMatC A = c.evaluate(cplx(0.1, 1.2));
  DirectSolver<cplx> lu;
  lu.factorize(A);
  const double e = (lu.solve(A * x, nullptr, 1e-14, 4) - x).norm() / x.norm();
  o.check(e < 1e-8, "manufactured " + g(e));
  return o;
}

Outcome structural() {
  Outcome o;
  Mat3 Q;
  Q << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.2;
  for (const auto& [name, desc, curve] :
       {std::tuple<std::string, CurveDescriptor, const BoundaryCurve*>{"circle", Circle{1.0}, &fixtures::unit_circle()},
        {"ellipse", Ellipse{2.0, 1.0}, &fixtures::ellipse21()}}) {
    auto check = [&](bool ok, const std::string& what) { o.check(ok, name + " " + what); };
    const double turn = total_curvature(*curve) / (-2.0 * pi);
    check(std::abs(turn - 1.0) < 1e-6, "turning " + fmt::format("{:.8f}", turn));
    const RankCheck rank = rigid_motion_rank_check(*curve);
    check(rank.min_singular_value > 0.0 && !rank.violation, "rank " + g(rank.min_singular_value));

    const auto cs = fixtures::cached_section(desc, 0.2);
    const auto p = assemble_elastic_pencil(cs, *curve, 0.5, 2.0, WallMaterial::default_demo());
    const auto m = assemble_elastic_pencil(cs, *curve, 0.5, -2.0, WallMaterial::default_demo());
    const cplx lam(0.3, -0.7);
    const double sym = max_abs(SpMatC(m.evaluate(std::conj(lam)) - SpMatC(p.evaluate(lam).conjugate()))) /
                       max_abs(p.evaluate(lam));
    const auto wp = solve_womersley_mode(cs, 0.5, 3.0), wm = solve_womersley_mode(cs, 0.5, -3.0);
    const double wsym = (wm.field.values - wp.field.values.conjugate()).cwiseAbs().maxCoeff();
    check(sym < 1e-12 && wsym < 1e-12, "conjugation " + g(std::max(sym, wsym)));

    const WallGrid grid = make_wall_grid(*curve, WallMaterial::constant(Q, 1, 1, 1), 64);
    const WallFormMatrices wf = wall_form_matrices(grid);
    double herm = 0.0;
    for (double xi : {0.5, 2.0, 7.0}) {
      const cplx l(0.0, xi);
      const MatC A = wf.A0.cast<cplx>() + l * wf.A1.cast<cplx>() + l * l * wf.A2.cast<cplx>();
      herm = std::max(herm, (A - A.adjoint()).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff());
    }
    check(herm < 1e-12, "hermitian wall form " + g(herm));

    double c1 = std::numeric_limits<double>::infinity();
    for (double xi : {0.5, 2.0, 8.0}) c1 = std::min(c1, wall_coercivity_probe(grid, xi, 100).c1);
    const auto rep = coercivity_probe(p, 2.0, 100);
    const double korn = *std::min_element(rep.korn_trace_constant.begin(), rep.korn_trace_constant.end());
    const double beta = inf_sup_constant(cs);
    check(c1 > 0 && rep.c_measured > 0 && korn > 0 && beta > 0,
          "coercivity " + g(c1) + ", " + g(rep.c_measured) + ", korn " + g(korn) + ", inf-sup " + g(beta));

    for (auto& note : manufactured(p).notes) {
      check(note[0] != '!', note[0] == '!' ? note.substr(1) : note);
    }
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vesselmode acceptance run"};
  std::string configs = "configs";
  std::vector<int> only;
  app.add_option("--configs", configs, "directory holding the bundled configs")->check(CLI::ExistingDirectory);
  app.add_option("--only", only, "run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Poiseuille oracle", poiseuille_oracle},
      {"Womersley oracle", [] { return womersley_oracle(false); }},
      {"flux identity", [] { return womersley_oracle(true); }},
      {"rigid pencil spectrum", rigid_spectrum},
      {"elastic pencil regularity", elastic_regularity},
      {"resolvent scaling", resolvent_scaling},
      {"static wall closed form", static_wall},
      {"rigid vs elastic experiment", [&] { return headline(configs); }},
      {"structural invariants", structural},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : r.notes) detail += (detail.empty() ? "" : "; ") + n;
    fmt::print("[{}] criterion {}: {} ({}) [{:.1f} s]\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first, detail, secs);
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed ? 1 : 0;
}
