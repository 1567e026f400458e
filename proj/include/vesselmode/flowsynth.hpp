#pragma once

#include <vesselmode/bessel.hpp>
#include <vesselmode/spectral_analysis.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <unsupported/Eigen/FFT>

#include <filesystem>
#include <set>

namespace vesselmode {

// ---------------------------------------------------------------------------
// Waveforms

struct PressureWaveform {
  double period = 1.0;
  std::vector<cplx> coeffs;  // p*_k for k = 0..K; p*_{−k} = conj(p*_k)
  std::string description;

  int k_max() const { return int(coeffs.size()) - 1; }
  double omega(int k) const { return 2.0 * pi * k / period; }
  cplx coeff(int k) const {
    if (std::abs(k) > k_max()) return 0.0;
    return k >= 0 ? coeffs[k] : std::conj(coeffs[-k]);
  }
  double sample(double t) const {
    double v = coeffs.empty() ? 0.0 : coeffs[0].real();
    for (int k = 1; k <= k_max(); ++k) v += 2.0 * (coeffs[k] * std::exp(cplx(0.0, omega(k) * t))).real();
    return v;
  }
  void validate() const {
    if (!(period > 0)) throw Error(ErrorKind::domain, "waveform period must be positive");
    if (coeffs.empty()) throw Error(ErrorKind::domain, "waveform needs at least the mean coefficient");
    if (std::abs(coeffs[0].imag()) > 1e-12 * (1.0 + std::abs(coeffs[0])))
      throw Error(ErrorKind::domain, "p*_0 must be real for a real signal");
  }
};

struct WaveformDecomposition {
  PressureWaveform waveform;
  double leakage = 0.0;  // energy above K_max relative to the total
  std::string warning;
};

// Uniform samples t_j = jΛ/n over one period; c_k = (1/n)Σ x_j e^{−2πikj/n}.
inline WaveformDecomposition decompose_waveform(const std::vector<double>& samples, double period, int k_max) {
  const int n = int(samples.size());
  if (k_max < 0) throw Error(ErrorKind::domain, "K_max must be non-negative");
  if (n < 2 * k_max + 1) throw Error(ErrorKind::domain, "need at least 2K_max+1 samples per period");
  if (!(period > 0)) throw Error(ErrorKind::domain, "waveform period must be positive");
  Eigen::FFT<double> fft;
  std::vector<cplx> spec;
  fft.fwd(spec, samples);
  WaveformDecomposition d;
  d.waveform.period = period;
  d.waveform.coeffs.resize(k_max + 1);
  for (int k = 0; k <= k_max; ++k) d.waveform.coeffs[k] = spec[k] / double(n);
  d.waveform.coeffs[0] = d.waveform.coeffs[0].real();
  double total = 0.0, kept = 0.0;
  for (int k = 0; k < n; ++k) {
    const double e = std::norm(spec[k]);
    total += e;
    const int kk = k <= n / 2 ? k : n - k;
    if (kk <= k_max) kept += e;
  }
  d.leakage = total > 0 ? (total - kept) / total : 0.0;
  if (d.leakage > 0.01)
    d.warning = fmt::format("aliasing: {:.3g}% of the signal energy lies above K_max = {}", 100.0 * d.leakage, k_max);
  d.waveform.description = fmt::format("decomposed from {} samples", n);
  return d;
}

// ---------------------------------------------------------------------------
// Rigid-wall periodic flow

struct HarmonicFlux {
  int k = 0;
  double omega = 0.0;
  cplx p_star{0.0};
  cplx flux{0.0};         // Ψ_k
  cplx oracle_flux{0.0};  // disk closed form, when available
  double identity_residual = 0.0;
  bool failed = false;
  std::string error;
};

struct PeriodicFlowReport {
  std::vector<HarmonicFlux> modes;
  std::vector<double> t, psi;
  double max_imag = 0.0;  // largest imaginary part of the explicit ±k sum
  double mean = 0.0, peak_to_mean = 0.0, variance = 0.0;
  std::string note;
};

inline void fill_time_series(PeriodicFlowReport& r, double period, int n_t) {
  r.t.resize(n_t);
  r.psi.resize(n_t);
  r.max_imag = 0.0;
  for (int j = 0; j < n_t; ++j) {
    const double t = period * j / n_t;
    cplx acc = 0.0;
    for (const auto& m : r.modes) {
      const cplx e = std::exp(cplx(0.0, m.omega * t));
      acc += m.flux * e;
      if (m.k > 0) acc += std::conj(m.flux) * std::conj(e);
    }
    r.t[j] = t;
    r.psi[j] = acc.real();
    r.max_imag = std::max(r.max_imag, std::abs(acc.imag()));
  }
  r.mean = std::accumulate(r.psi.begin(), r.psi.end(), 0.0) / n_t;
  double var = 0.0;
  for (double p : r.psi) var += (p - r.mean) * (p - r.mean);
  r.variance = var / n_t;
  const double peak = *std::max_element(r.psi.begin(), r.psi.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  r.peak_to_mean = r.mean != 0.0 ? std::abs(peak) / std::abs(r.mean) : 0.0;
}

// Mode k: p*_k times the Womersley profile at ω_k (k = 0: Poiseuille).
// `disk_radius` > 0 also records the closed-form flux per harmonic.
inline PeriodicFlowReport synthesize_rigid_periodic(const CrossSectionPtr& cs, double nu, const PressureWaveform& w,
                                                    int n_t = 256, double disk_radius = 0.0, unsigned threads = 1) {
  w.validate();
  PeriodicFlowReport r;
  r.modes.resize(w.k_max() + 1);
  parallel_for(r.modes.size(), threads, [&](std::size_t i) {
    const int k = int(i);
    HarmonicFlux& m = r.modes[i];
    m.k = k;
    m.omega = w.omega(k);
    m.p_star = w.coeff(k);
    try {
      if (k == 0) {
        m.flux = m.p_star * solve_poiseuille(cs, nu).flux();
        if (disk_radius > 0) m.oracle_flux = m.p_star * DiskOracle(disk_radius, nu, 0.0).poiseuille_flux();
      } else {
        const auto sol = solve_womersley_mode(cs, nu, m.omega);
        m.flux = m.p_star * sol.flux;
        m.identity_residual = flux_identity_residual(sol, nu).residual;
        if (disk_radius > 0) m.oracle_flux = m.p_star * DiskOracle(disk_radius, nu, m.omega).womersley_flux();
      }
    } catch (const std::exception& e) {
      m.failed = true;
      m.error = e.what();
    }
  });
  fill_time_series(r, w.period, n_t);
  r.note = "rigid periodic flows form a family parameterized by the pressure waveform; this is one member";
  return r;
}

// ---------------------------------------------------------------------------
// Elastic-wall certificate

struct CertificateRow {
  int k = 0;
  double omega = 0.0, xi = 0.0, sigma_min = 0.0;
};

struct ElasticCertificate {
  std::vector<CertificateRow> rows;
  std::vector<CertificateRow> failures;
  std::vector<int> harmonics;
  std::vector<double> margins;  // min σ_rel per harmonic
  double threshold = 1e-6;
  bool passed = false;
  PeriodicFlowReport flow;  // constant flux
  std::optional<StaticWallSolution> wall;
  cplx poiseuille_flux{0.0};
  std::string note;
};

struct CertifyOptions {
  double xi_max = 32.0;
  int n_xi = 129;
  double threshold = 1e-6;
  int n_t = 256;
  int wall_nodes = 256;
  double p1 = 0.0;
  unsigned threads = 1;
};

inline ElasticCertificate certify_elastic_rigidity(const CrossSectionPtr& cs, const BoundaryCurve& curve, double nu,
                                                   const WallMaterial& material, const PressureWaveform& w,
                                                   const CertifyOptions& opt = {}) {
  w.validate();
  std::vector<double> s_check(opt.wall_nodes);
  for (int i = 0; i < opt.wall_nodes; ++i) s_check[i] = curve.length() * i / opt.wall_nodes;
  material.validate(s_check);
  ElasticCertificate cert;
  cert.threshold = opt.threshold;
  for (int k = 1; k <= w.k_max(); ++k)
    if (std::abs(w.coeffs[k]) > 0) cert.harmonics.push_back(k);
  // negative k follow by conjugation: σ(Θ(−iξ; −ω)) = σ(Θ(iξ; ω)) on a symmetric ξ window
  std::vector<SigmaLandscape> scans(cert.harmonics.size());
  for (std::size_t i = 0; i < cert.harmonics.size(); ++i) {
    const PencilContext ctx = assemble_elastic_pencil(cs, curve, nu, w.omega(cert.harmonics[i]), material);
    StripScanConfig cfg = StripScanConfig::axis(opt.xi_max, opt.n_xi, opt.threshold);
    cfg.threads = opt.threads;
    scans[i] = sigma_min_landscape(ctx, cfg);
  }
  cert.passed = true;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const int k = cert.harmonics[i];
    double m = std::numeric_limits<double>::infinity();
    for (int j = 0; j < scans[i].cfg.n_xi; ++j) {
      CertificateRow row{k, w.omega(k), scans[i].cfg.xi_at(j), scans[i].sigma(0, j)};
      cert.rows.push_back(row);
      m = std::min(m, row.sigma_min);
      if (!(row.sigma_min > opt.threshold) || scans[i].is_flagged(0, j)) {
        cert.failures.push_back(row);
        cert.passed = false;
      }
    }
    cert.margins.push_back(m);
  }

  const ComplexScalarField vstar = solve_poiseuille(cs, nu);
  cert.poiseuille_flux = vstar.flux();
  const double p0 = w.coeffs[0].real();
  HarmonicFlux mean;
  mean.p_star = p0;
  mean.flux = p0 * cert.poiseuille_flux;
  cert.flow.modes = {mean};
  fill_time_series(cert.flow, w.period, opt.n_t);
  // the flux is p*_0 times a constant: zero variance by construction
  cert.flow.variance = 0.0;
  cert.flow.peak_to_mean = p0 != 0.0 ? 1.0 : 0.0;

  const VecC dn = conormal_on_curve(vstar, nu, 0.0, s_check);
  cert.wall = static_wall_solve(p0, opt.p1, VecR(dn.real()), material, curve, opt.wall_nodes);
  cert.note = cert.passed ? "windowed discrete certificate passed for every driven harmonic"
                          : "certificate FAILED; the constant-flux conclusion does not follow";
  return cert;
}

// ---------------------------------------------------------------------------
// Configuration

struct GeometryConfig {
  CurveDescriptor curve = Circle{1.0};
  double h = 0.1;
  int boundary_nodes = 1024;
};

struct WallConfig {
  bool elastic = true;
  WallMaterial material = WallMaterial::default_demo();
  int nodes = 256;
  double p1 = 0.0;
};

struct ScanConfig {
  double xi_max = 32.0;
  int n_xi = 129;
  double beta_max = 0.5;
  int n_beta = 11;
  double threshold = 1e-6;
  double omega = 1.0;
  double h = 0.2;  // mesh for pencil scans
};

struct ExperimentConfig {
  std::string source;  // file path
  std::string units;
  GeometryConfig geometry;
  double nu = 0.04;
  WallConfig wall;
  PressureWaveform waveform;
  ScanConfig scan;
  std::string output_dir = "out";
  int time_samples = 256;
};

namespace detail {

class IniFile {
 public:
  IniFile(const std::string& path) : path_(path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    text_ = ss.str();
    std::istringstream in(text_);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto a = line.find_first_not_of(" \t");
      if (a == std::string::npos || line[a] == ';' || line[a] == '#') continue;
      if (line[a] == '[') {
        const auto b = line.find(']', a);
        section = line.substr(a + 1, b - a - 1);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(a, eq - a);
      key.erase(key.find_last_not_of(" \t") + 1);
      lines_[section.empty() ? key : section + "." + key] = n;
    }
    try {
      std::istringstream is(text_);
      boost::property_tree::ini_parser::read_ini(is, tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw Error(ErrorKind::config, fmt::format("{}:{}: {}", path, e.line(), e.message()));
    }
  }

  const std::string& text() const { return text_; }
  bool has(const std::string& key) const { return bool(tree_.get_optional<std::string>(key)); }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    auto it = lines_.find(key);
    const std::string where = it != lines_.end() ? fmt::format("{}:{}", path_, it->second) : path_;
    throw Error(ErrorKind::config, fmt::format("{}: {}: {}", where, key, msg));
  }

  std::string str(const std::string& key, const std::string& def) const {
    auto v = tree_.get_optional<std::string>(key);
    return v ? trim(*v) : def;
  }
  std::string required(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(key);
    if (!v || trim(*v).empty()) fail(key, "required key is missing");
    return trim(*v);
  }
  double num(const std::string& key, double def, bool positive = false) const {
    if (!has(key)) return def;
    const std::string s = str(key, "");
    double v = 0.0;
    try {
      std::size_t pos = 0;
      v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + s + "'");
    }
    if (positive && !(v > 0)) fail(key, "must be positive");
    return v;
  }
  int integer(const std::string& key, int def, int min_value) const {
    const double v = num(key, def);
    if (v != std::floor(v) || v < min_value) fail(key, fmt::format("expected an integer ≥ {}", min_value));
    return int(v);
  }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::string s = str(key, "");
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        fail(key, "bad list entry '" + tok + "'");
      }
    }
    return out;
  }
  void check_known(const std::set<std::string>& known) const {
    for (const auto& [k, line] : lines_)
      if (!known.count(k)) fail(k, "unknown key");
  }

 private:
  static std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\""));
    s.erase(s.find_last_not_of(" \t\"") + 1);
    return s;
  }
  std::string path_, text_;
  boost::property_tree::ptree tree_;
  std::map<std::string, int> lines_;
};

}  // namespace detail

inline ExperimentConfig load_config(const std::string& path) {
  const detail::IniFile ini(path);
  ini.check_known({"units",
                   "geometry.shape", "geometry.radius", "geometry.a", "geometry.b", "geometry.r0", "geometry.cos",
                   "geometry.sin", "geometry.h", "geometry.boundary_nodes",
                   "fluid.nu",
                   "wall.model", "wall.Q", "wall.rho", "wall.k", "wall.thickness", "wall.rho_b", "wall.table",
                   "wall.nodes", "wall.p1",
                   "waveform.period", "waveform.re", "waveform.im", "waveform.csv", "waveform.k_max",
                   "scan.xi_max", "scan.n_xi", "scan.beta_max", "scan.n_beta", "scan.threshold", "scan.omega",
                   "scan.h",
                   "output.dir", "output.time_samples"});
  ExperimentConfig c;
  c.source = path;
  c.units = ini.required("units");

  const std::string shape = ini.str("geometry.shape", "circle");
  if (shape == "circle") {
    c.geometry.curve = Circle{ini.num("geometry.radius", 1.0, true)};
  } else if (shape == "ellipse") {
    c.geometry.curve = Ellipse{ini.num("geometry.a", 1.0, true), ini.num("geometry.b", 1.0, true)};
  } else if (shape == "star") {
    c.geometry.curve = StarCurve{ini.num("geometry.r0", 1.0, true), ini.list("geometry.cos"), ini.list("geometry.sin")};
  } else {
    ini.fail("geometry.shape", "expected circle, ellipse or star, got '" + shape + "'");
  }
  c.geometry.h = ini.num("geometry.h", 0.1, true);
  c.geometry.boundary_nodes = ini.integer("geometry.boundary_nodes", 1024, 64);
  c.nu = ini.num("fluid.nu", 0.04, true);

  const std::string model = ini.str("wall.model", "elastic");
  if (model != "elastic" && model != "rigid") ini.fail("wall.model", "expected elastic or rigid");
  c.wall.elastic = model == "elastic";
  const double rho_b = ini.num("wall.rho_b", 1.0, true);
  const BoundaryCurve curve(c.geometry.curve, std::size_t(c.geometry.boundary_nodes));
  if (ini.has("wall.table")) {
    std::filesystem::path tp = ini.str("wall.table", "");
    if (tp.is_relative()) tp = std::filesystem::path(path).parent_path() / tp;
    // table rows are indexed by arclength, one period = |γ|
    c.wall.material = WallMaterial::load_csv(tp.string(), curve.length(), rho_b);
  } else {
    Mat3 Q = Mat3::Identity();
    if (ini.has("wall.Q")) {
      const auto q = ini.list("wall.Q");
      if (q.size() != 9) ini.fail("wall.Q", "expected 9 entries (row-major 3×3)");
      for (int i = 0; i < 9; ++i) Q(i / 3, i % 3) = q[i];
    }
    c.wall.material = WallMaterial::constant(Q, ini.num("wall.rho", 1.0, true), ini.num("wall.k", 1.0),
                                             ini.num("wall.thickness", 1.0, true), rho_b);
  }
  try {
    std::vector<double> s_check(256);
    for (int i = 0; i < 256; ++i) s_check[i] = curve.length() * i / 256;
    c.wall.material.validate(s_check);
  } catch (const Error& e) {
    ini.fail(ini.has("wall.table") ? "wall.table" : "wall.Q", e.what());
  }
  c.wall.nodes = ini.integer("wall.nodes", 256, 16);
  c.wall.p1 = ini.num("wall.p1", 0.0);

  c.waveform.period = ini.num("waveform.period", 1.0, true);
  if (ini.has("waveform.csv")) {
    std::filesystem::path wp = ini.str("waveform.csv", "");
    if (wp.is_relative()) wp = std::filesystem::path(path).parent_path() / wp;
    std::ifstream f(wp);
    if (!f) ini.fail("waveform.csv", "cannot read " + wp.string());
    std::vector<double> samples;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || !(std::isdigit(line[0]) || line[0] == '-' || line[0] == '.')) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream is(line);
      double t = 0.0, p = 0.0;
      if (!(is >> t >> p)) ini.fail("waveform.csv", "malformed row '" + line + "'");
      samples.push_back(p);
    }
    const auto d = decompose_waveform(samples, c.waveform.period, ini.integer("waveform.k_max", 5, 0));
    c.waveform = d.waveform;
    c.waveform.description = wp.filename().string() + (d.warning.empty() ? "" : " (" + d.warning + ")");
  } else {
    const auto re = ini.list("waveform.re");
    auto im = ini.list("waveform.im");
    if (re.empty()) ini.fail("waveform.re", "required key is missing");
    if (im.empty()) im.assign(re.size(), 0.0);
    if (im.size() != re.size()) ini.fail("waveform.im", "must have as many entries as waveform.re");
    if (im[0] != 0.0) ini.fail("waveform.im", "p*_0 must be real");
    for (std::size_t k = 0; k < re.size(); ++k) c.waveform.coeffs.emplace_back(re[k], im[k]);
    c.waveform.description = fmt::format("{} coefficients", re.size());
  }

  c.scan.xi_max = ini.num("scan.xi_max", 32.0, true);
  c.scan.n_xi = ini.integer("scan.n_xi", 129, 2);
  c.scan.beta_max = ini.num("scan.beta_max", 0.5, true);
  c.scan.n_beta = ini.integer("scan.n_beta", 11, 2);
  c.scan.threshold = ini.num("scan.threshold", 1e-6, true);
  c.scan.omega = ini.num("scan.omega", 1.0);
  c.scan.h = ini.num("scan.h", 0.2, true);
  c.output_dir = ini.str("output.dir", "out");
  c.time_samples = ini.integer("output.time_samples", 256, 8);
  return c;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error(ErrorKind::io, "SHA-256 computation failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write " + p.string());
  f << s;
}

inline std::string flux_csv(const PeriodicFlowReport& r) {
  std::string s = "t,psi\n";
  for (std::size_t j = 0; j < r.t.size(); ++j) s += fmt::format("{:.17g},{:.17g}\n", r.t[j], r.psi[j]);
  return s;
}

inline std::string certificate_csv(const ElasticCertificate& c) {
  std::string s = "k,omega_k,xi,sigma_min\n";
  for (const auto& r : c.rows) s += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.k, r.omega, r.xi, r.sigma_min);
  return s;
}

// z⁰ layer of the static wall displacement (real valued).
inline std::string wall_csv(const StaticWallSolution& w) {
  std::string s = "s,re_u1,im_u1,re_u2,im_u2,re_u3,im_u3\n";
  for (int i = 0; i < w.grid.size(); ++i)
    s += fmt::format("{:.17g},{:.17g},0,{:.17g},0,{:.17g},0\n", w.grid.s[i], w.u[0](i, 0), w.u[0](i, 1), w.u[0](i, 2));
  return s;
}

inline std::string field_csv(const P2Space& V, const VecC& values) {
  std::string s = "node_id,x,y,re,im\n";
  for (int i = 0; i < V.size(); ++i)
    s += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, V.nodes()[i].x(), V.nodes()[i].y(), values[i].real(),
                     values[i].imag());
  return s;
}

struct ExperimentResult {
  PeriodicFlowReport rigid;
  std::optional<ElasticCertificate> elastic;
  std::vector<std::string> artifacts;
  bool ok = true;
  std::string message;
};

inline double disk_radius_of(const CurveDescriptor& d) {
  if (auto c = std::get_if<Circle>(&d)) return c->radius;
  return 0.0;
}

inline constexpr const char* kVersion = "1.0.0";

// geometry → rigid synthesis → elastic certificate → CSV/JSON artifacts.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, unsigned threads,
                                       std::uint64_t seed) {
  namespace fs = std::filesystem;
  ExperimentResult res;
  const fs::path out = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
  fs::create_directories(out);
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = cfg.source;
  manifest["config_sha256"] = cfg.source.empty() ? "" : sha256_hex(read_file(cfg.source));
  manifest["units"] = cfg.units;
  manifest["seed"] = fmt::format("{:#x}", seed);
  manifest["geometry"] = describe(cfg.geometry.curve);
  manifest["nu"] = cfg.nu;
  manifest["h"] = cfg.geometry.h;
  manifest["tolerances"] = {{"certificate_threshold", cfg.scan.threshold},
                            {"xi_window", cfg.scan.xi_max},
                            {"n_xi", cfg.scan.n_xi},
                            {"scan_h", cfg.scan.h}};
  auto emit = [&](const std::string& name, const std::string& body) {
    write_text(out / name, body);
    manifest["outputs"][name] = sha256_hex(body);
    res.artifacts.push_back((out / name).string());
  };
  auto finish = [&] {
    manifest["status"] = res.ok ? "ok" : "failed";
    manifest["message"] = res.message;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    res.artifacts.push_back((out / "manifest.json").string());
  };
  try {
    const BoundaryCurve curve(cfg.geometry.curve, std::size_t(cfg.geometry.boundary_nodes));
    const auto cs = make_cross_section(mesh_domain(curve, cfg.geometry.h));
    res.rigid = synthesize_rigid_periodic(cs, cfg.nu, cfg.waveform, cfg.time_samples, disk_radius_of(cfg.geometry.curve),
                                          threads);
    emit("flux_rigid.csv", flux_csv(res.rigid));
    auto modes = nlohmann::json::array();
    for (const auto& m : res.rigid.modes) {
      nlohmann::json j = {{"k", m.k},
                          {"omega", m.omega},
                          {"flux_re", m.flux.real()},
                          {"flux_im", m.flux.imag()},
                          {"identity_residual", m.identity_residual}};
      if (m.oracle_flux != cplx(0.0)) {
        j["oracle_re"] = m.oracle_flux.real();
        j["oracle_im"] = m.oracle_flux.imag();
        j["oracle_rel_error"] = std::abs(m.flux - m.oracle_flux) / std::abs(m.oracle_flux);
      }
      if (m.failed) {
        j["error"] = m.error;
        res.ok = false;
      }
      modes.push_back(j);
    }
    manifest["rigid"] = {{"modes", modes},
                         {"mean_flux", res.rigid.mean},
                         {"peak_to_mean", res.rigid.peak_to_mean},
                         {"note", res.rigid.note}};
    if (cfg.wall.elastic) {
      const BoundaryCurve scan_curve = curve;
      const auto scan_cs = make_cross_section(mesh_domain(scan_curve, cfg.scan.h));
      CertifyOptions opt;
      opt.xi_max = cfg.scan.xi_max;
      opt.n_xi = cfg.scan.n_xi;
      opt.threshold = cfg.scan.threshold;
      opt.n_t = cfg.time_samples;
      opt.wall_nodes = cfg.wall.nodes;
      opt.p1 = cfg.wall.p1;
      opt.threads = threads;
      auto cert = certify_elastic_rigidity(scan_cs, curve, cfg.nu, cfg.wall.material, cfg.waveform, opt);
      // the k = 0 flux on the production mesh
      const cplx pf = solve_poiseuille(cs, cfg.nu).flux();
      cert.poiseuille_flux = pf;
      cert.flow.modes[0].flux = cfg.waveform.coeffs[0].real() * pf;
      fill_time_series(cert.flow, cfg.waveform.period, cfg.time_samples);
      cert.flow.variance = 0.0;
      emit("flux_elastic.csv", flux_csv(cert.flow));
      emit("certificate.csv", certificate_csv(cert));
      emit("wall_displacement.csv", wall_csv(*cert.wall));
      auto margins = nlohmann::json::array();
      for (std::size_t i = 0; i < cert.harmonics.size(); ++i)
        margins.push_back({{"k", cert.harmonics[i]}, {"min_sigma", cert.margins[i]}});
      auto fails = nlohmann::json::array();
      for (const auto& f : cert.failures) fails.push_back({{"k", f.k}, {"xi", f.xi}, {"sigma_min", f.sigma_min}});
      manifest["elastic"] = {{"certificate_passed", cert.passed},
                             {"margins", margins},
                             {"failures", fails},
                             {"flux", cert.flow.mean},
                             {"variance", cert.flow.variance},
                             {"wall_residual", cert.wall->diagnostics.residual},
                             {"note", cert.note + "; discrete surrogate for the weighted-space hypotheses"}};
      manifest["comparison"] = {{"rigid_mean_flux", res.rigid.mean},
                                {"rigid_peak_to_mean", res.rigid.peak_to_mean},
                                {"elastic_flux", cert.flow.mean},
                                {"mean_flux_gap", std::abs(res.rigid.mean - cert.flow.mean)}};
      if (!cert.passed) {
        res.ok = false;
        res.message = fmt::format("elastic certificate failed at {} (k, ξ) points", cert.failures.size());
      }
      res.elastic = std::move(cert);
    }
  } catch (const std::exception& e) {
    res.ok = false;
    res.message = e.what();
  }
  finish();
  return res;
}

}  // namespace vesselmode
