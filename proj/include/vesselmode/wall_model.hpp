#pragma once

#include <vesselmode/geometry.hpp>

#include <unsupported/Eigen/FFT>

#include <array>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>

namespace vesselmode {

using Mat3 = Eigen::Matrix3d;
using Vec3C = Eigen::Vector3cd;

inline const double sqrt2 = std::sqrt(2.0);

// ---------------------------------------------------------------------------
// Material

struct MaterialSample {
  Mat3 Q = Mat3::Identity();
  double rho = 1.0, k = 1.0, h = 1.0;
};

struct MaterialCheck {
  double q0 = 0.0;          // min eigenvalue of Q over nodes
  double rho0 = 0.0, k0 = 0.0, h0 = 0.0;
  double asymmetry = 0.0;   // max ‖Q − Qᵀ‖
  bool q13_q23_zero = false;
};

// Q, ρ, k, h as functions of arclength; either constants or a periodic table
// interpolated linearly in s.
class WallMaterial {
 public:
  WallMaterial() = default;

  static WallMaterial constant(const Mat3& Q, double rho, double k, double h, double rho_b = 1.0) {
    WallMaterial m;
    m.rho_b_ = rho_b;
    m.table_s_ = {0.0};
    m.table_.push_back({Q, rho, k, h});
    return m;
  }

  // Default demo material: Q = I, ρ = k = h = 1, ρ_b = 1.
  static WallMaterial default_demo() { return constant(Mat3::Identity(), 1.0, 1.0, 1.0, 1.0); }

  // Rows (s, sample) sorted by s in [0, period).
  static WallMaterial table(std::vector<double> s, std::vector<MaterialSample> rows, double period, double rho_b) {
    if (s.empty() || s.size() != rows.size()) throw Error(ErrorKind::material, "material table is empty");
    if (!(period > 0)) throw Error(ErrorKind::material, "material table period must be positive");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= period)
        throw Error(ErrorKind::material, "material table arclength outside [0, period)");
      if (i > 0 && !(s[i] > s[i - 1])) throw Error(ErrorKind::material, "material table must be sorted by s");
    }
    WallMaterial m;
    m.rho_b_ = rho_b;
    m.period_ = period;
    m.table_s_ = std::move(s);
    m.table_ = std::move(rows);
    return m;
  }

  // CSV "s, Q11, Q12, Q13, Q22, Q23, Q33, rho, k, h"; '#' comments and a
  // non-numeric header line are skipped.
  static WallMaterial load_csv(const std::string& path, double period, double rho_b) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io, "cannot read material table " + path);
    std::vector<double> s;
    std::vector<MaterialSample> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream is(line);
      std::array<double, 10> v{};
      std::size_t n = 0;
      while (n < v.size() && is >> v[n]) ++n;
      if (n == 0 && lineno == 1) continue;
      if (n != 10)
        throw Error(ErrorKind::material, path + ":" + std::to_string(lineno) + ": expected 10 columns");
      MaterialSample r;
      r.Q << v[1], v[2], v[3], v[2], v[4], v[5], v[3], v[5], v[6];
      r.rho = v[7];
      r.k = v[8];
      r.h = v[9];
      s.push_back(v[0]);
      rows.push_back(r);
    }
    return table(std::move(s), std::move(rows), period, rho_b);
  }

  double rho_b() const { return rho_b_; }
  bool is_constant() const { return table_.size() == 1; }

  MaterialSample at(double s) const {
    if (table_.empty()) throw Error(ErrorKind::material, "material not initialized");
    if (table_.size() == 1) return table_[0];
    s = std::fmod(s, period_);
    if (s < 0) s += period_;
    auto it = std::upper_bound(table_s_.begin(), table_s_.end(), s);
    const std::size_t hi = (it == table_s_.end()) ? 0 : std::size_t(it - table_s_.begin());
    const std::size_t lo = (hi == 0) ? table_.size() - 1 : hi - 1;
    double s_lo = table_s_[lo], s_hi = table_s_[hi];
    if (hi == 0) {
      s_hi += period_;
      if (s < s_lo) s += period_;
    }
    const double t = (s - s_lo) / (s_hi - s_lo);
    const MaterialSample &a = table_[lo], &b = table_[hi];
    return {(1 - t) * a.Q + t * b.Q, (1 - t) * a.rho + t * b.rho, (1 - t) * a.k + t * b.k, (1 - t) * a.h + t * b.h};
  }

  double sigma(double s) const { return rho_b_ / at(s).h; }

  // Scale Q, k and ρ (not h) by `factor`.
  WallMaterial scaled(double factor) const {
    WallMaterial m = *this;
    for (auto& r : m.table_) {
      r.Q *= factor;
      r.k *= factor;
      r.rho *= factor;
    }
    return m;
  }

  MaterialCheck check(const std::vector<double>& s_nodes) const {
    MaterialCheck c;
    c.q0 = c.rho0 = c.k0 = c.h0 = std::numeric_limits<double>::infinity();
    c.q13_q23_zero = true;
    for (double s : s_nodes) {
      const MaterialSample r = at(s);
      c.asymmetry = std::max(c.asymmetry, (r.Q - r.Q.transpose()).norm());
      Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (r.Q + r.Q.transpose()), Eigen::EigenvaluesOnly);
      c.q0 = std::min(c.q0, es.eigenvalues().minCoeff());
      c.rho0 = std::min(c.rho0, r.rho);
      c.k0 = std::min(c.k0, r.k);
      c.h0 = std::min(c.h0, r.h);
      if (r.Q(0, 2) != 0.0 || r.Q(1, 2) != 0.0) c.q13_q23_zero = false;
    }
    return c;
  }

  // Throws a material error unless every invariant holds at the nodes.
  MaterialCheck validate(const std::vector<double>& s_nodes) const {
    if (!(rho_b_ > 0)) throw Error(ErrorKind::material, "fluid density ρ_b must be positive");
    const MaterialCheck c = check(s_nodes);
    if (c.asymmetry >= 1e-12) throw Error(ErrorKind::material, "Q is not symmetric");
    if (!(c.q0 > 0)) throw Error(ErrorKind::material, "Q is not positive definite (q₀ ≤ 0)");
    if (!(c.rho0 > 0)) throw Error(ErrorKind::material, "wall density ρ must be positive");
    if (!(c.k0 > 0)) throw Error(ErrorKind::material, "tissue reaction k must be positive");
    if (!(c.h0 > 0)) throw Error(ErrorKind::material, "wall thickness h must be positive");
    return c;
  }

 private:
  double rho_b_ = 1.0;
  double period_ = 1.0;
  std::vector<double> table_s_;
  std::vector<MaterialSample> table_;
};

// ---------------------------------------------------------------------------
// Periodic spectral calculus on N uniform arclength nodes

namespace spectral {

inline int wavenumber(int k, int N) { return k <= N / 2 ? k : k - N; }

// ∂_s of a periodic sample vector; the Nyquist mode is dropped.
inline VecC derivative(const VecC& f, double L) {
  const int N = int(f.size());
  Eigen::FFT<double> fft;
  std::vector<cplx> in(f.data(), f.data() + N), out;
  fft.fwd(out, in);
  for (int k = 0; k < N; ++k) {
    const int m = wavenumber(k, N);
    out[k] *= (2 * m == N) ? cplx(0.0) : cplx(0.0, 2.0 * pi * m / L);
  }
  fft.inv(in, out);
  return Eigen::Map<VecC>(in.data(), N);
}

inline VecR derivative(const VecR& f, double L) { return derivative(VecC(f.cast<cplx>()), L).real(); }

// Zero-mean periodic antiderivative; the mean and Nyquist parts of f are ignored.
inline VecC antiderivative(const VecC& f, double L) {
  const int N = int(f.size());
  Eigen::FFT<double> fft;
  std::vector<cplx> in(f.data(), f.data() + N), out;
  fft.fwd(out, in);
  for (int k = 0; k < N; ++k) {
    const int m = wavenumber(k, N);
    out[k] = (m == 0 || 2 * m == N) ? cplx(0.0) : out[k] / cplx(0.0, 2.0 * pi * m / L);
  }
  fft.inv(in, out);
  return Eigen::Map<VecC>(in.data(), N);
}

inline VecR antiderivative(const VecR& f, double L) { return antiderivative(VecC(f.cast<cplx>()), L).real(); }

// Trapezoidal rule, exact for trigonometric polynomials of degree < N.
template <class Derived>
auto integral(const Eigen::MatrixBase<Derived>& f, double L) {
  return f.sum() * (L / double(f.size()));
}

// Dense differentiation matrix, built column by column through the FFT.
inline MatR derivative_matrix(int N, double L) {
  MatR D(N, N);
  VecR e = VecR::Zero(N);
  for (int j = 0; j < N; ++j) {
    e.setZero();
    e[j] = 1.0;
    D.col(j) = derivative(e, L);
  }
  return D;
}

}  // namespace spectral

// Curve and material sampled at N uniform arclength nodes.
struct WallGrid {
  double L = 0.0;
  std::vector<double> s;
  VecR kappa, k, rho, sigma, h;
  std::vector<Mat3> Q;
  MatR D;  // spectral ∂_s
  MaterialCheck material_check;

  int size() const { return int(s.size()); }
  double weight() const { return L / double(s.size()); }
};

inline WallGrid make_wall_grid(const BoundaryCurve& curve, const WallMaterial& mat, int N) {
  if (N < 8) throw Error(ErrorKind::domain, "wall grid needs at least 8 nodes");
  WallGrid g;
  g.L = curve.length();
  g.s.resize(N);
  g.kappa.resize(N);
  g.k.resize(N);
  g.rho.resize(N);
  g.sigma.resize(N);
  g.h.resize(N);
  g.Q.resize(N);
  for (int i = 0; i < N; ++i) {
    g.s[i] = g.L * double(i) / N;
    g.kappa[i] = curve.at(g.s[i]).curvature;
    const MaterialSample r = mat.at(g.s[i]);
    g.Q[i] = r.Q;
    g.k[i] = r.k;
    g.rho[i] = r.rho;
    g.h[i] = r.h;
    g.sigma[i] = mat.rho_b() / r.h;
  }
  g.material_check = mat.validate(g.s);
  g.D = spectral::derivative_matrix(N, g.L);
  return g;
}

// ---------------------------------------------------------------------------
// Operators, strains, traction

// D(κ,∂_s,∂_z) = D₀∂_z + D₁(∂_s) with D₁(∂_s) = κ·E₁₁ + S₁∂_s.
struct WallOperators {
  Mat3 D0;
  Mat3 S1;  // coefficient of ∂_s in D₁
  Mat3 kappa_part(double kappa) const {
    Mat3 K = Mat3::Zero();
    K(0, 0) = kappa;
    return K;
  }
};

inline WallOperators wall_operator_matrices() {
  WallOperators w;
  w.D0 << 0, 0, 0, 0, 0, 1, 0, 1 / sqrt2, 0;
  w.S1 << 0, 1, 0, 0, 0, 0, 0, 0, 1 / sqrt2;
  return w;
}

// Wall displacement sampled on a WallGrid, frame order (n, τ, z).
struct WallDisplacementField {
  VecC u1, u2, u3;
};

struct StrainTriple {
  VecC ss, zz, sz;
};

inline StrainTriple strain_of(const WallGrid& g, const WallDisplacementField& u, cplx lambda) {
  const int N = g.size();
  if (u.u1.size() != N || u.u2.size() != N || u.u3.size() != N)
    throw Error(ErrorKind::interface, "displacement does not match the wall grid");
  StrainTriple e;
  e.ss = g.kappa.cast<cplx>().cwiseProduct(u.u1) + spectral::derivative(u.u2, g.L);
  e.zz = lambda * u.u3;
  e.sz = 0.5 * (lambda * u.u2 + spectral::derivative(u.u3, g.L));
  return e;
}

// Pointwise variant: u given as a function of s, sampled on the grid. The
// function must be |γ|-periodic.
inline StrainTriple strain_of(const WallGrid& g, const std::function<Vec3C(double)>& u, cplx lambda) {
  const Vec3C u0 = u(0.0), uL = u(g.L);
  if ((u0 - uL).norm() > 1e-10 * std::max(1.0, u0.norm()))
    throw Error(ErrorKind::domain, "displacement is not periodic on γ");
  WallDisplacementField f{VecC(g.size()), VecC(g.size()), VecC(g.size())};
  for (int i = 0; i < g.size(); ++i) {
    const Vec3C v = u(g.s[i]);
    f.u1[i] = v[0];
    f.u2[i] = v[1];
    f.u3[i] = v[2];
  }
  return strain_of(g, f, lambda);
}

// D(κ,∂_s,λ)u through the stencil matrices: (ε_ss, ε_zz, √2 ε_sz).
inline std::array<VecC, 3> apply_D(const WallGrid& g, const WallDisplacementField& u, cplx lambda) {
  const WallOperators W = wall_operator_matrices();
  const std::array<const VecC*, 3> comp = {&u.u1, &u.u2, &u.u3};
  std::array<VecC, 3> ds;
  for (int c = 0; c < 3; ++c) ds[c] = spectral::derivative(*comp[c], g.L);
  std::array<VecC, 3> out;
  for (int r = 0; r < 3; ++r) out[r] = VecC::Zero(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const Mat3 K = W.kappa_part(g.kappa[i]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out[r][i] += (K(r, c) + lambda * W.D0(r, c)) * (*comp[c])[i] + W.S1(r, c) * ds[c][i];
  }
  return out;
}

// Boundary data for the hydrodynamic traction, frame order (n, s, z).
struct TractionTrace {
  VecC vn, vs, vz;        // velocity components on γ
  VecC dn_vn, dn_vs, dn_vz;  // normal derivatives
  VecC ds_vn;             // tangential derivative of v_n
  VecC p;                 // pressure trace
  VecR kappa;
};

struct TractionTriple {
  VecC n, s, z;
};

inline TractionTriple traction_of(const TractionTrace& t, double nu, std::optional<cplx> lambda) {
  const Eigen::Index N = t.p.size();
  for (const VecC* v : {&t.vn, &t.vs, &t.vz, &t.dn_vn, &t.dn_vs, &t.dn_vz, &t.ds_vn})
    if (v->size() != N) throw Error(ErrorKind::interface, "traction trace data is missing or inconsistent");
  if (t.kappa.size() != N) throw Error(ErrorKind::interface, "traction needs κ at the trace nodes");
  TractionTriple F;
  F.n = -t.p + 2.0 * nu * t.dn_vn;
  F.s = nu * (t.ds_vn + t.dn_vs + t.kappa.cast<cplx>().cwiseProduct(t.vs));
  F.z = nu * (lambda.value_or(cplx(0.0)) * t.vn + t.dn_vz);
  return F;
}

// ---------------------------------------------------------------------------
// Discrete quadratic wall form and operator

// Strain maps on a WallGrid for u = (u1 | u2 | u3) stacked: E(λ) = G0 + λG1.
struct WallDiscretization {
  MatR G0, G1;  // 3N × 3N
  MatR WQ;      // block quadrature weights times Q
};

inline WallDiscretization wall_discretization(const WallGrid& g) {
  const int N = g.size();
  WallDiscretization w;
  w.G0 = MatR::Zero(3 * N, 3 * N);
  w.G1 = MatR::Zero(3 * N, 3 * N);
  w.WQ = MatR::Zero(3 * N, 3 * N);
  for (int i = 0; i < N; ++i) w.G0(i, i) = g.kappa[i];
  w.G0.block(0, N, N, N) = g.D;
  w.G0.block(2 * N, 2 * N, N, N) = g.D / sqrt2;
  w.G1.block(N, 2 * N, N, N).setIdentity();
  w.G1.block(2 * N, N, N, N) = MatR::Identity(N, N) / sqrt2;
  for (int i = 0; i < N; ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) w.WQ(r * N + i, c * N + i) = g.weight() * g.Q[i](r, c);
  return w;
}

inline VecC stack(const WallDisplacementField& u) {
  VecC x(3 * u.u1.size());
  x << u.u1, u.u2, u.u3;
  return x;
}

// a(u, û; λ) = ∫⟨Q D(λ)u, D(−λ̄)û⟩ ds.
inline cplx wall_form(const WallGrid& g, const WallDisplacementField& u, const WallDisplacementField& uh,
                      cplx lambda) {
  const auto w = wall_discretization(g);
  const VecC Eu = w.G0.cast<cplx>() * stack(u) + lambda * (w.G1.cast<cplx>() * stack(u));
  const VecC Eh = w.G0.cast<cplx>() * stack(uh) - std::conj(lambda) * (w.G1.cast<cplx>() * stack(uh));
  return Eh.dot(w.WQ.cast<cplx>() * Eu);
}

// Matrix of (u, û) ↦ a(u,û;λ) as A0 + λA1 + λ²A2 (rows test û, columns u).
struct WallFormMatrices {
  MatR A0, A1, A2;
};

inline WallFormMatrices wall_form_matrices(const WallGrid& g) {
  const auto w = wall_discretization(g);
  WallFormMatrices m;
  m.A0 = w.G0.transpose() * w.WQ * w.G0;
  m.A1 = w.G0.transpose() * w.WQ * w.G1 - w.G1.transpose() * w.WQ * w.G0;
  m.A2 = -w.G1.transpose() * w.WQ * w.G1;
  return m;
}

struct WallCoercivity {
  double c1 = 0.0;          // min over trials of a(u,u;iξ) / functional
  double max_imag = 0.0;    // max |Im a(u,u;iξ)| / |a|, Hermitian check
};

// a(u,u;iξ) ≥ c₁(|ξ|²‖u₃‖² + ‖κu₁+∂_s u₂‖² + ‖iξu₂+∂_s u₃‖²) on random u.
inline WallCoercivity wall_coercivity_probe(const WallGrid& g, double xi, int trials, std::uint64_t seed = 0x5EED) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int N = g.size();
  const double L = g.L;
  WallCoercivity out;
  out.c1 = std::numeric_limits<double>::infinity();
  const cplx lam(0.0, xi);
  for (int t = 0; t < trials; ++t) {
    WallDisplacementField u{VecC(N), VecC(N), VecC(N)};
    // smooth random fields: a few low Fourier modes per component
    for (VecC* c : {&u.u1, &u.u2, &u.u3}) {
      c->setZero();
      for (int m = -4; m <= 4; ++m) {
        const cplx a(nd(rng), nd(rng));
        for (int i = 0; i < N; ++i) (*c)[i] += a * std::exp(cplx(0.0, 2.0 * pi * m * g.s[i] / L));
      }
    }
    const cplx a = wall_form(g, u, u, lam);
    const StrainTriple e = strain_of(g, u, lam);
    const double w = g.weight();
    const double fun = w * (xi * xi * u.u3.squaredNorm() + e.ss.squaredNorm() + (2.0 * e.sz).squaredNorm());
    out.c1 = std::min(out.c1, a.real() / fun);
    out.max_imag = std::max(out.max_imag, std::abs(a.imag()) / std::abs(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static (ω = 0) wall problem
//
//   D(κ,−∂_s,−∂_z)ᵀ Q D(κ,∂_s,∂_z) u + K u = σΦ,
//   Φ = (−(p₀z + p₁), 0, p₀ ν∂_n v*)   in (n, τ, z) order,
//
// solved with the ansatz u = ½z²(0, α, β_wall) + z a(s) + b(s).

// Coefficients per power of z: coeff[j] is N×3 (columns u₁, u₂, u₃) for z^j.
using WallPolynomial = std::array<MatR, 3>;

// Residual of the static operator applied to a z-polynomial minus the load.
inline WallPolynomial static_wall_residual(const WallGrid& g, const WallPolynomial& u, double p0, double p1,
                                           const VecR& dnv) {
  const int N = g.size();
  auto D1 = [&](const MatR& v) {
    MatR e = MatR::Zero(N, 3);
    e.col(0) = g.kappa.cwiseProduct(v.col(0)) + g.D * v.col(1);
    e.col(2) = g.D * v.col(2) / sqrt2;
    return e;
  };
  auto D0 = [&](const MatR& v) {
    MatR e = MatR::Zero(N, 3);
    e.col(1) = v.col(2);
    e.col(2) = v.col(1) / sqrt2;
    return e;
  };
  auto D1mT = [&](const MatR& X) {
    MatR r = MatR::Zero(N, 3);
    r.col(0) = g.kappa.cwiseProduct(X.col(0));
    r.col(1) = -(g.D * X.col(0));
    r.col(2) = -(g.D * X.col(2)) / sqrt2;
    return r;
  };
  auto D0T = [&](const MatR& X) {
    MatR r = MatR::Zero(N, 3);
    r.col(1) = X.col(2) / sqrt2;
    r.col(2) = X.col(1);
    return r;
  };
  auto applyQ = [&](const MatR& E) {
    MatR X(N, 3);
    for (int i = 0; i < N; ++i) X.row(i) = (g.Q[i] * E.row(i).transpose()).transpose();
    return X;
  };
  std::array<MatR, 4> X;
  X[3] = MatR::Zero(N, 3);
  for (int j = 0; j < 3; ++j) {
    MatR E = D1(u[j]);
    if (j + 1 < 3) E += double(j + 1) * D0(u[j + 1]);
    X[j] = applyQ(E);
  }
  WallPolynomial r;
  for (int j = 0; j < 3; ++j) {
    r[j] = D1mT(X[j]) - double(j + 1) * D0T(X[j + 1]);
    r[j].col(0) += g.k.cwiseProduct(u[j].col(0));
  }
  // subtract σΦ
  r[1].col(0) -= -p0 * g.sigma;
  r[0].col(0) -= -p1 * g.sigma;
  r[0].col(2) -= p0 * g.sigma.cwiseProduct(dnv);
  return r;
}

struct StaticWallDiagnostics {
  double residual = 0.0;           // max |operator − load| / max(1, |load|)
  double closure = 0.0;            // |∮ RHS| of the axial stress balance
  double compat_condition = 0.0;   // condition number of the layer system
};

struct StaticWallSolution {
  WallGrid grid;
  WallPolynomial u;         // u = Σ z^j u[j]
  double alpha = 0.0, beta_wall = 0.0;
  double A = 0.0, C = 0.0;  // linear-layer constants (first and third rows of QDu at order z)
  double A0 = 0.0, C0 = 0.0;  // z⁰-layer constants; C0 is the mean of the third row
  double b1 = 0.0, b2 = 0.0;  // reported constants: z⁰ layer when p₀ = 0, linear layer otherwise
  Eigen::Matrix4d layer_matrix = Eigen::Matrix4d::Zero();
  StaticWallDiagnostics diagnostics;
};

namespace detail {

struct LayerCoefficients {
  VecR r11, r12, r21, r22;  // R = [[Q11,Q13],[Q31,Q33]]⁻¹ per node
};

inline LayerCoefficients layer_coefficients(const WallGrid& g) {
  const int N = g.size();
  LayerCoefficients c{VecR(N), VecR(N), VecR(N), VecR(N)};
  for (int i = 0; i < N; ++i) {
    Eigen::Matrix2d M;
    M << g.Q[i](0, 0), g.Q[i](0, 2), g.Q[i](2, 0), g.Q[i](2, 2);
    const double det = M.determinant();
    if (!(std::abs(det) > 1e-14 * M.squaredNorm()))
      throw Error(ErrorKind::material, "singular compatibility matrix: [[Q11,Q13],[Q31,Q33]] is not invertible");
    const Eigen::Matrix2d R = M.inverse();
    c.r11[i] = R(0, 0);
    c.r12[i] = R(0, 1);
    c.r21[i] = R(1, 0);
    c.r22[i] = R(1, 1);
  }
  return c;
}

// 4×4 system for (α, β_wall, A, C) and its right-hand side per unit p₀:
// periodicity of a₂ and a₃, C = 0, and ∫B ds = −p₀∫σ ν∂_n v* ds.
inline Eigen::Matrix4d layer_matrix(const WallGrid& g, const LayerCoefficients& c) {
  const int N = g.size();
  const double L = g.L;
  VecR q12(N), q32(N), q21(N), q22(N), q23(N);
  for (int i = 0; i < N; ++i) {
    q12[i] = g.Q[i](0, 1);
    q32[i] = g.Q[i](2, 1);
    q21[i] = g.Q[i](1, 0);
    q22[i] = g.Q[i](1, 1);
    q23[i] = g.Q[i](1, 2);
  }
  auto I = [&](const VecR& f) { return spectral::integral(f, L); };
  const VecR k2 = g.kappa.cwiseAbs2().cwiseQuotient(g.k);
  const VecR rb1 = c.r11.cwiseProduct(q12) + c.r12.cwiseProduct(q32);  // e₁ per unit β (negated)
  const VecR rb3 = c.r21.cwiseProduct(q12) + c.r22.cwiseProduct(q32);
  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  // a₂ periodicity: ∫e₁ + ∫κ(σp₀ + κA)/k = 0
  M(0, 1) = -I(rb1);
  M(0, 2) = I(c.r11 + k2);
  M(0, 3) = I(c.r12);
  // a₃ periodicity: ∫(√2 e₃ − α) = 0
  M(1, 0) = -L;
  M(1, 1) = -sqrt2 * I(rb3);
  M(1, 2) = sqrt2 * I(c.r21);
  M(1, 3) = sqrt2 * I(c.r22);
  // C = 0
  M(2, 3) = 1.0;
  // ∫B ds, B = Q21 e₁ + Q22 β + Q23 e₃
  M(3, 1) = I(q22 - q21.cwiseProduct(rb1) - q23.cwiseProduct(rb3));
  M(3, 2) = I(q21.cwiseProduct(c.r11) + q23.cwiseProduct(c.r21));
  M(3, 3) = I(q21.cwiseProduct(c.r12) + q23.cwiseProduct(c.r22));
  return M;
}

inline Eigen::Vector4d solve_checked(const Eigen::Matrix4d& M, const Eigen::Vector4d& rhs, double* cond) {
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double c = sv(0) / std::max(sv(3), 1e-300);
  if (cond) *cond = c;
  if (!(c < 1e12)) throw Error(ErrorKind::material, "singular compatibility matrix (condition " + std::to_string(c) + ")");
  return svd.solve(rhs);
}

}  // namespace detail

// `dnv` holds ν∂_n v* at the grid nodes (ignored when p₀ = 0).
inline StaticWallSolution static_wall_solve(double p0, double p1, const VecR& dnv, const WallMaterial& material,
                                            const BoundaryCurve& curve, int N = 256) {
  StaticWallSolution sol;
  sol.grid = make_wall_grid(curve, material, N);
  const WallGrid& g = sol.grid;
  if (dnv.size() != N) throw Error(ErrorKind::interface, "∂_n v* must be sampled at the wall grid nodes");
  const double L = g.L;
  const auto c = detail::layer_coefficients(g);
  auto I = [&](const VecR& f) { return spectral::integral(f, L); };
  VecR q12(N), q32(N), q21(N), q22(N), q23(N);
  for (int i = 0; i < N; ++i) {
    q12[i] = g.Q[i](0, 1);
    q32[i] = g.Q[i](2, 1);
    q21[i] = g.Q[i](1, 0);
    q22[i] = g.Q[i](1, 1);
    q23[i] = g.Q[i](1, 2);
  }
  const VecR sg = g.sigma.cwiseProduct(dnv);

  // order z: constants (α, β, A, C)
  sol.layer_matrix = detail::layer_matrix(g, c);
  Eigen::Vector4d rhs;
  rhs << -p0 * I(g.kappa.cwiseProduct(g.sigma).cwiseQuotient(g.k)), 0.0, 0.0, -p0 * I(sg);
  const Eigen::Vector4d x = detail::solve_checked(sol.layer_matrix, rhs, &sol.diagnostics.compat_condition);
  sol.alpha = x[0];
  sol.beta_wall = x[1];
  sol.A = x[2];
  sol.C = x[3];

  const VecR e1 = c.r11 * sol.A + c.r12 * sol.C - (c.r11.cwiseProduct(q12) + c.r12.cwiseProduct(q32)) * sol.beta_wall;
  const VecR e3 = c.r21 * sol.A + c.r22 * sol.C - (c.r21.cwiseProduct(q12) + c.r22.cwiseProduct(q32)) * sol.beta_wall;
  const VecR a1 = (-p0 * g.sigma - g.kappa * sol.A).cwiseQuotient(g.k);
  const VecR a2 = spectral::antiderivative(VecR(e1 - g.kappa.cwiseProduct(a1)), L);
  const VecR a3 = spectral::antiderivative(VecR(sqrt2 * e3 - VecR::Constant(N, sol.alpha)), L);
  const VecR B = q21.cwiseProduct(e1) + q22 * sol.beta_wall + q23.cwiseProduct(e3);

  // order 1: A0 constant, C'(s) = C0 + Γ(s) with ∂_sΓ = −√2(B + σp₀ν∂_n v*)
  const VecR stress = B + p0 * sg;
  sol.diagnostics.closure = std::abs(I(stress));
  const double scale = std::max(1.0, std::abs(p0) * I(sg.cwiseAbs()));
  if (sol.diagnostics.closure > 1e-9 * scale * std::max(1.0, L))
    throw Error(ErrorKind::compatibility, "axial stress balance does not close (∮ = " +
                                              std::to_string(sol.diagnostics.closure) + ")");
  const VecR Gam = -sqrt2 * spectral::antiderivative(stress, L);
  const VecR t1 = c.r11.cwiseProduct(q12) + c.r12.cwiseProduct(q32);
  const VecR t3 = c.r21.cwiseProduct(q12) + c.r22.cwiseProduct(q32);
  const VecR k2 = g.kappa.cwiseAbs2().cwiseQuotient(g.k);
  Eigen::Matrix2d M;
  Eigen::Vector2d r;
  M << I(c.r11 + k2), I(c.r12), sqrt2 * I(c.r21), sqrt2 * I(c.r22);
  r << -I(c.r12.cwiseProduct(Gam)) + I(t1.cwiseProduct(a3)) - p1 * I(g.kappa.cwiseProduct(g.sigma).cwiseQuotient(g.k)),
      -sqrt2 * I(c.r22.cwiseProduct(Gam)) + sqrt2 * I(t3.cwiseProduct(a3)) + I(a2);
  Eigen::FullPivLU<Eigen::Matrix2d> lu(M);
  if (!lu.isInvertible() || std::abs(M.determinant()) < 1e-13 * M.squaredNorm())
    throw Error(ErrorKind::material, "singular compatibility matrix in the z⁰ layer");
  const Eigen::Vector2d y = lu.solve(r);
  sol.A0 = y[0];
  sol.C0 = y[1];
  const VecR Cp = VecR::Constant(N, sol.C0) + Gam;
  const VecR f1 = c.r11 * sol.A0 + c.r12.cwiseProduct(Cp) - t1.cwiseProduct(a3);
  const VecR f3 = c.r21 * sol.A0 + c.r22.cwiseProduct(Cp) - t3.cwiseProduct(a3);
  const VecR b1 = (-p1 * g.sigma - g.kappa * sol.A0).cwiseQuotient(g.k);
  const VecR b2 = spectral::antiderivative(VecR(f1 - g.kappa.cwiseProduct(b1)), L);
  const VecR b3 = spectral::antiderivative(VecR(sqrt2 * f3 - a2), L);

  for (auto& m : sol.u) m = MatR::Zero(N, 3);
  sol.u[2].col(1).setConstant(0.5 * sol.alpha);
  sol.u[2].col(2).setConstant(0.5 * sol.beta_wall);
  sol.u[1].col(0) = a1;
  sol.u[1].col(1) = a2;
  sol.u[1].col(2) = a3;
  sol.u[0].col(0) = b1;
  sol.u[0].col(1) = b2;
  sol.u[0].col(2) = b3;
  if (p0 == 0.0) {
    sol.b1 = sol.A0;
    sol.b2 = sol.C0;
  } else {
    sol.b1 = sol.A;
    sol.b2 = sol.C;
  }

  const WallPolynomial res = static_wall_residual(g, sol.u, p0, p1, dnv);
  double rmax = 0.0;
  for (const auto& m : res) rmax = std::max(rmax, m.cwiseAbs().maxCoeff());
  const double load = std::max({1.0, std::abs(p0) * g.sigma.maxCoeff(), std::abs(p1) * g.sigma.maxCoeff(),
                                std::abs(p0) * sg.cwiseAbs().maxCoeff()});
  sol.diagnostics.residual = rmax / load;
  return sol;
}

// Compatibility constants for a prescribed linear layer u⁰ = (0, α, β):
// (∫R ds + ∫κ²/k ds e₁e₁ᵀ)(b₁,b₂)ᵀ = ∫R S ds (β, α/√2)ᵀ.
inline Eigen::Vector2d linear_layer_constants(const WallGrid& g, double alpha, double beta_wall) {
  const auto c = detail::layer_coefficients(g);
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  const double w = g.weight();
  for (int i = 0; i < g.size(); ++i) {
    Eigen::Matrix2d R;
    R << c.r11[i], c.r12[i], c.r21[i], c.r22[i];
    Eigen::Matrix2d S;
    S << g.Q[i](0, 1), g.Q[i](0, 2), g.Q[i](2, 1), g.Q[i](2, 2);
    M += w * R;
    M(0, 0) += w * g.kappa[i] * g.kappa[i] / g.k[i];
    r += w * R * S * Eigen::Vector2d(beta_wall, alpha / sqrt2);
  }
  return M.fullPivLu().solve(r);
}

struct HomogeneousWallSolutions {
  std::vector<WallPolynomial> constant_basis;  // (0,1,0) and (0,0,1)
  double constant_basis_residual = 0.0;
  // quadratic family u = ½z²(0,α,β) + z u¹ + u²
  bool certificate = false;
  std::string certificate_note;
  Eigen::Matrix4d layer_matrix = Eigen::Matrix4d::Zero();
  double layer_sigma_min = 0.0;
  Eigen::Vector4d layer_solution = Eigen::Vector4d::Zero();  // (α, β, A, C)
  Eigen::Matrix2d compat_2x2 = Eigen::Matrix2d::Zero();      // ∫R + ∫κ²/k e₁e₁ᵀ
  double b1 = 0.0, b2 = 0.0;
};

inline HomogeneousWallSolutions homogeneous_wall_solutions(const WallMaterial& material, const BoundaryCurve& curve,
                                                           int N = 256) {
  const WallGrid g = make_wall_grid(curve, material, N);
  HomogeneousWallSolutions h;
  const VecR zero = VecR::Zero(N);
  for (int comp : {1, 2}) {
    WallPolynomial u;
    for (auto& m : u) m = MatR::Zero(N, 3);
    u[0].col(comp).setOnes();
    const auto r = static_wall_residual(g, u, 0.0, 0.0, zero);
    for (const auto& m : r) h.constant_basis_residual = std::max(h.constant_basis_residual, m.cwiseAbs().maxCoeff());
    h.constant_basis.push_back(u);
  }
  const auto c = detail::layer_coefficients(g);
  h.layer_matrix = detail::layer_matrix(g, c);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(h.layer_matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
  h.layer_sigma_min = svd.singularValues()(3) / svd.singularValues()(0);
  h.layer_solution = svd.solve(Eigen::Vector4d::Zero());
  const double w = g.weight();
  for (int i = 0; i < N; ++i) {
    Eigen::Matrix2d R;
    R << c.r11[i], c.r12[i], c.r21[i], c.r22[i];
    h.compat_2x2 += w * R;
    h.compat_2x2(0, 0) += w * g.kappa[i] * g.kappa[i] / g.k[i];
  }
  if (!g.material_check.q13_q23_zero) {
    h.certificate = false;
    h.certificate_note = "Q13 or Q23 nonzero: collapse of the quadratic family is not established";
    return h;
  }
  if (!(h.layer_sigma_min > 1e-12)) {
    h.certificate = false;
    h.certificate_note = "layer system numerically singular";
    return h;
  }
  const Eigen::Vector2d b = h.compat_2x2.fullPivLu().solve(Eigen::Vector2d::Zero());
  h.b1 = b[0];
  h.b2 = b[1];
  h.certificate = true;
  h.certificate_note = "homogeneous layer system nonsingular: alpha = beta = b1 = b2 = 0";
  return h;
}

// Sample ν∂_n v* given as a function of arclength on the wall grid.
inline VecR sample_on_grid(const WallGrid& g, const std::function<double(double)>& f) {
  VecR v(g.size());
  for (int i = 0; i < g.size(); ++i) v[i] = f(g.s[i]);
  return v;
}

}  // namespace vesselmode
