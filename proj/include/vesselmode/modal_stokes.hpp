#pragma once

#include <vesselmode/bessel.hpp>
#include <vesselmode/fem.hpp>
#include <vesselmode/linear_solver.hpp>

#include <Eigen/SparseCholesky>

#include <mutex>

namespace vesselmode {

struct FluidParams {
  double nu = 0.04;     // kinematic viscosity
  double rho_b = 1.0;   // fluid density

  double mu_dyn() const { return nu * rho_b; }
  void validate() const {
    if (!(nu > 0)) throw Error(ErrorKind::domain, "viscosity ν must be positive");
    if (!(rho_b > 0)) throw Error(ErrorKind::domain, "fluid density ρ_b must be positive");
  }
};

// Mesh + quadratic space + assembled operators, with lazily built shared
// factorizations. Safe to share between threads.
class CrossSection {
 public:
  explicit CrossSection(CrossSectionMesh mesh) : V_(std::move(mesh)), op_(assemble_operators(V_)) {
    Mii_ = select(op_.M, V_.interior(), V_.interior());
    Kii_ = select(op_.K, V_.interior(), V_.interior());
    area_ = op_.load.sum();
  }

  const P2Space& space() const { return V_; }
  const FemOperators& ops() const { return op_; }
  const CrossSectionMesh& mesh() const { return V_.mesh(); }
  const SpMatR& Mii() const { return Mii_; }
  const SpMatR& Kii() const { return Kii_; }
  double area() const { return area_; }
  int n_interior() const { return int(V_.interior().size()); }

  VecR restrict_interior(const VecR& f) const {
    VecR r(n_interior());
    for (int i = 0; i < n_interior(); ++i) r[i] = f[V_.interior()[i]];
    return r;
  }
  template <class Scalar>
  FieldVec<Scalar> extend_interior(const FieldVec<Scalar>& fi) const {
    FieldVec<Scalar> f = FieldVec<Scalar>::Zero(V_.size());
    for (int i = 0; i < n_interior(); ++i) f[V_.interior()[i]] = fi[i];
    return f;
  }

  // Factorized Dirichlet Laplacian K_ii (SPD).
  const Eigen::SimplicialLDLT<SpMatR>& laplace_solver() const {
    std::call_once(lap_once_, [&] {
      lap_.compute(Kii_);
      if (lap_.info() != Eigen::Success) throw Error(ErrorKind::mesh, "singular stiffness matrix");
    });
    return lap_;
  }

  // Taylor–Hood Stokes operator for liftings, unknowns (w1_int, w2_int, q, μ):
  //   K w + Bᵀq = r,  B w + m μ = g,  mᵀ q = 0   with m = M_p·1.
  struct StokesSystem {
    SpMatR A;
    SpMatR Bx_b, By_b;  // pressure rows × trace columns, for boundary data
    SpMatR Kx_ib;       // interior × trace columns of K
    DirectSolver<double> lu;
    int ni = 0, np = 0;
  };

  const StokesSystem& stokes() const {
    std::call_once(stokes_once_, [&] { build_stokes(); });
    return stokes_;
  }

 private:
  void build_stokes() const {
    auto& S = stokes_;
    const auto& in = V_.interior();
    const auto& tr = V_.trace();
    const int ni = int(in.size()), np = V_.n_vertices();
    S.ni = ni;
    S.np = np;
    const std::vector<int> prow = iota_vec(np);
    const SpMatR Bxi = select(op_.Bx, prow, in), Byi = select(op_.By, prow, in);
    S.Bx_b = select(op_.Bx, prow, tr);
    S.By_b = select(op_.By, prow, tr);
    S.Kx_ib = select(op_.K, in, tr);
    const VecR m = op_.Mp * VecR::Ones(np);
    std::vector<TripletR> t;
    auto put = [&](const SpMatR& A, int r0, int c0, bool transpose) {
      for (int k = 0; k < A.outerSize(); ++k)
        for (SpMatR::InnerIterator it(A, k); it; ++it) {
          if (transpose)
            t.emplace_back(r0 + it.col(), c0 + it.row(), it.value());
          else
            t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
        }
    };
    put(Kii_, 0, 0, false);
    put(Kii_, ni, ni, false);
    put(Bxi, 0, 2 * ni, true);
    put(Byi, ni, 2 * ni, true);
    put(Bxi, 2 * ni, 0, false);
    put(Byi, 2 * ni, ni, false);
    const int mu = 2 * ni + np;
    for (int k = 0; k < np; ++k) {
      t.emplace_back(2 * ni + k, mu, m[k]);
      t.emplace_back(mu, 2 * ni + k, m[k]);
    }
    S.A.resize(mu + 1, mu + 1);
    S.A.setFromTriplets(t.begin(), t.end());
    S.A.makeCompressed();
    S.lu.factorize(S.A);
  }

  P2Space V_;
  FemOperators op_;
  SpMatR Mii_, Kii_;
  double area_ = 0.0;
  mutable std::once_flag lap_once_, stokes_once_;
  mutable Eigen::SimplicialLDLT<SpMatR> lap_;
  mutable StokesSystem stokes_;
};

using CrossSectionPtr = std::shared_ptr<const CrossSection>;

inline CrossSectionPtr make_cross_section(CrossSectionMesh mesh) {
  return std::make_shared<const CrossSection>(std::move(mesh));
}

// Complex P2 field on a cross-section.
struct ComplexScalarField {
  CrossSectionPtr cs;
  VecC values;

  cplx flux() const { return cs->ops().load.cast<cplx>().dot(values); }
};

inline cplx flux_of(const ComplexScalarField& f) { return f.cs->ops().load.cast<cplx>().dot(f.values); }

struct ModalRigidSolution {
  double omega = 0.0;
  ComplexScalarField field;
  cplx flux{0.0};
  SolveDiagnostics diagnostics;
};

// νΔv* = 1 in Ω, v* = 0 on γ.
inline ComplexScalarField solve_poiseuille(const CrossSectionPtr& cs, double nu) {
  if (!(nu > 0)) throw Error(ErrorKind::domain, "viscosity must be positive");
  const VecR rhs = -cs->restrict_interior(cs->ops().load) / nu;
  VecR vi = cs->laplace_solver().solve(rhs);
  // one refinement sweep keeps nodal values reproducible to rounding
  vi += cs->laplace_solver().solve(rhs - cs->Kii() * vi);
  ComplexScalarField f{cs, cs->extend_interior<double>(vi).cast<cplx>()};
  return f;
}

// iωv̂ − νΔv̂ + 1 = 0 in Ω, v̂ = 0 on γ.
inline ModalRigidSolution solve_womersley_mode(const CrossSectionPtr& cs, double nu, double omega) {
  if (!(nu > 0)) throw Error(ErrorKind::domain, "viscosity must be positive");
  if (omega == 0.0)
    throw Error(ErrorKind::unsupported_parameter, "ω = 0 is the steady problem; use solve_poiseuille");
  SpMatC A = (cplx(0.0, omega) * cs->Mii().cast<cplx>() + nu * cs->Kii().cast<cplx>());
  A.makeCompressed();
  DirectSolver<cplx> lu;
  lu.factorize(A);
  const VecC rhs = -cs->restrict_interior(cs->ops().load).cast<cplx>();
  ModalRigidSolution sol;
  sol.omega = omega;
  const VecC vi = lu.solve(rhs, &sol.diagnostics, 1e-15, 4);
  sol.field = {cs, cs->extend_interior<cplx>(vi)};
  sol.flux = sol.field.flux();
  return sol;
}

struct FluxIdentity {
  double residual = 0.0;
  bool absolute = false;  // set when the flux vanishes and no normalization was possible
};

// |∫v̂ − (iω∫|v̂|² − ν∫|∇v̂|²)| / |∫v̂|
inline FluxIdentity flux_identity_residual(const ModalRigidSolution& sol, double nu) {
  const auto& op = sol.field.cs->ops();
  const VecC& v = sol.field.values;
  const cplx flux = op.load.cast<cplx>().dot(v);
  const double mass = v.dot(op.M.cast<cplx>() * v).real();
  const double grad = v.dot(op.K.cast<cplx>() * v).real();
  const cplx energy = cplx(0.0, sol.omega) * mass - nu * grad;
  FluxIdentity r;
  const double diff = std::abs(flux - energy);
  if (std::abs(flux) < 1e-300) {
    r.residual = diff;
    r.absolute = true;
  } else {
    r.residual = diff / std::abs(flux);
  }
  return r;
}

inline double l2_norm(const CrossSectionPtr& cs, const VecC& v) {
  return std::sqrt(std::max(0.0, v.dot(cs->ops().M.cast<cplx>() * v).real()));
}
inline double h1_seminorm(const CrossSectionPtr& cs, const VecC& v) {
  return std::sqrt(std::max(0.0, v.dot(cs->ops().K.cast<cplx>() * v).real()));
}

// Co-normal data g = ν∂ₙv on γ as P2 trace coefficients, from the residual
// functional of iωv − νΔv + 1 = 0 (ω = 0 gives Poiseuille).
inline VecC conormal_derivative(const ComplexScalarField& f, double nu, double omega) {
  const auto& V = f.cs->space();
  const auto& op = f.cs->ops();
  const VecC R = cplx(0.0, omega) * (op.M.cast<cplx>() * f.values) + nu * (op.K.cast<cplx>() * f.values) +
                 op.load.cast<cplx>();
  VecC Rt(V.trace().size());
  for (std::size_t k = 0; k < V.trace().size(); ++k) Rt[k] = R[V.trace()[k]];
  Eigen::SimplicialLDLT<SpMatR> mb(op.Mb);
  VecC g(Rt.size());
  g.real() = mb.solve(VecR(Rt.real()));
  g.imag() = mb.solve(VecR(Rt.imag()));
  return g;
}

// The P2 coefficients alternate between vertices and midpoints at the mesh
// scale, so pointwise values come from the low Fourier modes of the trace
// function (|m| ≤ N/4, coefficients by the trace mass weights), evaluated at
// arbitrary arclength positions.
inline VecC conormal_on_curve(const ComplexScalarField& f, double nu, double omega, const std::vector<double>& s_eval) {
  const auto& V = f.cs->space();
  const VecC g = conormal_derivative(f, nu, omega);
  const int N = int(g.size());
  const double L = V.mesh().curve_length();
  const VecR w = f.cs->ops().Mb * VecR::Ones(N);
  const int M = N / 4;
  std::vector<cplx> c(2 * M + 1, cplx(0.0));
  for (int k = 0; k < N; ++k) {
    const cplx step = std::exp(cplx(0.0, -2.0 * pi * V.trace_s()[k] / L));
    cplx e = std::exp(cplx(0.0, 2.0 * pi * M * V.trace_s()[k] / L));  // m = -M
    for (int m = -M; m <= M; ++m) {
      c[m + M] += w[k] * g[k] * e;
      e *= step;
    }
  }
  VecC out(s_eval.size());
  for (std::size_t j = 0; j < s_eval.size(); ++j) {
    const cplx step = std::exp(cplx(0.0, 2.0 * pi * s_eval[j] / L));
    cplx e = std::exp(cplx(0.0, -2.0 * pi * M * s_eval[j] / L)), acc = 0.0;
    for (int m = -M; m <= M; ++m) {
      acc += c[m + M] * e;
      e *= step;
    }
    out[j] = acc / L;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Divergence liftings: find w with ∇·w' + λw₃ = h (weakly against P1).

enum class LiftVariant {
  homogeneous,       // w ∈ H¹₀; requires ∫h = 0 when λ = 0
  boundary_regular,  // w₃ = 0, w' = c̃ n on γ (tangential trace zero)
};

struct DivergenceLift {
  VecC w1, w2, w3;       // P2 nodal values
  cplx mean{0.0};        // ∫h
  double residual = 0.0;  // relative weak residual of the divergence equation
  double norm_w_prime_h1 = 0.0, norm_w3_h1 = 0.0, norm_h = 0.0;
};

// Discrete outward normals at trace nodes from the polygonal boundary.
inline std::vector<Vec2> discrete_trace_normals(const P2Space& V) {
  const auto& te = V.trace_edges();
  const auto& X = V.nodes();
  std::vector<Vec2> n(V.trace().size(), Vec2::Zero());
  for (std::size_t e = 0; e < te.size(); ++e) {
    const Vec2 d = X[te[e][2]] - X[te[e][0]];
    const Vec2 ne = Vec2(d.y(), -d.x()).normalized();
    n[V.trace_index(te[e][0])] += ne;
    n[V.trace_index(te[e][1])] += 2.0 * ne;
    n[V.trace_index(te[e][2])] += ne;
  }
  for (auto& v : n) v.normalize();
  return n;
}

namespace detail {

// Solves the lifting Stokes problem for a (possibly complex) weak divergence
// target g (P1 rows) and boundary trace values (w1_b, w2_b).
inline void stokes_lift_solve(const CrossSection& cs, const VecC& g, const VecC& w1b, const VecC& w2b, VecC& w1,
                              VecC& w2) {
  const auto& S = cs.stokes();
  const auto& V = cs.space();
  const int ni = S.ni, np = S.np;
  VecC rhs = VecC::Zero(2 * ni + np + 1);
  rhs.segment(0, ni) = -(S.Kx_ib.cast<cplx>() * w1b);
  rhs.segment(ni, ni) = -(S.Kx_ib.cast<cplx>() * w2b);
  rhs.segment(2 * ni, np) = g - S.Bx_b.cast<cplx>() * w1b - S.By_b.cast<cplx>() * w2b;
  VecR xr = S.lu.solve(VecR(rhs.real())), xi = S.lu.solve(VecR(rhs.imag()));
  VecC x(xr.size());
  x.real() = xr;
  x.imag() = xi;
  w1 = VecC::Zero(V.size());
  w2 = VecC::Zero(V.size());
  for (int i = 0; i < ni; ++i) {
    w1[V.interior()[i]] = x[i];
    w2[V.interior()[i]] = x[ni + i];
  }
  for (std::size_t k = 0; k < V.trace().size(); ++k) {
    w1[V.trace()[k]] = w1b[k];
    w2[V.trace()[k]] = w2b[k];
  }
}

}  // namespace detail

// h: P1 nodal values (mesh vertices). `trace_normals` overrides the boundary
// normal field used by the boundary-regular variant.
inline DivergenceLift divergence_lift(const CrossSectionPtr& cs, const VecC& h, cplx lambda, LiftVariant variant,
                                      double nu = 1.0, const std::vector<Vec2>* trace_normals = nullptr) {
  const auto& V = cs->space();
  const auto& op = cs->ops();
  if (h.size() != V.n_vertices()) throw Error(ErrorKind::interface, "h must be given at mesh vertices (P1)");
  const VecC Mh = op.Mp.cast<cplx>() * h;
  DivergenceLift L;
  L.mean = Mh.sum();
  L.norm_h = std::sqrt(std::max(0.0, h.dot(Mh).real()));
  const double tol = 1e-12 * std::max(1.0, std::sqrt(cs->area()) * L.norm_h);
  const int nt = int(V.trace().size());
  VecC w1b = VecC::Zero(nt), w2b = VecC::Zero(nt);
  L.w3 = VecC::Zero(V.size());
  VecC g = Mh;

  if (variant == LiftVariant::homogeneous) {
    if (lambda == cplx(0.0)) {
      if (std::abs(L.mean) > tol)
        throw Error(ErrorKind::incompatibility,
                    "λ = 0 with ∫h ≠ 0 has no lifting with zero trace (divergence theorem)");
    } else {
      const ComplexScalarField vstar = solve_poiseuille(cs, nu);
      const VecC psi = vstar.values / vstar.flux();
      L.w3 = (L.mean / lambda) * psi;
      g = Mh - lambda * (op.C.cast<cplx>() * L.w3);
    }
  } else {
    const std::vector<Vec2> nrm = trace_normals ? *trace_normals : discrete_trace_normals(V);
    VecR n1(nt), n2(nt);
    for (int k = 0; k < nt; ++k) {
      n1[k] = nrm[k].x();
      n2[k] = nrm[k].y();
    }
    const auto& S = cs->stokes();
    const double Fn = (S.Bx_b * n1 + S.By_b * n2).sum();
    const cplx c = L.mean / Fn;
    w1b = c * n1.cast<cplx>();
    w2b = c * n2.cast<cplx>();
  }
  detail::stokes_lift_solve(*cs, g, w1b, w2b, L.w1, L.w2);

  const VecC div = op.Bx.cast<cplx>() * L.w1 + op.By.cast<cplx>() * L.w2 + lambda * (op.C.cast<cplx>() * L.w3);
  const double scale = std::max(Mh.norm(), 1e-300);
  L.residual = Mh.norm() == 0.0 ? div.norm() : (div - Mh).norm() / scale;
  auto h1 = [&](const VecC& v) {
    return std::sqrt(std::max(0.0, v.dot(op.M.cast<cplx>() * v).real() + v.dot(op.K.cast<cplx>() * v).real()));
  };
  L.norm_w_prime_h1 = std::hypot(h1(L.w1), h1(L.w2));
  L.norm_w3_h1 = h1(L.w3);
  return L;
}

// Discrete inf-sup constant of the Taylor–Hood pair with Dirichlet velocity:
// sqrt of the smallest eigenvalue of B K⁻¹ Bᵀ against M_p on mean-free pressures.
inline double inf_sup_constant(const CrossSectionPtr& cs, int iterations = 200) {
  const auto& S = cs->stokes();
  const auto& op = cs->ops();
  const int ni = S.ni, np = S.np;
  const VecR ones = VecR::Ones(np);
  const VecR m = op.Mp * ones;
  const double area = m.sum();
  auto project = [&](VecR q) {
    q.array() -= m.dot(q) / area;
    return q;
  };
  VecR q = project(VecR::LinSpaced(np, -1.0, 1.0).array().sin().matrix());
  double mu = 0.0;
  for (int it = 0; it < iterations; ++it) {
    // Schur solve: [K Bᵀ; B 0][w; p] = [0; M q] gives p = −S⁻¹ M q
    VecR rhs = VecR::Zero(2 * ni + np + 1);
    rhs.segment(2 * ni, np) = op.Mp * q;
    const VecR x = S.lu.solve(rhs);
    VecR y = project(-x.segment(2 * ni, np));
    const double nrm = std::sqrt(y.dot(op.Mp * y));
    const double mu_new = 1.0 / nrm * std::sqrt(q.dot(op.Mp * q));
    q = y / nrm;
    if (it > 5 && std::abs(mu_new - mu) < 1e-10 * mu_new) {
      mu = mu_new;
      break;
    }
    mu = mu_new;
  }
  return std::sqrt(mu);
}

// ‖v̂‖₀·(1+|ω|) across a frequency sweep (f ≡ 1 forcing).
inline std::vector<double> womersley_energy_sweep(const CrossSectionPtr& cs, double nu,
                                                  const std::vector<double>& omegas) {
  std::vector<double> out;
  for (double w : omegas) {
    const auto sol = solve_womersley_mode(cs, nu, w);
    out.push_back(l2_norm(cs, sol.field.values) * (1.0 + std::abs(w)));
  }
  return out;
}

}  // namespace vesselmode
