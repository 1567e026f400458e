#pragma once

#include <vesselmode/modal_stokes.hpp>
#include <vesselmode/wall_model.hpp>

#include <iomanip>

namespace vesselmode {

enum class PencilKind { rigid, elastic };

// Unknown ordering: [v1_int | v2_int | v3_int | u1 | u2 | u3 | p]; the wall
// blocks are empty for the rigid pencil.
struct PencilLayout {
  int ni = 0, nt = 0, nv = 0;
  bool wall = false;

  int off_v(int comp) const { return comp * ni; }
  int off_u(int comp) const { return 3 * ni + comp * nt; }
  int off_p() const { return 3 * ni + (wall ? 3 * nt : 0); }
  int dim() const { return off_p() + nv; }
};

struct PencilContext {
  PencilKind kind = PencilKind::rigid;
  double omega = 0.0, nu = 0.0;
  CrossSectionPtr cs;
  std::optional<WallMaterial> material;
  std::shared_ptr<const WallGrid> wall;
  PencilLayout layout;
  std::vector<Vec2> trace_n, trace_t;  // exact curve frame at the trace nodes

  SpMatC A0, A1, A2;  // A(λ) = A0 + λA1 + λ²A2, identical sparsity
  SpMatC S0, S1, S2;  // same pencil in the diagonal Gram scaling
  VecR gram;          // diagonal of the Gram matrix used for scaling
  SpMatC T;           // reduced unknowns → full [v1 | v2 | v3 (all P2 nodes) | p]

  cplx mu(cplx lambda) const { return cplx(0.0, omega) - nu * lambda * lambda; }
  int dim() const { return layout.dim(); }

  SpMatC evaluate(cplx lambda) const { return combine(A0, A1, A2, lambda); }
  SpMatC evaluate_scaled(cplx lambda) const { return combine(S0, S1, S2, lambda); }
  SpMatC derivative_scaled(cplx lambda) const { return combine(S1, S2, S2, 0.0, 2.0 * lambda); }

  VecC scale_down(const VecC& x) const { return x.cwiseProduct(gram.cwiseSqrt().cast<cplx>()); }
  VecC scale_up(const VecC& y) const { return y.cwiseQuotient(gram.cwiseSqrt().cast<cplx>()); }

 private:
  // Value arrays combined directly: all three coefficients share one pattern.
  static SpMatC combine(const SpMatC& X0, const SpMatC& X1, const SpMatC& X2, cplx lambda, cplx c2 = cplx(0.0)) {
    SpMatC A = X0;
    const cplx l2 = (c2 == cplx(0.0)) ? lambda * lambda : cplx(0.0);
    const cplx c1 = (c2 == cplx(0.0)) ? lambda : cplx(1.0);
    const Eigen::Index nnz = A.nonZeros();
    cplx* a = A.valuePtr();
    const cplx *x1 = X1.valuePtr(), *x2 = X2.valuePtr();
    if (c2 == cplx(0.0)) {
      for (Eigen::Index k = 0; k < nnz; ++k) a[k] += c1 * x1[k] + l2 * x2[k];
    } else {
      // derivative: X0 = A1, X1 = X2 = A2, value A1 + 2λA2
      for (Eigen::Index k = 0; k < nnz; ++k) a[k] += c2 * x1[k];
    }
    return A;
  }
};

namespace detail {

// Copy of A on the (superset) sparsity of P.
inline SpMatC on_pattern(const SpMatC& P, const SpMatC& A) {
  SpMatC out = P;
  for (Eigen::Index k = 0; k < out.nonZeros(); ++k) out.valuePtr()[k] = 0.0;
  for (int j = 0; j < A.outerSize(); ++j) {
    SpMatC::InnerIterator ip(out, j);
    for (SpMatC::InnerIterator it(A, j); it; ++it) {
      while (ip && ip.row() < it.row()) ++ip;
      ip.valueRef() = it.value();
    }
  }
  return out;
}

inline void unify(PencilContext& c) {
  SpMatC P = c.A0 + c.A1 + c.A2;
  // structural union also where values cancel
  SpMatC Z0 = c.A0, Z1 = c.A1, Z2 = c.A2;
  for (SpMatC* Z : {&Z0, &Z1, &Z2})
    for (Eigen::Index k = 0; k < Z->nonZeros(); ++k) Z->valuePtr()[k] = 1.0;
  P = Z0 + Z1 + Z2;
  P.makeCompressed();
  c.A0 = on_pattern(P, c.A0);
  c.A1 = on_pattern(P, c.A1);
  c.A2 = on_pattern(P, c.A2);
  const VecC d = c.gram.cwiseSqrt().cwiseInverse().cast<cplx>();
  auto scale = [&](const SpMatC& A) {
    SpMatC S = d.asDiagonal() * A * d.asDiagonal();
    return on_pattern(P, S);
  };
  c.S0 = scale(c.A0);
  c.S1 = scale(c.A1);
  c.S2 = scale(c.A2);
}

inline void add_block(std::vector<TripletC>& t, const SpMatR& A, int r0, int c0, cplx f, bool transpose = false) {
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMatR::InnerIterator it(A, k); it; ++it) {
      if (transpose)
        t.emplace_back(r0 + int(it.col()), c0 + int(it.row()), f * it.value());
      else
        t.emplace_back(r0 + int(it.row()), c0 + int(it.col()), f * it.value());
    }
}

inline SpMatC from_triplets(int rows, int cols, const std::vector<TripletC>& t) {
  SpMatC A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// Fluid form on all P2 nodes: coefficient matrices of the (sym-grad) Â
// restricted to (v, p), full numbering [v1 | v2 | v3 | p].
inline std::array<SpMatC, 3> fluid_full_matrices(const CrossSection& cs, double nu, double omega) {
  const auto& op = cs.ops();
  const int n = cs.space().size(), nv = cs.space().n_vertices();
  const int dim = 3 * n + nv;
  const cplx iw(0.0, omega);
  std::vector<TripletC> t0, t1, t2;
  for (int a = 0; a < 3; ++a) add_block(t0, op.M, a * n, a * n, iw);
  add_block(t0, op.Kxx, 0, 0, 2.0 * nu);
  add_block(t0, op.Kyy, 0, 0, nu);
  add_block(t0, op.Kyx, 0, n, nu);
  add_block(t0, op.Kxy, n, 0, nu);
  add_block(t0, op.Kyy, n, n, 2.0 * nu);
  add_block(t0, op.Kxx, n, n, nu);
  add_block(t0, op.K, 2 * n, 2 * n, nu);
  // pressure and divergence
  add_block(t0, op.Bx, 0, 3 * n, -1.0, true);
  add_block(t0, op.By, n, 3 * n, -1.0, true);
  add_block(t0, op.Bx, 3 * n, 0, 1.0);
  add_block(t0, op.By, 3 * n, n, 1.0);
  // λ¹: ε_i3 cross terms and the λp / λv₃ couplings
  add_block(t1, op.Gx, 2 * n, 0, nu, true);
  add_block(t1, op.Gy, 2 * n, n, nu, true);
  add_block(t1, op.Gx, 0, 2 * n, -nu);
  add_block(t1, op.Gy, n, 2 * n, -nu);
  add_block(t1, op.C, 2 * n, 3 * n, 1.0, true);
  add_block(t1, op.C, 3 * n, 2 * n, 1.0);
  // λ²
  add_block(t2, op.M, 0, 0, -nu);
  add_block(t2, op.M, n, n, -nu);
  add_block(t2, op.M, 2 * n, 2 * n, -2.0 * nu);
  return {from_triplets(dim, dim, t0), from_triplets(dim, dim, t1), from_triplets(dim, dim, t2)};
}

}  // namespace detail

// Rigid-wall pencil S(λ): per component (iω − νλ²)M + νK on interior nodes,
// pressure gradient −Bᵀ, λp in the axial row and the modal divergence row.
inline PencilContext assemble_rigid_pencil(const CrossSectionPtr& cs, double nu, double omega) {
  if (!(nu > 0)) throw Error(ErrorKind::domain, "viscosity must be positive");
  PencilContext c;
  c.kind = PencilKind::rigid;
  c.omega = omega;
  c.nu = nu;
  c.cs = cs;
  const auto& V = cs->space();
  const auto& op = cs->ops();
  c.layout = {int(V.interior().size()), int(V.trace().size()), V.n_vertices(), false};
  const auto& L = c.layout;
  const int ni = L.ni, nv = L.nv, n = V.size(), dim = L.dim();
  const std::vector<int> prow = iota_vec(nv);
  const SpMatR Bx = select(op.Bx, prow, V.interior()), By = select(op.By, prow, V.interior()),
               C = select(op.C, prow, V.interior());
  std::vector<TripletC> t0, t1, t2;
  for (int a = 0; a < 3; ++a) {
    detail::add_block(t0, cs->Mii(), L.off_v(a), L.off_v(a), cplx(0.0, omega));
    detail::add_block(t0, cs->Kii(), L.off_v(a), L.off_v(a), nu);
    detail::add_block(t2, cs->Mii(), L.off_v(a), L.off_v(a), -nu);
  }
  detail::add_block(t0, Bx, L.off_v(0), L.off_p(), -1.0, true);
  detail::add_block(t0, By, L.off_v(1), L.off_p(), -1.0, true);
  detail::add_block(t0, Bx, L.off_p(), L.off_v(0), 1.0);
  detail::add_block(t0, By, L.off_p(), L.off_v(1), 1.0);
  detail::add_block(t1, C, L.off_v(2), L.off_p(), 1.0, true);
  detail::add_block(t1, C, L.off_p(), L.off_v(2), 1.0);
  c.A0 = detail::from_triplets(dim, dim, t0);
  c.A1 = detail::from_triplets(dim, dim, t1);
  c.A2 = detail::from_triplets(dim, dim, t2);

  c.gram = VecR::Zero(dim);
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < ni; ++i) {
      const int g = V.interior()[i];
      c.gram[L.off_v(a) + i] = op.M.coeff(g, g) + op.K.coeff(g, g);
    }
  for (int k = 0; k < nv; ++k) c.gram[L.off_p() + k] = op.Mp.coeff(k, k);

  std::vector<TripletC> tt;
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < ni; ++i) tt.emplace_back(a * n + V.interior()[i], L.off_v(a) + i, 1.0);
  for (int k = 0; k < nv; ++k) tt.emplace_back(3 * n + k, L.off_p() + k, 1.0);
  c.T = detail::from_triplets(3 * n + nv, dim, tt);
  detail::unify(c);
  return c;
}

// Scaled wall block weights w_i/σ_i and the strain maps on the trace nodes.
struct CoupledWallBlocks {
  MatR W0, W1, W2;  // a-form coefficient matrices with 1/σ weights
  VecR mass, spring;  // diag(w ρ/σ) and diag(w k/σ)
};

inline CoupledWallBlocks coupled_wall_blocks(const WallGrid& g) {
  WallDiscretization w = wall_discretization(g);
  const int N = g.size();
  for (int r = 0; r < 3 * N; ++r) w.WQ.row(r) /= g.sigma[r % N];
  CoupledWallBlocks b;
  b.W0 = w.G0.transpose() * w.WQ * w.G0;
  b.W1 = w.G0.transpose() * w.WQ * w.G1 - w.G1.transpose() * w.WQ * w.G0;
  b.W2 = -w.G1.transpose() * w.WQ * w.G1;
  b.mass = g.weight() * g.rho.cwiseQuotient(g.sigma);
  b.spring = g.weight() * g.k.cwiseQuotient(g.sigma);
  return b;
}

// Elastic pencil Θ(λ): fluid form Â with the kinematic constraint v|γ = iωu
// eliminated by substitution, plus iω(a(u,û;λ) − ω²∫ρuû + ∫k u₁û₁) with 1/σ
// weights.
inline PencilContext assemble_elastic_pencil(const CrossSectionPtr& cs, const BoundaryCurve& curve, double nu,
                                             double omega, const WallMaterial& material) {
  if (!(nu > 0)) throw Error(ErrorKind::domain, "viscosity must be positive");
  if (omega == 0.0)
    throw Error(ErrorKind::unsupported_parameter,
                "ω = 0: the constrained space degenerates; use static_wall_solve for the steady wall");
  const auto& V = cs->space();
  const auto& op = cs->ops();
  if (!V.uniform_trace()) throw Error(ErrorKind::mesh, "wall coupling needs trace nodes at uniform arclength");
  if (std::abs(V.mesh().curve_length() - curve.length()) > 1e-9 * curve.length())
    throw Error(ErrorKind::interface, "mesh boundary length does not match the curve");

  PencilContext c;
  c.kind = PencilKind::elastic;
  c.omega = omega;
  c.nu = nu;
  c.cs = cs;
  c.material = material;
  c.layout = {int(V.interior().size()), int(V.trace().size()), V.n_vertices(), true};
  const auto& L = c.layout;
  const int n = V.size(), nt = L.nt, nv = L.nv, dim = L.dim();
  c.wall = std::make_shared<const WallGrid>(make_wall_grid(curve, material, nt));
  c.trace_n.resize(nt);
  c.trace_t.resize(nt);
  for (int k = 0; k < nt; ++k) {
    const CurvePoint p = curve.at(V.trace_s()[k]);
    c.trace_n[k] = p.normal;
    c.trace_t[k] = p.tangent;
  }

  const cplx iw(0.0, omega);
  std::vector<TripletC> tt;
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < L.ni; ++i) tt.emplace_back(a * n + V.interior()[i], L.off_v(a) + i, 1.0);
  for (int k = 0; k < nt; ++k) {
    const int g = V.trace()[k];
    tt.emplace_back(g, L.off_u(0) + k, iw * c.trace_n[k].x());
    tt.emplace_back(n + g, L.off_u(0) + k, iw * c.trace_n[k].y());
    tt.emplace_back(g, L.off_u(1) + k, iw * c.trace_t[k].x());
    tt.emplace_back(n + g, L.off_u(1) + k, iw * c.trace_t[k].y());
    tt.emplace_back(2 * n + g, L.off_u(2) + k, iw);
  }
  for (int k = 0; k < nv; ++k) tt.emplace_back(3 * n + k, L.off_p() + k, 1.0);
  c.T = detail::from_triplets(3 * n + nv, dim, tt);

  const auto full = detail::fluid_full_matrices(*cs, nu, omega);
  const SpMatC Th = c.T.adjoint();
  SpMatC F0 = Th * full[0] * c.T, F1 = Th * full[1] * c.T, F2 = Th * full[2] * c.T;

  const CoupledWallBlocks wb = coupled_wall_blocks(*c.wall);
  std::vector<TripletC> w0, w1, w2;
  const int u0 = L.off_u(0);
  for (int r = 0; r < 3 * nt; ++r)
    for (int q = 0; q < 3 * nt; ++q) {
      if (wb.W0(r, q) != 0.0) w0.emplace_back(u0 + r, u0 + q, iw * wb.W0(r, q));
      if (wb.W1(r, q) != 0.0) w1.emplace_back(u0 + r, u0 + q, iw * wb.W1(r, q));
      if (wb.W2(r, q) != 0.0) w2.emplace_back(u0 + r, u0 + q, iw * wb.W2(r, q));
    }
  for (int k = 0; k < nt; ++k) {
    for (int a = 0; a < 3; ++a) w0.emplace_back(L.off_u(a) + k, L.off_u(a) + k, -iw * omega * omega * wb.mass[k]);
    w0.emplace_back(L.off_u(0) + k, L.off_u(0) + k, iw * wb.spring[k]);
  }
  c.A0 = F0 + detail::from_triplets(dim, dim, w0);
  c.A1 = F1 + detail::from_triplets(dim, dim, w1);
  c.A2 = F2 + detail::from_triplets(dim, dim, w2);

  c.gram = VecR::Zero(dim);
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < L.ni; ++i) {
      const int g = V.interior()[i];
      c.gram[L.off_v(a) + i] = op.M.coeff(g, g) + op.K.coeff(g, g);
    }
  const MatR DtD = c.wall->D.transpose() * c.wall->D * c.wall->weight();
  for (int k = 0; k < nt; ++k) {
    const int g = V.trace()[k];
    const double base = omega * omega * (op.M.coeff(g, g) + op.K.coeff(g, g));
    c.gram[L.off_u(0) + k] = base;
    c.gram[L.off_u(1) + k] = base + DtD(k, k);
    c.gram[L.off_u(2) + k] = base + DtD(k, k);
  }
  for (int k = 0; k < nv; ++k) c.gram[L.off_p() + k] = op.Mp.coeff(k, k);
  detail::unify(c);
  return c;
}

// Â assembled element by element straight from the strain definitions at a
// fixed λ (independent of the A0/A1/A2 split), for consistency checks.
inline SpMatC assemble_direct(const PencilContext& c, cplx lambda) {
  const CrossSection& cs = *c.cs;
  const auto& V = cs.space();
  const int n = V.size(), nv = V.n_vertices(), dim_full = 3 * n + nv;
  const auto& rule = rule_degree5();
  const cplx iw(0.0, c.omega);
  const double nu = c.nu;
  const cplx lt = -std::conj(lambda);  // test parameter −λ̄
  std::vector<TripletC> t;
  using Eps = Eigen::Matrix<cplx, 3, 3>;
  auto strain = [](const P2Local& s, int r, int comp, cplx lam) {
    // ε(φ_r e_comp; λ)
    Eps e = Eps::Zero();
    const Vec2 g = s.grad[r];
    const double phi = s.phi[r];
    if (comp < 2) {
      for (int i = 0; i < 2; ++i) {
        e(i, comp) += 0.5 * g[i];
        e(comp, i) += 0.5 * g[i];
      }
      e(comp, 2) += 0.5 * lam * phi;
      e(2, comp) += 0.5 * lam * phi;
    } else {
      for (int i = 0; i < 2; ++i) {
        e(i, 2) += 0.5 * g[i];
        e(2, i) += 0.5 * g[i];
      }
      e(2, 2) += lam * phi;
    }
    return e;
  };
  for (std::size_t el = 0; el < V.elements().size(); ++el) {
    const auto& E = V.elements()[el];
    const ElementMap em = element_map(V, el);
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const double w = rule.w[q] * em.area;
      const P2Local s = p2_local(em, rule.bary[q]);
      const auto& Lb = rule.bary[q];
      std::array<std::array<Eps, 3>, 6> et, eh;
      for (int r = 0; r < 6; ++r)
        for (int a = 0; a < 3; ++a) {
          et[r][a] = strain(s, r, a, lambda);
          eh[r][a] = strain(s, r, a, lt);
        }
      for (int r = 0; r < 6; ++r)
        for (int a = 0; a < 3; ++a)
          for (int cc = 0; cc < 6; ++cc)
            for (int b = 0; b < 3; ++b) {
              cplx v = 2.0 * nu * (et[cc][b].array() * eh[r][a].conjugate().array()).sum();
              if (a == b) v += iw * s.phi[r] * s.phi[cc];
              if (v != cplx(0.0)) t.emplace_back(a * n + E[r], b * n + E[cc], w * v);
            }
      for (int k = 0; k < 3; ++k)
        for (int r = 0; r < 6; ++r) {
          // −∫p conj(∇·v̂' − λ̄v̂₃) and ∫(∇·v' + λv₃) conj(q̂)
          for (int a = 0; a < 2; ++a) {
            t.emplace_back(a * n + E[r], 3 * n + E[k], -w * Lb[k] * s.grad[r][a]);
            t.emplace_back(3 * n + E[k], a * n + E[r], w * Lb[k] * s.grad[r][a]);
          }
          t.emplace_back(2 * n + E[r], 3 * n + E[k], w * Lb[k] * lambda * s.phi[r]);
          t.emplace_back(3 * n + E[k], 2 * n + E[r], w * Lb[k] * lambda * s.phi[r]);
        }
    }
  }
  const SpMatC Afull = detail::from_triplets(dim_full, dim_full, t);
  SpMatC A = c.T.adjoint() * Afull * c.T;
  if (c.kind == PencilKind::rigid) {
    // the rigid pencil uses the Laplacian form; rebuild it from μ directly
    const auto& L = c.layout;
    const auto& op = cs.ops();
    const std::vector<int> prow = iota_vec(nv);
    std::vector<TripletC> r;
    for (int a = 0; a < 3; ++a) {
      detail::add_block(r, cs.Mii(), L.off_v(a), L.off_v(a), c.mu(lambda));
      detail::add_block(r, cs.Kii(), L.off_v(a), L.off_v(a), nu);
    }
    const SpMatR Bx = select(op.Bx, prow, V.interior()), By = select(op.By, prow, V.interior()),
                 C = select(op.C, prow, V.interior());
    detail::add_block(r, Bx, L.off_v(0), L.off_p(), -1.0, true);
    detail::add_block(r, By, L.off_v(1), L.off_p(), -1.0, true);
    detail::add_block(r, Bx, L.off_p(), L.off_v(0), 1.0);
    detail::add_block(r, By, L.off_p(), L.off_v(1), 1.0);
    detail::add_block(r, C, L.off_v(2), L.off_p(), lambda, true);
    detail::add_block(r, C, L.off_p(), L.off_v(2), lambda);
    return detail::from_triplets(L.dim(), L.dim(), r);
  }
  const auto wb = coupled_wall_blocks(*c.wall);
  WallDiscretization wd = wall_discretization(*c.wall);
  const int nt = c.layout.nt;
  for (int r = 0; r < 3 * nt; ++r) wd.WQ.row(r) /= c.wall->sigma[r % nt];
  const MatC Et = wd.G0.cast<cplx>() + lambda * wd.G1.cast<cplx>();
  const MatC Eh = wd.G0.cast<cplx>() + lt * wd.G1.cast<cplx>();
  MatC Wm = Eh.adjoint() * wd.WQ.cast<cplx>() * Et;
  for (int k = 0; k < nt; ++k) {
    for (int a = 0; a < 3; ++a) Wm(a * nt + k, a * nt + k) -= c.omega * c.omega * wb.mass[k];
    Wm(k, k) += wb.spring[k];
  }
  std::vector<TripletC> tw;
  const int u0 = c.layout.off_u(0);
  for (int r = 0; r < 3 * nt; ++r)
    for (int q = 0; q < 3 * nt; ++q)
      if (Wm(r, q) != cplx(0.0)) tw.emplace_back(u0 + r, u0 + q, iw * Wm(r, q));
  return A + detail::from_triplets(c.dim(), c.dim(), tw);
}

// ---------------------------------------------------------------------------
// States and solves

struct ModalRhs {
  std::array<VecC, 3> f;  // body force at all P2 nodes (empty = 0)
  std::array<VecC, 3> g;  // wall load at trace nodes (elastic only, empty = 0)
  VecC h;                 // divergence data at P1 vertices (empty = 0)
};

struct CoupledResiduals {
  double weak = 0.0;        // ‖Θx − b‖ / ‖b‖
  double kinematic = 0.0;   // max |v|γ − iω(n u₁ + τ u₂, u₃)|
  double divergence = 0.0;  // ‖B v' + λ C v₃ − M_p h‖ / max(‖M_p h‖, ‖B v'‖)
  double pressure_recovery = 0.0;
  double sigma_rel = 0.0;   // spot estimate of σ_min/‖A‖ in the Gram scaling
};

struct ModalCoupledSolution {
  double omega = 0.0;
  cplx lambda{0.0};
  std::array<VecC, 3> v;  // all P2 nodes
  VecC p;                 // P1 vertices
  WallDisplacementField u;
  VecC x;                 // reduced unknown vector
  CoupledResiduals residuals;
};

// Pack a full velocity field and wall displacement into the reduced vector;
// rejects states violating v|γ = iωu.
inline VecC pack_state(const PencilContext& c, const std::array<VecC, 3>& v, const WallDisplacementField& u,
                       const VecC& p, double tol = 1e-10) {
  const auto& V = c.cs->space();
  const auto& L = c.layout;
  VecC x = VecC::Zero(L.dim());
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < L.ni; ++i) x[L.off_v(a) + i] = v[a][V.interior()[i]];
  const cplx iw(0.0, c.omega);
  double viol = 0.0, scale = 1.0;
  for (int k = 0; k < L.nt; ++k) {
    const int g = V.trace()[k];
    Eigen::Vector3cd vb(v[0][g], v[1][g], v[2][g]), ub = Eigen::Vector3cd::Zero();
    if (L.wall) {
      x[L.off_u(0) + k] = u.u1[k];
      x[L.off_u(1) + k] = u.u2[k];
      x[L.off_u(2) + k] = u.u3[k];
      ub << iw * (c.trace_n[k].x() * u.u1[k] + c.trace_t[k].x() * u.u2[k]),
          iw * (c.trace_n[k].y() * u.u1[k] + c.trace_t[k].y() * u.u2[k]), iw * u.u3[k];
    }
    viol = std::max(viol, (vb - ub).norm());
    scale = std::max(scale, vb.norm());
  }
  if (viol > tol * scale)
    throw Error(ErrorKind::interface, "state violates the kinematic constraint v = iωu on γ (defect " +
                                          std::to_string(viol) + ")");
  x.segment(L.off_p(), L.nv) = p;
  return x;
}

inline void unpack_state(const PencilContext& c, const VecC& x, ModalCoupledSolution& s) {
  const auto& L = c.layout;
  const int n = c.cs->space().size();
  const VecC full = c.T * x;
  for (int a = 0; a < 3; ++a) s.v[a] = full.segment(a * n, n);
  s.p = x.segment(L.off_p(), L.nv);
  if (L.wall)
    s.u = {x.segment(L.off_u(0), L.nt), x.segment(L.off_u(1), L.nt), x.segment(L.off_u(2), L.nt)};
  s.x = x;
}

// Load vector b for the reduced system, excluding the divergence rows.
inline VecC assemble_load(const PencilContext& c, const ModalRhs& rhs) {
  const auto& op = c.cs->ops();
  const auto& L = c.layout;
  const int n = c.cs->space().size(), nv = L.nv;
  VecC ffull = VecC::Zero(3 * n + nv);
  for (int a = 0; a < 3; ++a)
    if (rhs.f[a].size() > 0) {
      if (rhs.f[a].size() != n) throw Error(ErrorKind::interface, "f must be given at all P2 nodes");
      ffull.segment(a * n, n) = op.M.cast<cplx>() * rhs.f[a];
    }
  VecC b = c.T.adjoint() * ffull;
  bool has_g = false;
  for (const auto& g : rhs.g) has_g = has_g || g.size() > 0;
  if (has_g) {
    if (!L.wall) throw Error(ErrorKind::interface, "a wall load g needs the elastic pencil");
    const cplx iw(0.0, c.omega);
    for (int a = 0; a < 3; ++a)
      if (rhs.g[a].size() > 0) {
        if (rhs.g[a].size() != L.nt) throw Error(ErrorKind::interface, "g must be given at the trace nodes");
        for (int k = 0; k < L.nt; ++k)
          b[L.off_u(a) + k] += iw * c.wall->weight() / c.wall->sigma[k] * rhs.g[a][k];
      }
  }
  return b;
}

// Velocity lift X̂(g) for a weak divergence target g (P1 rows): the normal
// flux construction with w₃ = 0, tangential trace 0, û₁ = c̃/(iω).
// Returns it in the reduced layout (elastic pencils only).
inline VecC lift_state(const PencilContext& c, const VecC& g) {
  const auto& cs = *c.cs;
  const auto& S = cs.stokes();
  const auto& L = c.layout;
  const int nt = L.nt;
  VecR n1(nt), n2(nt);
  for (int k = 0; k < nt; ++k) {
    n1[k] = c.trace_n[k].x();
    n2[k] = c.trace_n[k].y();
  }
  const double Fn = (S.Bx_b * n1 + S.By_b * n2).sum();
  const cplx ct = g.sum() / Fn;
  VecC w1, w2;
  detail::stokes_lift_solve(cs, g, ct * n1.cast<cplx>(), ct * n2.cast<cplx>(), w1, w2);
  VecC x = VecC::Zero(L.dim());
  const auto& V = cs.space();
  for (int i = 0; i < L.ni; ++i) {
    x[L.off_v(0) + i] = w1[V.interior()[i]];
    x[L.off_v(1) + i] = w2[V.interior()[i]];
  }
  for (int k = 0; k < nt; ++k) x[L.off_u(0) + k] = ct / cplx(0.0, c.omega);
  return x;
}

// Adjoint of g ↦ lift_state(g): y = X̂ᴴ r, via one symmetric Stokes solve.
inline VecC lift_adjoint(const PencilContext& c, const VecC& r) {
  const auto& cs = *c.cs;
  const auto& S = cs.stokes();
  const auto& L = c.layout;
  const int ni = S.ni, np = S.np, nt = L.nt;
  VecR n1(nt), n2(nt);
  for (int k = 0; k < nt; ++k) {
    n1[k] = c.trace_n[k].x();
    n2[k] = c.trace_n[k].y();
  }
  const VecR bn = S.Bx_b * n1 + S.By_b * n2;
  const double Fn = bn.sum();
  // X̂ = P S⁻¹ J g + e_{u1} 1ᵀg /(iω F_n), with
  // J g = [−K_ib n₁ c̃; −K_ib n₂ c̃; g − b_n c̃; 0], c̃ = 1ᵀg/F_n.
  VecC z = VecC::Zero(2 * ni + np + 1);
  z.segment(0, ni) = r.segment(L.off_v(0), ni);
  z.segment(ni, ni) = r.segment(L.off_v(1), ni);
  const VecR zr = S.lu.solve(VecR(z.real())), zi = S.lu.solve(VecR(z.imag()));
  VecC y(zr.size());
  y.real() = zr;
  y.imag() = zi;
  // real operators: plain transposes, no conjugation
  const VecR kn1 = S.Kx_ib * n1, kn2 = S.Kx_ib * n2;
  const cplx tcr = -(kn1.cast<cplx>().transpose() * y.segment(0, ni))(0) -
                   (kn2.cast<cplx>().transpose() * y.segment(ni, ni))(0) -
                   (bn.cast<cplx>().transpose() * y.segment(2 * ni, np))(0);
  const cplx su1 = r.segment(L.off_u(0), nt).sum();
  VecC out = y.segment(2 * ni, np);
  out.array() += (tcr + std::conj(1.0 / cplx(0.0, c.omega)) * su1) / Fn;
  return out;
}

// Pressure recovered from the momentum residual through the lifting pairing.
// X̂ takes the weak divergence vector, so X̂ᴴ r already gives the P1 coefficients.
inline VecC recover_pressure(const PencilContext& c, const SpMatC& A, const VecC& x, const VecC& b) {
  VecC x0 = x;
  x0.segment(c.layout.off_p(), c.layout.nv).setZero();
  VecC r = A * x0 - b;
  r.segment(c.layout.off_p(), c.layout.nv).setZero();
  return lift_adjoint(c, r);
}

// Cheap σ_min/σ_max spot estimate in the Gram scaling from an existing factorization
// of the unscaled matrix.
inline double sigma_rel_spot(const PencilContext& c, const SpMatC& A, const DirectSolver<cplx>& lu, int iters = 6) {
  const VecR d = c.gram.cwiseSqrt();
  const VecC dc = d.cast<cplx>();
  // Ã = D⁻¹AD⁻¹ ⇒ Ã⁻¹ = D A⁻¹ D
  VecC x = VecC::Ones(A.rows()) / std::sqrt(double(A.rows()));
  for (int i = 0; i < A.rows(); ++i) x[i] *= 1.0 + 0.1 * std::sin(1.7 * i);
  x.normalize();
  double smin = 0.0;
  for (int it = 0; it < iters; ++it) {
    VecC y = dc.cwiseProduct(lu.solve_adjoint(dc.cwiseProduct(x)));
    VecC z = dc.cwiseProduct(lu.raw_solve(dc.cwiseProduct(y)));
    const double nz = z.norm();
    smin = 1.0 / std::sqrt(nz);
    x = z / nz;
  }
  // σ_max by a short power iteration on ÃᴴÃ
  VecC q = VecC::Ones(A.rows()).normalized();
  double smax = 0.0;
  for (int it = 0; it < 20; ++it) {
    const VecC aq = A * q.cwiseQuotient(dc);
    VecC w = (A.adjoint() * aq.cwiseQuotient(dc)).cwiseQuotient(dc);
    const double nw = w.norm();
    smax = std::sqrt(nw);
    q = w / nw;
  }
  return smin / smax;
}

inline ModalCoupledSolution solve_modal_coupled(const PencilContext& c, cplx lambda, const ModalRhs& rhs,
                                                double near_threshold = 1e-13) {
  const auto& L = c.layout;
  const auto& op = c.cs->ops();
  const SpMatC A = c.evaluate(lambda);
  DirectSolver<cplx> lu;
  try {
    lu.factorize(A);
  } catch (const Error&) {
    throw NearEigenvalueError(lambda, "singular pencil factorization at λ = (" + std::to_string(lambda.real()) +
                                          ", " + std::to_string(lambda.imag()) + ")");
  }
  ModalCoupledSolution s;
  s.omega = c.omega;
  s.lambda = lambda;
  s.residuals.sigma_rel = sigma_rel_spot(c, A, lu);
  if (s.residuals.sigma_rel < near_threshold)
    throw NearEigenvalueError(lambda, "λ is numerically an eigenvalue of the pencil (σ_rel = " +
                                          std::to_string(s.residuals.sigma_rel) + ")");

  VecC b = assemble_load(c, rhs);
  VecC xw = VecC::Zero(L.dim());
  VecC Mh = VecC::Zero(L.nv);
  if (rhs.h.size() > 0) {
    if (rhs.h.size() != L.nv) throw Error(ErrorKind::interface, "h must be given at mesh vertices");
    Mh = op.Mp.cast<cplx>() * rhs.h;
    if (rhs.h.norm() > 0) {
      if (L.wall) {
        xw = lift_state(c, Mh);
      } else {
        const DivergenceLift dl = divergence_lift(c.cs, rhs.h, lambda, LiftVariant::homogeneous, c.nu);
        const auto& V = c.cs->space();
        for (int i = 0; i < L.ni; ++i) {
          xw[L.off_v(0) + i] = dl.w1[V.interior()[i]];
          xw[L.off_v(1) + i] = dl.w2[V.interior()[i]];
          xw[L.off_v(2) + i] = dl.w3[V.interior()[i]];
        }
      }
    }
  }
  // full right-hand side including the divergence rows
  VecC bfull = b;
  bfull.segment(L.off_p(), L.nv) = Mh;
  const VecC r0 = bfull - A * xw;
  SolveDiagnostics diag;
  const VecC y = lu.solve(r0, &diag, 1e-14, 4);
  const VecC x = y + xw;
  unpack_state(c, x, s);

  const double nb = std::max(bfull.norm(), 1e-300);
  s.residuals.weak = (A * x - bfull).norm() / nb;
  if (bfull.norm() == 0.0) s.residuals.weak = (A * x).norm();
  // kinematic defect from the unpacked fields
  const auto& V = c.cs->space();
  const cplx iw(0.0, c.omega);
  for (int k = 0; k < L.nt; ++k) {
    const int g = V.trace()[k];
    Eigen::Vector3cd vb(s.v[0][g], s.v[1][g], s.v[2][g]), ub = Eigen::Vector3cd::Zero();
    if (L.wall)
      ub << iw * (c.trace_n[k].x() * s.u.u1[k] + c.trace_t[k].x() * s.u.u2[k]),
          iw * (c.trace_n[k].y() * s.u.u1[k] + c.trace_t[k].y() * s.u.u2[k]), iw * s.u.u3[k];
    s.residuals.kinematic = std::max(s.residuals.kinematic, (vb - ub).norm());
  }
  const VecC div = op.Bx.cast<cplx>() * s.v[0] + op.By.cast<cplx>() * s.v[1] + lambda * (op.C.cast<cplx>() * s.v[2]);
  const double dscale = std::max({Mh.norm(), (op.Bx.cast<cplx>() * s.v[0]).norm(), 1e-300});
  s.residuals.divergence = (div - Mh).norm() / dscale;
  if (L.wall) {
    const VecC prec = recover_pressure(c, A, x, b);
    s.residuals.pressure_recovery = (prec - s.p).norm() / std::max(s.p.norm(), 1e-300);
  }
  return s;
}

// Dirichlet (rigid) modal solve for the same (ω, λ, f), via the rigid pencil.
inline ModalCoupledSolution solve_rigid_modal(const CrossSectionPtr& cs, double nu, double omega, cplx lambda,
                                              const ModalRhs& rhs) {
  const PencilContext c = assemble_rigid_pencil(cs, nu, omega);
  return solve_modal_coupled(c, lambda, rhs);
}

// ---------------------------------------------------------------------------
// Probes

inline double vector_l2(const CrossSectionPtr& cs, const std::array<VecC, 3>& v) {
  double acc = 0.0;
  for (const auto& c : v) acc += c.dot(cs->ops().M.cast<cplx>() * c).real();
  return std::sqrt(std::max(0.0, acc));
}

inline double vector_h1_semi(const CrossSectionPtr& cs, const std::array<VecC, 3>& v) {
  double acc = 0.0;
  for (const auto& c : v) acc += c.dot(cs->ops().K.cast<cplx>() * c).real();
  return std::sqrt(std::max(0.0, acc));
}

// E(v,v) = ∫Σ_{i,j≤2}|ε_ij(v)|².
inline double planar_strain_energy(const FemOperators& op, const VecC& v1, const VecC& v2) {
  auto q = [](const SpMatR& A, const VecC& x, const VecC& y) { return x.dot(A.cast<cplx>() * y); };
  const cplx e = q(op.Kxx, v1, v1) + q(op.Kyy, v2, v2) + 0.5 * (q(op.Kxx, v2, v2) + q(op.Kyy, v1, v1)) +
                 q(op.Kyx, v1, v2).real();
  return e.real();
}

struct CoercivityReport {
  double c_measured = 0.0;
  std::vector<double> q_values;
  std::vector<double> korn_trace_constant;  // per q
};

namespace detail {

// Smooth random field: low-degree polynomial in (x, y) with normal coefficients.
inline VecC random_field(const P2Space& V, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::array<cplx, 10> a;
  for (auto& z : a) z = cplx(nd(rng), nd(rng));
  VecC f(V.size());
  for (int i = 0; i < V.size(); ++i) {
    const double x = V.nodes()[i].x(), y = V.nodes()[i].y();
    const std::array<double, 10> m = {1, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y};
    cplx s = 0.0;
    for (int k = 0; k < 10; ++k) s += a[k] * m[k];
    f[i] = s;
  }
  return f;
}

}  // namespace detail

// Re Â(v,0,u; v,u; iξ) against E(v,v) + ξ²‖v₃‖² + ‖iξv' + ∇v₃‖² on random
// constrained states, and the trace constant of q∫_γ|v'|² ≤ c₃(q²‖v'‖² + E(v,v)).
inline CoercivityReport coercivity_probe(const PencilContext& c, double xi, int trials = 100,
                                         std::uint64_t seed = 0x5EED) {
  if (trials < 100) throw Error(ErrorKind::domain, "coercivity probe needs at least 100 trials");
  const auto& V = c.cs->space();
  const auto& op = c.cs->ops();
  const auto& L = c.layout;
  std::mt19937_64 rng(seed);
  const cplx lam(0.0, xi);
  const SpMatC A = c.evaluate(lam);
  CoercivityReport rep;
  rep.c_measured = std::numeric_limits<double>::infinity();
  const cplx iw(0.0, c.omega);
  for (int t = 0; t < trials; ++t) {
    std::array<VecC, 3> v;
    for (auto& comp : v) comp = detail::random_field(V, rng);
    WallDisplacementField u;
    if (L.wall) {
      u = {VecC(L.nt), VecC(L.nt), VecC(L.nt)};
      for (int k = 0; k < L.nt; ++k) {
        const int g = V.trace()[k];
        const Vec2 nn = c.trace_n[k], tt = c.trace_t[k];
        u.u1[k] = (nn.x() * v[0][g] + nn.y() * v[1][g]) / iw;
        u.u2[k] = (tt.x() * v[0][g] + tt.y() * v[1][g]) / iw;
        u.u3[k] = v[2][g] / iw;
        // make the trace exactly representable in the curve frame
        v[0][g] = iw * (nn.x() * u.u1[k] + tt.x() * u.u2[k]);
        v[1][g] = iw * (nn.y() * u.u1[k] + tt.y() * u.u2[k]);
      }
    } else {
      for (auto& comp : v)
        for (int g : V.trace()) comp[g] = 0.0;
    }
    const VecC x = pack_state(c, v, u, VecC::Zero(L.nv));
    const double re = x.dot(A * x).real();
    const double E = planar_strain_energy(op, v[0], v[1]);
    double cross = 0.0;
    for (int a = 0; a < 2; ++a) {
      const SpMatR& G = a == 0 ? op.Gx : op.Gy;
      const SpMatR& Kaa = a == 0 ? op.Kxx : op.Kyy;
      cross += (xi * xi * v[a].dot(op.M.cast<cplx>() * v[a]) + v[2].dot(Kaa.cast<cplx>() * v[2])).real();
      // 2 Re ∫ iξ v_a conj(∂_a v₃)
      cross += 2.0 * (lam * v[2].dot(SpMatR(G.transpose()).cast<cplx>() * v[a])).real();
    }
    const double fun = E + xi * xi * v[2].dot(op.M.cast<cplx>() * v[2]).real() + cross;
    rep.c_measured = std::min(rep.c_measured, re / fun);
  }

  // trace constant: largest generalized eigenvalue of q·M_γ against q²M + E on v'
  const int n = V.size();
  std::vector<TripletR> te, tb;
  auto add = [&](std::vector<TripletR>& t, const SpMatR& Am, int r0, int c0, double f) {
    for (int k = 0; k < Am.outerSize(); ++k)
      for (SpMatR::InnerIterator it(Am, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), f * it.value());
  };
  add(te, op.Kxx, 0, 0, 1.0);
  add(te, op.Kyy, n, n, 1.0);
  add(te, op.Kxx, n, n, 0.5);
  add(te, op.Kyy, 0, 0, 0.5);
  add(te, op.Kyx, 0, n, 0.5);
  add(te, op.Kxy, n, 0, 0.5);
  SpMatR Es(2 * n, 2 * n), Ms(2 * n, 2 * n), Mg(2 * n, 2 * n);
  Es.setFromTriplets(te.begin(), te.end());
  std::vector<TripletR> tm;
  add(tm, op.M, 0, 0, 1.0);
  add(tm, op.M, n, n, 1.0);
  Ms.setFromTriplets(tm.begin(), tm.end());
  for (int k = 0; k < op.Mb.outerSize(); ++k)
    for (SpMatR::InnerIterator it(op.Mb, k); it; ++it) {
      const int r = V.trace()[it.row()], cc = V.trace()[it.col()];
      tb.emplace_back(r, cc, it.value());
      tb.emplace_back(n + r, n + cc, it.value());
    }
  Mg.setFromTriplets(tb.begin(), tb.end());
  for (double q : {1.0, 4.0, 16.0}) {
    SpMatR Aq = q * q * Ms + Es;
    Eigen::SimplicialLDLT<SpMatR> ch(Aq);
    VecR x = VecR::Ones(2 * n);
    double mu = 0.0;
    for (int it = 0; it < 300; ++it) {
      VecR y = ch.solve(q * (Mg * x));
      const double nrm = std::sqrt(y.dot(Aq * y));
      const double mu_new = x.dot(q * (Mg * x)) / x.dot(Aq * x);
      x = y / nrm;
      if (it > 10 && std::abs(mu_new - mu) < 1e-10 * mu_new) {
        mu = mu_new;
        break;
      }
      mu = mu_new;
    }
    rep.q_values.push_back(q);
    rep.korn_trace_constant.push_back(mu);
  }
  return rep;
}

// Coordinate-format export "row col re im" of A0, A1, A2.
inline void export_pencil_coo(const PencilContext& c, std::ostream& os) {
  os << std::setprecision(17);
  const std::array<const SpMatC*, 3> m = {&c.A0, &c.A1, &c.A2};
  for (int k = 0; k < 3; ++k) {
    os << "# A" << k << " " << c.dim() << " " << c.dim() << "\n";
    for (int j = 0; j < m[k]->outerSize(); ++j)
      for (SpMatC::InnerIterator it(*m[k], j); it; ++it)
        if (it.value() != cplx(0.0))
          os << it.row() << " " << it.col() << " " << it.value().real() << " " << it.value().imag() << "\n";
  }
}

}  // namespace vesselmode
