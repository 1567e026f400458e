#pragma once

#include <vesselmode/mesh.hpp>

#include <map>
#include <memory>

namespace vesselmode {

// Quadratic Lagrange space on a CrossSectionMesh. Node numbering: mesh
// vertices first, then one node per edge (chord midpoint). Local element
// order: v0, v1, v2, m01, m12, m20.
class P2Space {
 public:
  explicit P2Space(CrossSectionMesh mesh) : mesh_(std::make_shared<const CrossSectionMesh>(std::move(mesh))) {
    const auto& m = *mesh_;
    nv_ = int(m.nodes.size());
    nodes_ = m.nodes;
    std::map<std::pair<int, int>, int> edge_id;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = edge_id.find(key);
      if (it != edge_id.end()) return it->second;
      const int id = int(nodes_.size());
      nodes_.push_back(0.5 * (m.nodes[a] + m.nodes[b]));
      edge_id.emplace(key, id);
      return id;
    };
    elems_.reserve(m.triangles.size());
    for (const auto& t : m.triangles)
      elems_.push_back({t[0], t[1], t[2], mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0])});

    on_boundary_.assign(nodes_.size(), 0);
    for (const auto& e : m.bedges) {
      auto it = edge_id.find(std::minmax(e.a, e.b));
      if (it == edge_id.end()) throw Error(ErrorKind::mesh, "boundary edge not present in triangulation");
      trace_.push_back(e.a);
      trace_s_.push_back(e.s_lo);
      trace_.push_back(it->second);
      trace_s_.push_back(0.5 * (e.s_lo + e.s_hi));
      trace_edge_.push_back({e.a, it->second, e.b});
      on_boundary_[e.a] = on_boundary_[it->second] = 1;
    }
    interior_index_.assign(nodes_.size(), -1);
    for (int i = 0; i < int(nodes_.size()); ++i)
      if (!on_boundary_[i]) {
        interior_index_[i] = int(interior_.size());
        interior_.push_back(i);
      }
    trace_index_.assign(nodes_.size(), -1);
    for (int k = 0; k < int(trace_.size()); ++k) trace_index_[trace_[k]] = k;
  }

  const CrossSectionMesh& mesh() const { return *mesh_; }
  int size() const { return int(nodes_.size()); }
  int n_vertices() const { return nv_; }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<std::array<int, 6>>& elements() const { return elems_; }
  // Boundary P2 nodes in arclength order and their parameters s.
  const std::vector<int>& trace() const { return trace_; }
  const std::vector<double>& trace_s() const { return trace_s_; }
  // Boundary edges as (vertex, midpoint, vertex) in trace numbering order.
  const std::vector<std::array<int, 3>>& trace_edges() const { return trace_edge_; }
  const std::vector<int>& interior() const { return interior_; }
  int interior_index(int node) const { return interior_index_[node]; }
  int trace_index(int node) const { return trace_index_[node]; }
  bool on_boundary(int node) const { return on_boundary_[node] != 0; }

  // True when the trace nodes are equispaced in arclength (needed by the
  // spectral wall discretization).
  bool uniform_trace(double tol = 1e-9) const {
    const double L = mesh_->curve_length();
    const std::size_t n = trace_s_.size();
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(trace_s_[k] - L * double(k) / double(n)) > tol * L) return false;
    return true;
  }

 private:
  std::shared_ptr<const CrossSectionMesh> mesh_;
  int nv_ = 0;
  std::vector<Vec2> nodes_;
  std::vector<std::array<int, 6>> elems_;
  std::vector<int> trace_;
  std::vector<double> trace_s_;
  std::vector<std::array<int, 3>> trace_edge_;
  std::vector<char> on_boundary_;
  std::vector<int> interior_, interior_index_, trace_index_;
};

// ---------------------------------------------------------------------------
// Reference-triangle quadrature in barycentric coordinates (weights sum to 1).

struct TriangleRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;
};

// Degree-5, 7-point rule.
inline const TriangleRule& rule_degree5() {
  static const TriangleRule r = [] {
    TriangleRule q;
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0, b1 = (9.0 + 2.0 * s15) / 21.0;
    const double a2 = (6.0 + s15) / 21.0, b2 = (9.0 - 2.0 * s15) / 21.0;
    const double w1 = (155.0 - s15) / 1200.0, w2 = (155.0 + s15) / 1200.0;
    q.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    q.w.push_back(9.0 / 40.0);
    for (auto [a, b, w] : {std::tuple{a1, b1, w1}, std::tuple{a2, b2, w2}}) {
      q.bary.push_back({a, a, b});
      q.bary.push_back({a, b, a});
      q.bary.push_back({b, a, a});
      q.w.insert(q.w.end(), 3, w);
    }
    return q;
  }();
  return r;
}

// Collapsed Gauss-Legendre rule with n² points, for error integrals.
inline TriangleRule rule_collapsed(int n) {
  const GaussRule g = gauss_legendre(n);
  TriangleRule q;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = 0.5 * (g.x[i] + 1.0), v = 0.5 * (g.x[j] + 1.0);
      const double l1 = u, l2 = (1.0 - u) * v;
      q.bary.push_back({1.0 - l1 - l2, l1, l2});
      q.w.push_back(0.25 * g.w[i] * g.w[j] * (1.0 - u) * 2.0);
    }
  return q;
}

struct P2Local {
  std::array<double, 6> phi;
  std::array<Vec2, 6> grad;
};

struct ElementMap {
  Vec2 x0;
  Eigen::Matrix2d J;
  double area = 0.0;
  std::array<Vec2, 3> gbar;  // gradients of barycentric coordinates

  Vec2 point(const std::array<double, 3>& L) const { return x0 + J * Vec2(L[1], L[2]); }
};

inline ElementMap element_map(const P2Space& V, std::size_t e) {
  const auto& el = V.elements()[e];
  const auto& X = V.nodes();
  ElementMap m;
  m.x0 = X[el[0]];
  m.J.col(0) = X[el[1]] - X[el[0]];
  m.J.col(1) = X[el[2]] - X[el[0]];
  const double det = m.J.determinant();
  m.area = 0.5 * det;
  const Eigen::Matrix2d Jit = m.J.inverse().transpose();
  m.gbar[1] = Jit.col(0);
  m.gbar[2] = Jit.col(1);
  m.gbar[0] = -m.gbar[1] - m.gbar[2];
  return m;
}

inline P2Local p2_local(const ElementMap& m, const std::array<double, 3>& L) {
  P2Local s;
  for (int i = 0; i < 3; ++i) {
    s.phi[i] = L[i] * (2.0 * L[i] - 1.0);
    s.grad[i] = (4.0 * L[i] - 1.0) * m.gbar[i];
  }
  const int ea[3] = {0, 1, 2}, eb[3] = {1, 2, 0};
  for (int k = 0; k < 3; ++k) {
    const int a = ea[k], b = eb[k];
    s.phi[3 + k] = 4.0 * L[a] * L[b];
    s.grad[3 + k] = 4.0 * (L[b] * m.gbar[a] + L[a] * m.gbar[b]);
  }
  return s;
}

// All real matrices the solvers combine. Rows index test functions.
struct FemOperators {
  SpMatR M, K, Kxx, Kxy, Kyx, Kyy, Gx, Gy;  // P2 × P2; K_ab = ∫∂_aφ_r ∂_bφ_c, G_a = ∫φ_r ∂_aφ_c
  VecR load;                                // ∫φ_r
  SpMatR Mp, Bx, By, C;                     // P1 rows: Mp = ∫ψψ, B_a = ∫ψ ∂_aφ, C = ∫ψ φ
  SpMatR Mb;                                // boundary P2 mass in trace numbering
};

inline FemOperators assemble_operators(const P2Space& V) {
  const int n = V.size(), nv = V.n_vertices();
  const auto& rule = rule_degree5();
  std::vector<TripletR> tM, tK, tKxx, tKxy, tKyx, tKyy, tGx, tGy, tMp, tBx, tBy, tC;
  const std::size_t ne = V.elements().size();
  for (auto* v : {&tM, &tK, &tKxx, &tKxy, &tKyx, &tKyy, &tGx, &tGy}) v->reserve(ne * 36);
  for (auto* v : {&tBx, &tBy, &tC}) v->reserve(ne * 18);
  tMp.reserve(ne * 9);
  FemOperators op;
  op.load = VecR::Zero(n);

  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = V.elements()[e];
    const ElementMap em = element_map(V, e);
    Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Zero(), kxx = m, kxy = m, kyx = m, kyy = m,
                                gx = m, gy = m;
    Eigen::Matrix<double, 3, 6> bx = Eigen::Matrix<double, 3, 6>::Zero(), by = bx, c = bx;
    Eigen::Matrix3d mp = Eigen::Matrix3d::Zero();
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const double w = rule.w[q] * em.area;
      const P2Local s = p2_local(em, rule.bary[q]);
      const auto& L = rule.bary[q];
      for (int r = 0; r < 6; ++r) {
        op.load[el[r]] += w * s.phi[r];
        for (int cc = 0; cc < 6; ++cc) {
          m(r, cc) += w * s.phi[r] * s.phi[cc];
          kxx(r, cc) += w * s.grad[r].x() * s.grad[cc].x();
          kxy(r, cc) += w * s.grad[r].x() * s.grad[cc].y();
          kyx(r, cc) += w * s.grad[r].y() * s.grad[cc].x();
          kyy(r, cc) += w * s.grad[r].y() * s.grad[cc].y();
          gx(r, cc) += w * s.phi[r] * s.grad[cc].x();
          gy(r, cc) += w * s.phi[r] * s.grad[cc].y();
        }
      }
      for (int r = 0; r < 3; ++r) {
        for (int cc = 0; cc < 6; ++cc) {
          bx(r, cc) += w * L[r] * s.grad[cc].x();
          by(r, cc) += w * L[r] * s.grad[cc].y();
          c(r, cc) += w * L[r] * s.phi[cc];
        }
        for (int cc = 0; cc < 3; ++cc) mp(r, cc) += w * L[r] * L[cc];
      }
    }
    for (int r = 0; r < 6; ++r)
      for (int cc = 0; cc < 6; ++cc) {
        tM.emplace_back(el[r], el[cc], m(r, cc));
        tK.emplace_back(el[r], el[cc], kxx(r, cc) + kyy(r, cc));
        tKxx.emplace_back(el[r], el[cc], kxx(r, cc));
        tKxy.emplace_back(el[r], el[cc], kxy(r, cc));
        tKyx.emplace_back(el[r], el[cc], kyx(r, cc));
        tKyy.emplace_back(el[r], el[cc], kyy(r, cc));
        tGx.emplace_back(el[r], el[cc], gx(r, cc));
        tGy.emplace_back(el[r], el[cc], gy(r, cc));
      }
    for (int r = 0; r < 3; ++r) {
      for (int cc = 0; cc < 6; ++cc) {
        tBx.emplace_back(el[r], el[cc], bx(r, cc));
        tBy.emplace_back(el[r], el[cc], by(r, cc));
        tC.emplace_back(el[r], el[cc], c(r, cc));
      }
      for (int cc = 0; cc < 3; ++cc) tMp.emplace_back(el[r], el[cc], mp(r, cc));
    }
  }
  auto build = [](SpMatR& A, int rows, int cols, const std::vector<TripletR>& t) {
    A.resize(rows, cols);
    A.setFromTriplets(t.begin(), t.end());
    A.makeCompressed();
  };
  build(op.M, n, n, tM);
  build(op.K, n, n, tK);
  build(op.Kxx, n, n, tKxx);
  build(op.Kxy, n, n, tKxy);
  build(op.Kyx, n, n, tKyx);
  build(op.Kyy, n, n, tKyy);
  build(op.Gx, n, n, tGx);
  build(op.Gy, n, n, tGy);
  build(op.Mp, nv, nv, tMp);
  build(op.Bx, nv, n, tBx);
  build(op.By, nv, n, tBy);
  build(op.C, nv, n, tC);

  // 1D quadratic mass on each (straight) boundary edge.
  const int nt = int(V.trace().size());
  std::vector<TripletR> tb;
  const double loc[3][3] = {{4, 2, -1}, {2, 16, 2}, {-1, 2, 4}};
  for (const auto& te : V.trace_edges()) {
    const double len = (V.nodes()[te[2]] - V.nodes()[te[0]]).norm();
    for (int r = 0; r < 3; ++r)
      for (int cc = 0; cc < 3; ++cc)
        tb.emplace_back(V.trace_index(te[r]), V.trace_index(te[cc]), len / 30.0 * loc[r][cc]);
  }
  build(op.Mb, nt, nt, tb);
  return op;
}

// ---------------------------------------------------------------------------
// Field helpers

template <class Scalar>
using FieldVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// ∫ f dy for a P2 field.
template <class Derived>
auto integrate(const FemOperators& op, const Eigen::MatrixBase<Derived>& f) {
  return op.load.dot(f.template cast<typename Derived::Scalar>());
}

// L² norm of (f_h − g) with a high-order rule; g(x) returns the comparison value.
template <class Scalar, class G>
double l2_error(const P2Space& V, const FieldVec<Scalar>& f, G&& g, int order = 6) {
  const TriangleRule rule = rule_collapsed(order);
  double acc = 0.0;
  for (std::size_t e = 0; e < V.elements().size(); ++e) {
    const auto& el = V.elements()[e];
    const ElementMap em = element_map(V, e);
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const P2Local s = p2_local(em, rule.bary[q]);
      Scalar v(0);
      for (int r = 0; r < 6; ++r) v += s.phi[r] * f[el[r]];
      const Vec2 x = em.point(rule.bary[q]);
      acc += rule.w[q] * em.area * std::norm(v - Scalar(g(x)));
    }
  }
  return std::sqrt(acc);
}

// P2 nodal interpolation of a function of position.
template <class Scalar, class G>
FieldVec<Scalar> interpolate(const P2Space& V, G&& g) {
  FieldVec<Scalar> f(V.size());
  for (int i = 0; i < V.size(); ++i) f[i] = Scalar(g(V.nodes()[i]));
  return f;
}

// Extract a submatrix by row/column index lists.
inline SpMatR select(const SpMatR& A, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> rmap(A.rows(), -1), cmap(A.cols(), -1);
  for (int i = 0; i < int(rows.size()); ++i) rmap[rows[i]] = i;
  for (int j = 0; j < int(cols.size()); ++j) cmap[cols[j]] = j;
  std::vector<TripletR> t;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMatR::InnerIterator it(A, k); it; ++it)
      if (rmap[it.row()] >= 0 && cmap[it.col()] >= 0) t.emplace_back(rmap[it.row()], cmap[it.col()], it.value());
  SpMatR B(rows.size(), cols.size());
  B.setFromTriplets(t.begin(), t.end());
  B.makeCompressed();
  return B;
}

inline std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace vesselmode
