#pragma once

#include <vesselmode/geometry.hpp>

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vesselmode {

struct BoundaryEdge {
  int a = 0, b = 0;  // vertex indices, counterclockwise along γ
  double s_lo = 0.0, s_hi = 0.0;
};

struct CrossSectionMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> bedges;  // sorted by s_lo
  double h = 0.0;                    // longest edge

  double curve_length() const { return bedges.empty() ? 0.0 : bedges.back().s_hi; }

  double triangle_area(std::size_t t) const {
    const auto& tr = triangles[t];
    return 0.5 * segment_cross(nodes[tr[1]] - nodes[tr[0]], nodes[tr[2]] - nodes[tr[0]]);
  }

  double area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
    return a;
  }

  double min_angle_deg() const {
    double m = 180.0;
    for (const auto& tr : triangles)
      for (int k = 0; k < 3; ++k) {
        const Vec2 u = nodes[tr[(k + 1) % 3]] - nodes[tr[k]];
        const Vec2 v = nodes[tr[(k + 2) % 3]] - nodes[tr[k]];
        const double c = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
        m = std::min(m, std::acos(c) * 180.0 / pi);
      }
    return m;
  }

  double max_edge() const {
    double m = 0.0;
    for (const auto& tr : triangles)
      for (int k = 0; k < 3; ++k) m = std::max(m, (nodes[tr[(k + 1) % 3]] - nodes[tr[k]]).norm());
    return m;
  }

  // Throws a mesh error describing the first violated invariant.
  void validate(double min_angle = 15.0) const {
    if (triangles.empty() || bedges.empty()) throw Error(ErrorKind::mesh, "empty mesh");
    const int n = int(nodes.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int v : triangles[t])
        if (v < 0 || v >= n) throw Error(ErrorKind::mesh, "triangle index out of range");
      if (!(triangle_area(t) > 0))
        throw Error(ErrorKind::mesh, "triangle " + std::to_string(t) + " is not positively oriented");
    }
    const double ma = min_angle_deg();
    if (ma <= min_angle)
      throw Error(ErrorKind::mesh, "minimum angle " + std::to_string(ma) + " deg below threshold");
    if (std::abs(bedges.front().s_lo) > 1e-12)
      throw Error(ErrorKind::mesh, "boundary intervals must start at s=0");
    for (std::size_t e = 0; e < bedges.size(); ++e) {
      const auto& be = bedges[e];
      if (!(be.s_hi > be.s_lo)) throw Error(ErrorKind::mesh, "empty boundary interval");
      if (e + 1 < bedges.size()) {
        if (std::abs(bedges[e + 1].s_lo - be.s_hi) > 1e-12)
          throw Error(ErrorKind::mesh, "boundary intervals do not tile [0,|γ|)");
        if (bedges[e + 1].a != be.b) throw Error(ErrorKind::mesh, "boundary edges are not chained");
      }
    }
    if (bedges.back().b != bedges.front().a) throw Error(ErrorKind::mesh, "boundary chain is not closed");
  }
};

namespace detail {

inline void build_ring_triangles(CrossSectionMesh& m, int ring_in_start, int n_in, int ring_out_start,
                                 int n_out) {
  // Merge the two rings by their angular parameter (node j sits at 2πj/n).
  int a = 0, b = 0;
  while (a < n_in || b < n_out) {
    const double t_in = double(a + 1) / n_in, t_out = double(b + 1) / n_out;
    const int ia = ring_in_start + (a % n_in), ob = ring_out_start + (b % n_out);
    if (b >= n_out || (a < n_in && t_in < t_out - 1e-14)) {
      m.triangles.push_back({ia, ob, ring_in_start + ((a + 1) % n_in)});
      ++a;
    } else {
      m.triangles.push_back({ia, ob, ring_out_start + ((b + 1) % n_out)});
      ++b;
    }
  }
}

inline void laplacian_smooth(CrossSectionMesh& m, int n_interior, int sweeps) {
  std::vector<std::vector<int>> nbr(m.nodes.size());
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) {
      nbr[t[k]].push_back(t[(k + 1) % 3]);
      nbr[t[k]].push_back(t[(k + 2) % 3]);
    }
  for (int it = 0; it < sweeps; ++it)
    for (int i = 0; i < n_interior; ++i) {
      Vec2 c = Vec2::Zero();
      for (int j : nbr[i]) c += m.nodes[j];
      m.nodes[i] = c / double(nbr[i].size());
    }
}

}  // namespace detail

// Mapped ring mesh of the star-shaped domain bounded by `curve`: ring i of m
// carries 6i nodes at (i/m)·ζ(t|γ|/2π), so boundary vertices sit exactly on γ
// at uniform arclength.
inline CrossSectionMesh mesh_domain(const BoundaryCurve& curve, double h_target) {
  const double L = curve.length();
  if (!(h_target > 0) || h_target >= L / 8.0)
    throw Error(ErrorKind::refinement, "h_target must satisfy 0 < h < |γ|/8 (|γ|=" + std::to_string(L) + ")");
  if (h_target * curve.max_abs_curvature() > 0.5)
    throw Error(ErrorKind::refinement, "h_target too coarse for the curvature (h·max|κ| > 0.5)");

  double r_max = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    r_max = std::max(r_max, curve.positions()[i].norm());
    if (segment_cross(curve.positions()[i], curve.tangents()[i]) <= 0.0)
      throw Error(ErrorKind::geometry, "domain is not star-shaped with respect to the origin");
  }
  const int m = std::max(2, int(std::ceil(r_max / h_target - 1e-9)));
  const int nb = 6 * m;

  std::vector<Vec2> rim(nb);
  for (int j = 0; j < nb; ++j) rim[j] = curve.at(L * double(j) / nb).position;

  CrossSectionMesh mesh;
  mesh.nodes.push_back(Vec2::Zero());
  std::vector<int> ring_start(m + 1, 0);
  for (int i = 1; i <= m; ++i) {
    ring_start[i] = int(mesh.nodes.size());
    const int ni = 6 * i;
    for (int j = 0; j < ni; ++j) {
      const double t = double(j) / ni;
      Vec2 z;
      if (i == m) {
        z = rim[j];
      } else {
        z = curve.at(L * t).position;
      }
      mesh.nodes.push_back((double(i) / m) * z);
    }
  }
  for (int j = 0; j < 6; ++j) mesh.triangles.push_back({0, 1 + j, 1 + (j + 1) % 6});
  for (int i = 1; i < m; ++i) detail::build_ring_triangles(mesh, ring_start[i], 6 * i, ring_start[i + 1], 6 * (i + 1));

  for (int j = 0; j < nb; ++j) {
    BoundaryEdge e;
    e.a = ring_start[m] + j;
    e.b = ring_start[m] + (j + 1) % nb;
    e.s_lo = L * double(j) / nb;
    e.s_hi = (j + 1 == nb) ? L : L * double(j + 1) / nb;
    mesh.bedges.push_back(e);
  }

  if (mesh.min_angle_deg() <= 15.0) detail::laplacian_smooth(mesh, ring_start[m], 10);
  mesh.h = mesh.max_edge();
  try {
    mesh.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::refinement, std::string("mesh quality: ") + e.what());
  }
  return mesh;
}

inline void write_mesh(std::ostream& os, const CrossSectionMesh& m) {
  os << "nodes " << m.nodes.size() << " triangles " << m.triangles.size() << " bedges " << m.bedges.size()
     << "\n";
  os << std::setprecision(17);
  for (const auto& p : m.nodes) os << p.x() << " " << p.y() << "\n";
  for (const auto& t : m.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (const auto& e : m.bedges) os << e.a << " " << e.b << " " << e.s_lo << " " << e.s_hi << "\n";
}

inline CrossSectionMesh read_mesh(std::istream& is) {
  std::string w1, w2, w3;
  std::size_t n = 0, t = 0, b = 0;
  if (!(is >> w1 >> n >> w2 >> t >> w3 >> b) || w1 != "nodes" || w2 != "triangles" || w3 != "bedges")
    throw Error(ErrorKind::mesh, "bad mesh header, expected 'nodes N triangles T bedges B'");
  CrossSectionMesh m;
  m.nodes.resize(n);
  m.triangles.resize(t);
  m.bedges.resize(b);
  for (auto& p : m.nodes)
    if (!(is >> p.x() >> p.y())) throw Error(ErrorKind::mesh, "truncated node list");
  for (auto& tr : m.triangles)
    if (!(is >> tr[0] >> tr[1] >> tr[2])) throw Error(ErrorKind::mesh, "truncated triangle list");
  for (auto& e : m.bedges)
    if (!(is >> e.a >> e.b >> e.s_lo >> e.s_hi)) throw Error(ErrorKind::mesh, "truncated boundary edge list");
  std::sort(m.bedges.begin(), m.bedges.end(), [](const auto& x, const auto& y) { return x.s_lo < y.s_lo; });
  m.h = m.max_edge();
  m.validate();
  return m;
}

inline void save_mesh(const std::string& path, const CrossSectionMesh& m) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path);
  write_mesh(f, m);
}

inline CrossSectionMesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot read " + path);
  return read_mesh(f);
}

}  // namespace vesselmode
