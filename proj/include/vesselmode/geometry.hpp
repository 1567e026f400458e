#pragma once

#include <vesselmode/core.hpp>

#include <unsupported/Eigen/FFT>

#include <optional>
#include <span>
#include <variant>

namespace vesselmode {

// ---------------------------------------------------------------------------
// Curve descriptors. All are parametrized counterclockwise by θ ∈ [0, 2π).

struct Circle {
  double radius = 1.0;
};

struct Ellipse {
  double a = 1.0;
  double b = 1.0;
};

// r(θ) = r0 + Σ_k cos_coeffs[k-1] cos kθ + sin_coeffs[k-1] sin kθ
struct StarCurve {
  double r0 = 1.0;
  std::vector<double> cos_coeffs;
  std::vector<double> sin_coeffs;
};

using CurveDescriptor = std::variant<Circle, Ellipse, StarCurve>;

struct CurveJet {
  Vec2 z, d1, d2;  // position and θ-derivatives
};

inline CurveJet evaluate_descriptor(const CurveDescriptor& desc, double t) {
  const double c = std::cos(t), s = std::sin(t);
  return std::visit(
      [&](const auto& d) -> CurveJet {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Circle>) {
          const double R = d.radius;
          return {{R * c, R * s}, {-R * s, R * c}, {-R * c, -R * s}};
        } else if constexpr (std::is_same_v<T, Ellipse>) {
          return {{d.a * c, d.b * s}, {-d.a * s, d.b * c}, {-d.a * c, -d.b * s}};
        } else {
          double r = d.r0, r1 = 0.0, r2 = 0.0;
          for (std::size_t k = 0; k < d.cos_coeffs.size(); ++k) {
            const double m = double(k + 1), ck = std::cos(m * t), sk = std::sin(m * t);
            r += d.cos_coeffs[k] * ck;
            r1 -= m * d.cos_coeffs[k] * sk;
            r2 -= m * m * d.cos_coeffs[k] * ck;
          }
          for (std::size_t k = 0; k < d.sin_coeffs.size(); ++k) {
            const double m = double(k + 1), ck = std::cos(m * t), sk = std::sin(m * t);
            r += d.sin_coeffs[k] * sk;
            r1 += m * d.sin_coeffs[k] * ck;
            r2 -= m * m * d.sin_coeffs[k] * sk;
          }
          const Vec2 e{c, s}, et{-s, c};
          return {r * e, r1 * e + r * et, r2 * e + 2.0 * r1 * et - r * e};
        }
      },
      desc);
}

inline std::string describe(const CurveDescriptor& desc) {
  return std::visit(
      [](const auto& d) -> std::string {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return "circle R=" + std::to_string(d.radius);
        } else if constexpr (std::is_same_v<T, Ellipse>) {
          return "ellipse a=" + std::to_string(d.a) + " b=" + std::to_string(d.b);
        } else {
          return "star r0=" + std::to_string(d.r0) + " modes=" +
                 std::to_string(std::max(d.cos_coeffs.size(), d.sin_coeffs.size()));
        }
      },
      desc);
}

// ---------------------------------------------------------------------------

struct CurvePoint {
  double s = 0.0;
  Vec2 position, tangent, normal;
  double curvature = 0.0;  // κ = ζ₁''ζ₂' − ζ₂''ζ₁'  (−1/R on a counterclockwise circle)
};

struct BoundaryOptions {
  // Keep only Fourier modes |m| ≤ kappa_filter_modes of κ(s); 0 disables.
  int kappa_filter_modes = 0;
};

struct BoundaryQuadrature {
  std::vector<double> s;
  std::vector<double> w;
  int order = 0;  // exact for trigonometric polynomials of degree ≤ order
};

inline double segment_cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = segment_cross(q2 - q1, p1 - q1), d2 = segment_cross(q2 - q1, p2 - q1);
  const double d3 = segment_cross(p2 - p1, q1 - p1), d4 = segment_cross(p2 - p1, q2 - p1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

class BoundaryCurve {
 public:
  BoundaryCurve(CurveDescriptor desc, std::size_t n_nodes, BoundaryOptions opt = {})
      : desc_(std::move(desc)), opt_(opt) {
    if (n_nodes < 16) throw Error(ErrorKind::geometry, "n_nodes must be at least 16");
    validate_descriptor();
    build_length_table();
    check_regularity();

    const std::size_t n = n_nodes;
    s_.resize(n);
    theta_.resize(n);
    pos_.resize(n);
    tan_.resize(n);
    nor_.resize(n);
    kappa_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double si = length_ * double(i) / double(n);
      const CurvePoint p = exact_point(si, &theta_[i]);
      s_[i] = si;
      pos_[i] = p.position;
      tan_[i] = p.tangent;
      nor_[i] = p.normal;
      kappa_[i] = p.curvature;
    }
    check_simple();
    if (opt_.kappa_filter_modes > 0) build_kappa_filter();
  }

  const CurveDescriptor& descriptor() const { return desc_; }
  const BoundaryOptions& options() const { return opt_; }
  std::size_t size() const { return s_.size(); }
  double length() const { return length_; }
  const std::vector<double>& s() const { return s_; }
  const std::vector<Vec2>& positions() const { return pos_; }
  const std::vector<Vec2>& tangents() const { return tan_; }
  const std::vector<Vec2>& normals() const { return nor_; }
  const std::vector<double>& curvature() const { return kappa_; }

  // Descriptor parameter θ with arclength L(θ) = s (periodic in s).
  double parameter_of(double s) const {
    s = wrap(s);
    double t = 2.0 * pi * s / length_;
    for (int it = 0; it < 60; ++it) {
      const double f = length_at(t) - s;
      if (std::abs(f) < 1e-14 * length_) break;
      t -= f / evaluate_descriptor(desc_, t).d1.norm();
      t = std::clamp(t, 0.0, 2.0 * pi);
    }
    return t;
  }

  CurvePoint at(double s) const {
    CurvePoint p = exact_point(s, nullptr);
    if (!kappa_modes_.empty()) p.curvature = filtered_kappa(p.s);
    return p;
  }

  double area() const {
    // ½∮(x y' − y x') dθ with panel Gauss-Legendre quadrature
    double a = 0.0;
    const double dt = 2.0 * pi / double(panels_);
    for (int p = 0; p < panels_; ++p)
      for (std::size_t q = 0; q < gl_.x.size(); ++q) {
        const double t = dt * (p + 0.5 * (gl_.x[q] + 1.0));
        const CurveJet j = evaluate_descriptor(desc_, t);
        a += 0.25 * dt * gl_.w[q] * segment_cross(j.z, j.d1);
      }
    return a;
  }

  Vec2 centroid() const {
    Vec2 c = Vec2::Zero();
    const double dt = 2.0 * pi / double(panels_);
    for (int p = 0; p < panels_; ++p)
      for (std::size_t q = 0; q < gl_.x.size(); ++q) {
        const double t = dt * (p + 0.5 * (gl_.x[q] + 1.0));
        const CurveJet j = evaluate_descriptor(desc_, t);
        const double w = 0.5 * dt * gl_.w[q] * segment_cross(j.z, j.d1) / 3.0;
        c += w * j.z;
      }
    return c / area();
  }

  double max_abs_curvature() const {
    double m = 0.0;
    for (double k : kappa_) m = std::max(m, std::abs(k));
    return m;
  }

  BoundaryQuadrature quadrature() const {
    BoundaryQuadrature q;
    q.s = s_;
    q.w.assign(s_.size(), length_ / double(s_.size()));
    q.order = int(s_.size()) - 1;
    return q;
  }

 private:
  double wrap(double s) const {
    s = std::fmod(s, length_);
    if (s < 0) s += length_;
    return s;
  }

  void validate_descriptor() const {
    std::visit(
        [](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Circle>) {
            if (!(d.radius > 0)) throw Error(ErrorKind::geometry, "circle radius must be positive");
          } else if constexpr (std::is_same_v<T, Ellipse>) {
            if (!(d.a > 0 && d.b > 0)) throw Error(ErrorKind::geometry, "ellipse semi-axes must be positive");
          } else {
            if (!(d.r0 > 0)) throw Error(ErrorKind::geometry, "star curve needs r0 > 0");
          }
        },
        desc_);
  }

  double length_at(double t) const {
    const double dt = 2.0 * pi / double(panels_);
    int k = std::clamp(int(t / dt), 0, panels_ - 1);
    const double a = k * dt;
    double acc = cumulative_[k];
    const double half = 0.5 * (t - a);
    for (std::size_t q = 0; q < gl_.x.size(); ++q)
      acc += half * gl_.w[q] * evaluate_descriptor(desc_, a + half * (gl_.x[q] + 1.0)).d1.norm();
    return acc;
  }

  void build_length_table() {
    gl_ = gauss_legendre(20);
    panels_ = 128;
    cumulative_.assign(panels_ + 1, 0.0);
    const double dt = 2.0 * pi / double(panels_);
    for (int p = 0; p < panels_; ++p) {
      double acc = 0.0;
      for (std::size_t q = 0; q < gl_.x.size(); ++q)
        acc += 0.5 * dt * gl_.w[q] *
               evaluate_descriptor(desc_, dt * (p + 0.5 * (gl_.x[q] + 1.0))).d1.norm();
      cumulative_[p + 1] = cumulative_[p] + acc;
    }
    length_ = cumulative_[panels_];
  }

  void check_regularity() const {
    const int m = 4096;
    double lo = 1e300, mean = 0.0;
    for (int i = 0; i < m; ++i) {
      const double speed = evaluate_descriptor(desc_, 2.0 * pi * i / m).d1.norm();
      lo = std::min(lo, speed);
      mean += speed / m;
    }
    if (lo < 1e-6 * mean)
      throw Error(ErrorKind::regularity, "tangent degenerates (cusp) in curve descriptor " + describe(desc_));
    if (const auto* st = std::get_if<StarCurve>(&desc_)) {
      for (int i = 0; i < m; ++i) {
        const CurveJet j = evaluate_descriptor(desc_, 2.0 * pi * i / m);
        if (j.z.dot(Vec2(std::cos(2.0 * pi * i / m), std::sin(2.0 * pi * i / m))) <= 0.0)
          throw Error(ErrorKind::geometry, "star curve radius r(θ) is not positive (self-intersecting)");
      }
      (void)st;
    }
  }

  void check_simple() const {
    const std::size_t n = pos_.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        if (segments_intersect(pos_[i], pos_[(i + 1) % n], pos_[j], pos_[(j + 1) % n]))
          throw Error(ErrorKind::geometry, "self-intersecting curve (segments " + std::to_string(i) +
                                               " and " + std::to_string(j) + ")");
      }
  }

  CurvePoint exact_point(double s, double* theta_out) const {
    CurvePoint p;
    p.s = wrap(s);
    const double t = parameter_of(p.s);
    if (theta_out) *theta_out = t;
    const CurveJet j = evaluate_descriptor(desc_, t);
    const double speed = j.d1.norm();
    p.position = j.z;
    p.tangent = j.d1 / speed;
    p.normal = Vec2(p.tangent.y(), -p.tangent.x());
    p.curvature = -segment_cross(j.d1, j.d2) / (speed * speed * speed);
    return p;
  }

  void build_kappa_filter() {
    const std::size_t n = kappa_.size();
    Eigen::FFT<double> fft;
    std::vector<double> in(kappa_.begin(), kappa_.end());
    std::vector<cplx> spec;
    fft.fwd(spec, in);
    const int keep = std::min<int>(opt_.kappa_filter_modes, int(n / 2) - 1);
    kappa_modes_.assign(keep + 1, cplx(0.0));
    for (int m = 0; m <= keep; ++m) kappa_modes_[m] = spec[m] / double(n);
    for (std::size_t i = 0; i < n; ++i) kappa_[i] = filtered_kappa(s_[i]);
  }

  double filtered_kappa(double s) const {
    double v = kappa_modes_[0].real();
    for (std::size_t m = 1; m < kappa_modes_.size(); ++m)
      v += 2.0 * (kappa_modes_[m] * std::exp(I * (2.0 * pi * double(m) * s / length_))).real();
    return v;
  }

  CurveDescriptor desc_;
  BoundaryOptions opt_;
  GaussRule gl_;
  int panels_ = 0;
  std::vector<double> cumulative_;
  double length_ = 0.0;
  std::vector<double> s_, theta_;
  std::vector<Vec2> pos_, tan_, nor_;
  std::vector<double> kappa_;
  std::vector<cplx> kappa_modes_;
};

inline BoundaryCurve build_boundary(const CurveDescriptor& desc, std::size_t n_nodes,
                                    BoundaryOptions opt = {}) {
  return BoundaryCurve(desc, n_nodes, opt);
}

// Turning-number check: ∮κ ds with the trapezoidal rule at the sample nodes.
inline double total_curvature(const BoundaryCurve& c) {
  double acc = 0.0;
  for (double k : c.curvature()) acc += k;
  return acc * c.length() / double(c.size());
}

struct RankCheck {
  double min_singular_value = 0.0;
  bool violation = false;
};

// Smallest singular value of the column-normalized sample matrix
// [ζ₁', ζ₂', ζ₂ζ₁' − ζ₁ζ₂']; zero means a rigid motion has vanishing normal trace.
inline RankCheck rigid_motion_rank_check(std::span<const Vec2> positions, std::span<const Vec2> tangents) {
  const std::size_t n = positions.size();
  if (n < 3 || tangents.size() != n)
    throw Error(ErrorKind::insufficient_data, "rank check needs at least 3 matching samples");
  MatR A(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& z = positions[i];
    const Vec2& t = tangents[i];
    A(i, 0) = t.x();
    A(i, 1) = t.y();
    A(i, 2) = z.y() * t.x() - z.x() * t.y();
  }
  for (int c = 0; c < 3; ++c) {
    const double nrm = A.col(c).norm();
    if (nrm > 0) A.col(c) /= nrm;
  }
  Eigen::JacobiSVD<MatR> svd(A);
  RankCheck r;
  r.min_singular_value = svd.singularValues()(2);
  r.violation = r.min_singular_value < 1e-8;
  return r;
}

inline RankCheck rigid_motion_rank_check(const BoundaryCurve& c) {
  return rigid_motion_rank_check(std::span<const Vec2>(c.positions()), std::span<const Vec2>(c.tangents()));
}

}  // namespace vesselmode
