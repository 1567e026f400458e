#pragma once

#include <vesselmode/core.hpp>

namespace vesselmode {

namespace detail {

inline cplx bessel_series(int n, cplx z) {
  // Σ (−1)^k (z/2)^{2k+n} / (k!(k+n)!)
  const cplx h = 0.5 * z, h2 = -h * h;
  cplx term = 1.0;
  for (int j = 1; j <= n; ++j) term *= h / double(j);
  cplx sum = term;
  for (int k = 1; k < 300; ++k) {
    term *= h2 / (double(k) * double(k + n));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

// Hankel asymptotic expansion, valid for Re z ≥ 0 and large |z|.
inline cplx bessel_asymptotic(int n, cplx z) {
  const double mu = 4.0 * n * n;
  cplx P = 1.0, Q = 0.0, term = 1.0;
  double last = 1e300;
  for (int k = 1; k < 60; ++k) {
    term *= (mu - double((2 * k - 1) * (2 * k - 1))) / (double(k) * 8.0 * z);
    const double mag = std::abs(term);
    if (mag > last) break;
    last = mag;
    // odd k feed Q with alternating signs, even k feed P
    if (k % 2 == 1)
      Q += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    else
      P += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    if (mag < 1e-17) break;
  }
  const cplx chi = z - (0.5 * n + 0.25) * pi;
  return std::sqrt(2.0 / (pi * z)) * (P * std::cos(chi) - Q * std::sin(chi));
}

inline cplx bessel_j(int n, cplx z) {
  // J_n(−z) = (−1)^n J_n(z): fold into the right half-plane
  double sign = 1.0;
  if (z.real() < 0) {
    z = -z;
    if (n % 2) sign = -1.0;
  }
  // series cancellation grows like e^{|Re z|}; the expansion needs |z| large
  const double m = std::abs(z);
  if (m <= 12.0 || (m <= 17.0 && std::abs(z.imag()) >= 0.3 * m)) return sign * bessel_series(n, z);
  return sign * bessel_asymptotic(n, z);
}

}  // namespace detail

inline cplx bessel_j0(cplx z) { return detail::bessel_j(0, z); }
inline cplx bessel_j1(cplx z) { return detail::bessel_j(1, z); }

// Closed-form radial profiles on the disk of radius R.
class DiskOracle {
 public:
  DiskOracle(double R, double nu, double omega) : R_(R), nu_(nu), omega_(omega) {
    if (!(R > 0 && nu > 0)) throw Error(ErrorKind::domain, "disk oracle needs R > 0 and ν > 0");
    if (omega != 0.0) {
      alpha_ = std::sqrt(cplx(0.0, -omega / nu));
      j0R_ = bessel_j0(alpha_ * R);
    }
  }

  double radius() const { return R_; }
  cplx alpha() const { return alpha_; }

  double poiseuille(double r) const { return (r * r - R_ * R_) / (4.0 * nu_); }
  double poiseuille_flux() const { return radial_flux([&](double r) { return cplx(poiseuille(r)); }).real(); }

  // v̂(r) = (i/ω)(1 − J₀(αr)/J₀(αR)), α² = −iω/ν; ω = 0 falls back to Poiseuille.
  cplx womersley(double r) const {
    if (omega_ == 0.0) return poiseuille(r);
    return (I / omega_) * (1.0 - bessel_j0(alpha_ * r) / j0R_);
  }

  cplx womersley_flux() const {
    return radial_flux([&](double r) { return womersley(r); });
  }

  // Residual of iωv − νΔv + 1 at radius r > 0, with Δ written through J₁.
  cplx womersley_residual(double r) const {
    const cplx z = alpha_ * r;
    const cplx j0 = bessel_j0(z), j1 = bessel_j1(z);
    const cplx c = -(I / omega_) / j0R_;
    const cplx d1 = c * (-alpha_ * j1);                   // d/dr
    const cplx d2 = c * (-alpha_ * alpha_ * (j0 - j1 / z));  // d²/dr²
    const cplx lap = d2 + d1 / r;
    return I * omega_ * womersley(r) - nu_ * lap + 1.0;
  }

 private:
  template <class F>
  cplx radial_flux(F&& f) const {
    static const GaussRule g = gauss_legendre(16);
    const int panels = 64;
    cplx acc = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double a = R_ * p / panels, b = R_ * (p + 1) / panels;
      for (std::size_t q = 0; q < g.x.size(); ++q) {
        const double r = 0.5 * (a + b) + 0.5 * (b - a) * g.x[q];
        acc += 0.5 * (b - a) * g.w[q] * f(r) * r;
      }
    }
    return 2.0 * pi * acc;
  }

  double R_, nu_, omega_;
  cplx alpha_{0.0}, j0R_{1.0};
};

}  // namespace vesselmode
