#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vesselmode {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;
using SpMatR = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<cplx>;
using TripletR = Eigen::Triplet<double>;
using TripletC = Eigen::Triplet<cplx>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

enum class ErrorKind {
  geometry,
  regularity,
  refinement,
  mesh,
  material,
  compatibility,
  incompatibility,
  interface,
  domain,
  insufficient_data,
  unsupported_parameter,
  near_eigenvalue,
  config,
  io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::geometry: return "geometry error";
    case ErrorKind::regularity: return "regularity error";
    case ErrorKind::refinement: return "refinement error";
    case ErrorKind::mesh: return "mesh error";
    case ErrorKind::material: return "material error";
    case ErrorKind::compatibility: return "compatibility error";
    case ErrorKind::incompatibility: return "incompatibility error";
    case ErrorKind::interface: return "interface error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::insufficient_data: return "insufficient-data error";
    case ErrorKind::unsupported_parameter: return "unsupported-parameter error";
    case ErrorKind::near_eigenvalue: return "near-eigenvalue error";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "io error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class NearEigenvalueError : public Error {
 public:
  NearEigenvalueError(cplx lambda, const std::string& what)
      : Error(ErrorKind::near_eigenvalue, what), lambda_(lambda) {}
  cplx lambda() const noexcept { return lambda_; }

 private:
  cplx lambda_;
};

// Gauss-Legendre nodes/weights on [-1,1] via Newton on P_n.
struct GaussRule {
  std::vector<double> x, w;
};

inline GaussRule gauss_legendre(int n) {
  GaussRule g;
  g.x.resize(n);
  g.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    g.x[i] = -z;
    g.x[n - 1 - i] = z;
    g.w[i] = g.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return g;
}

// Runs body(i) for i in [0,n) on up to `threads` workers. Each index is
// executed exactly once; callers write results into slot i so the outcome
// does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace vesselmode
