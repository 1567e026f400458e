#pragma once

#include <vesselmode/elastic_coupling.hpp>

#include <json.hpp>

namespace vesselmode {

struct StripScanConfig {
  double beta_max = 0.5;
  double xi_max = 5.0;
  int n_beta = 11;
  int n_xi = 41;
  double refine_tol = 1e-12;  // Newton stops once σ_rel drops below this
  double threshold = 1e-3;    // σ_rel below this marks an eigenvalue candidate
  double exclusion_radius = 0.0;
  double separation_hint = 0.0;  // expected eigenvalue separation, 0 = unknown
  unsigned threads = 1;

  // A scan restricted to the imaginary axis (β = 0 only).
  static StripScanConfig axis(double xi_max, int n_xi, double threshold) {
    StripScanConfig c;
    c.beta_max = 0.0;
    c.n_beta = 1;
    c.xi_max = xi_max;
    c.n_xi = n_xi;
    c.threshold = threshold;
    return c;
  }

  double beta_at(int j) const { return n_beta == 1 ? 0.0 : -beta_max + 2.0 * beta_max * j / (n_beta - 1); }
  double xi_at(int k) const { return n_xi == 1 ? 0.0 : -xi_max + 2.0 * xi_max * k / (n_xi - 1); }

  void validate() const {
    if (!(xi_max > 0) || n_xi < 2) throw Error(ErrorKind::domain, "scan needs ξ_max > 0 and at least 2 ξ samples");
    if (n_beta == 1 ? beta_max != 0.0 : !(beta_max > 0) || n_beta < 2)
      throw Error(ErrorKind::domain, "scan needs β_max > 0 with at least 2 β samples, or an axis scan");
    if (!(threshold >= 0)) throw Error(ErrorKind::domain, "σ threshold must be non-negative");
    if (separation_hint > 0) {
      const double h = std::max(n_beta > 1 ? 2.0 * beta_max / (n_beta - 1) : 0.0, 2.0 * xi_max / (n_xi - 1));
      if (!(h < 0.5 * separation_hint))
        throw Error(ErrorKind::domain, "grid spacing must be below half the expected eigenvalue separation");
    }
  }
};

struct SigmaEstimate {
  cplx lambda{0.0};
  double sigma_min = 0.0, sigma_max = 0.0, sigma_rel = 0.0;
  VecC right, left;  // unit singular vectors of the scaled matrix
  int iterations = 0;
  bool flagged = false;  // factorization failed at this λ
};

// Per-worker state: the factorization pattern is analyzed once and reused
// for every λ, and the power-iteration vector carries over between calls.
class SigmaWorker {
 public:
  explicit SigmaWorker(const PencilContext& c) : c_(c) {}

  SigmaEstimate at(cplx lambda, const VecC* warm = nullptr, double tol = 1e-8, int max_it = 200) {
    SigmaEstimate e;
    e.lambda = lambda;
    A_ = c_.evaluate_scaled(lambda);
    try {
      lu_.factorize(A_);
    } catch (const Error&) {
      e.flagged = true;
      return e;
    }
    const Eigen::Index n = A_.rows();
    VecC x = (warm && warm->size() == n) ? *warm : start_vector(n);
    x.normalize();
    double s = 0.0;
    for (int it = 0; it < max_it; ++it) {
      const VecC z = lu_.raw_solve(lu_.solve_adjoint(x));
      const double nz = z.norm();
      const double snew = 1.0 / std::sqrt(nz);
      x = z / nz;
      e.iterations = it + 1;
      if (!std::isfinite(snew)) {
        s = 0.0;
        break;
      }
      const bool done = it >= 2 && std::abs(snew - s) <= tol * snew;
      s = snew;
      if (done) break;
    }
    e.sigma_min = s;
    e.right = x;
    const VecC ax = A_ * x;
    e.left = ax.norm() > 0 ? VecC(ax / ax.norm()) : ax;
    if (e.right.size() == 0 || !std::isfinite(s)) e.flagged = true;
    e.sigma_max = sigma_max(A_);
    e.sigma_rel = e.sigma_max > 0 ? e.sigma_min / e.sigma_max : 0.0;
    return e;
  }

  // The k smallest singular values of the scaled A(λ) by subspace iteration.
  std::vector<double> smallest(cplx lambda, int k, int iterations = 40) {
    A_ = c_.evaluate_scaled(lambda);
    lu_.factorize(A_);
    const Eigen::Index n = A_.rows();
    MatC X(n, k);
    std::mt19937_64 rng(0x5EED);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) X(i, j) = cplx(nd(rng), nd(rng));
    for (int it = 0; it < iterations; ++it) {
      for (int j = 0; j < k; ++j) X.col(j) = lu_.raw_solve(lu_.solve_adjoint(X.col(j)));
      Eigen::HouseholderQR<MatC> qr(X);
      X = qr.householderQ() * MatC::Identity(n, k);
    }
    MatC AX(n, k);
    for (int j = 0; j < k; ++j) AX.col(j) = A_ * X.col(j);
    Eigen::SelfAdjointEigenSolver<MatC> es(AX.adjoint() * AX);
    std::vector<double> out;
    for (int j = 0; j < k; ++j) out.push_back(std::sqrt(std::max(0.0, es.eigenvalues()[j])));
    return out;
  }

  double sigma_max_at(cplx lambda) { return sigma_max(c_.evaluate_scaled(lambda)); }

 private:
  // Real, so the iterates for conj(A) are exactly the conjugates of those for A
  // and σ(A(λ̄; −ω)) = σ(A(λ; ω)) holds to rounding even before convergence.
  static VecC start_vector(Eigen::Index n) {
    VecC x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = 1.0 + 0.25 * std::sin(0.37 * double(i)) + 0.1 * std::cos(0.91 * double(i));
    return x;
  }

  double sigma_max(const SpMatC& A) {
    if (pw_.size() != A.rows()) pw_ = start_vector(A.rows()).normalized();
    double s = 0.0;
    for (int it = 0; it < 40; ++it) {
      VecC w = A.adjoint() * (A * pw_);
      const double nw = w.norm();
      const double snew = std::sqrt(nw);
      pw_ = w / nw;
      if (it > 4 && std::abs(snew - s) < 1e-6 * snew) {
        s = snew;
        break;
      }
      s = snew;
    }
    return s;
  }

  const PencilContext& c_;
  SpMatC A_;
  DirectSolver<cplx> lu_;
  VecC pw_;
};

inline SigmaEstimate sigma_min(const PencilContext& c, cplx lambda) {
  SigmaWorker w(c);
  return w.at(lambda);
}

struct SigmaLandscape {
  StripScanConfig cfg;
  double omega = 0.0;
  MatR sigma;  // n_beta × n_xi, relative σ_min
  std::vector<char> flagged;

  bool is_flagged(int j, int k) const { return flagged[std::size_t(j) * cfg.n_xi + k] != 0; }
  double min() const { return sigma.minCoeff(); }
};

// σ_min over the grid β_j + iξ_k. Each β column is one task, swept in ξ
// order with warm starts, so results do not depend on the thread count.
inline SigmaLandscape sigma_min_landscape(const PencilContext& c, const StripScanConfig& cfg) {
  cfg.validate();
  SigmaLandscape L;
  L.cfg = cfg;
  L.omega = c.omega;
  L.sigma = MatR::Zero(cfg.n_beta, cfg.n_xi);
  L.flagged.assign(std::size_t(cfg.n_beta) * cfg.n_xi, 0);
  parallel_for(std::size_t(cfg.n_beta), cfg.threads, [&](std::size_t j) {
    SigmaWorker w(c);
    VecC warm;
    for (int k = 0; k < cfg.n_xi; ++k) {
      const cplx lam(cfg.beta_at(int(j)), cfg.xi_at(k));
      const SigmaEstimate e = w.at(lam, warm.size() ? &warm : nullptr);
      if (e.flagged) {
        L.flagged[j * cfg.n_xi + k] = 1;
        L.sigma(j, k) = 0.0;
        continue;
      }
      L.sigma(j, k) = e.sigma_rel;
      warm = e.right;
    }
  });
  return L;
}

struct EigenvalueEstimate {
  cplx lambda{0.0};
  double sigma_rel = 0.0;
  double residual = 0.0;  // ‖Ã(λ)w‖ for the unit vector w (scaled)
  int iterations = 0;
  bool converged = false;
  int multiplicity = 1;  // singular values of Ã(λ) below the cluster cutoff
  VecC vector;           // unscaled eigenvector
  cplx seed{0.0};
};

// Newton iteration on f(λ) = uᴴÃ(λ)w with backtracking on σ_min.
inline EigenvalueEstimate refine_eigenvalue(const PencilContext& c, cplx lambda0, double tol = 1e-12,
                                            int max_it = 50) {
  SigmaWorker w(c);
  EigenvalueEstimate r;
  r.seed = lambda0;
  cplx lam = lambda0;
  SigmaEstimate e = w.at(lam);
  int it = 0;
  for (; it < max_it && !e.flagged; ++it) {
    if (e.sigma_rel < tol) {
      r.converged = true;
      break;
    }
    const SpMatC dA = c.derivative_scaled(lam);
    const cplx fp = e.left.dot(dA * e.right);
    if (std::abs(fp) == 0.0) break;
    cplx step = -e.sigma_min / fp;
    bool accepted = false;
    for (int b = 0; b < 12; ++b) {
      const SigmaEstimate t = w.at(lam + step, &e.right);
      if (!t.flagged && t.sigma_min < e.sigma_min) {
        lam += step;
        e = t;
        accepted = true;
        break;
      }
      if (t.flagged) {
        // an exactly singular factorization means we landed on it
        lam += step;
        e = t;
        e.sigma_min = e.sigma_rel = 0.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(lam))) {
      r.converged = true;
      ++it;
      break;
    }
  }
  r.lambda = lam;
  r.iterations = it;
  if (e.flagged) {
    // recover a null vector from a slightly shifted, factorizable point
    const SigmaEstimate t = w.at(lam + cplx(1e-12, 0.0));
    e.right = t.right;
    e.sigma_rel = t.sigma_rel;
    r.converged = true;
  }
  r.sigma_rel = e.sigma_rel;
  const SpMatC A = c.evaluate_scaled(lam);
  r.residual = (A * e.right).norm();
  r.vector = c.scale_up(e.right);
  if (r.vector.norm() > 0) r.vector.normalize();
  if (!r.converged && r.sigma_rel < tol) r.converged = true;
  return r;
}

struct SpectrumReport {
  std::vector<EigenvalueEstimate> eigenvalues;  // converged
  std::vector<EigenvalueEstimate> unresolved;
  std::vector<cplx> candidates;                 // landscape local minima below threshold
  double beta_star = 0.0;
  std::string caveat;
};

// Local minima of the landscape (8-neighbour, ties broken by grid index).
inline std::vector<std::pair<int, int>> landscape_minima(const SigmaLandscape& L, double threshold) {
  std::vector<std::pair<int, int>> out;
  const int nb = L.cfg.n_beta, nx = L.cfg.n_xi;
  for (int j = 0; j < nb; ++j)
    for (int k = 0; k < nx; ++k) {
      const double s = L.sigma(j, k);
      if (!(s < threshold)) continue;
      bool is_min = true;
      for (int dj = -1; dj <= 1 && is_min; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          if (!dj && !dk) continue;
          const int jj = j + dj, kk = k + dk;
          if (jj < 0 || jj >= nb || kk < 0 || kk >= nx) continue;
          const double t = L.sigma(jj, kk);
          const bool earlier = jj * nx + kk < j * nx + k;
          if (t < s || (earlier && t == s)) {
            is_min = false;
            break;
          }
        }
      if (is_min) out.emplace_back(j, k);
    }
  return out;
}

inline SpectrumReport locate_eigenvalues_in_strip(const PencilContext& c, const SigmaLandscape& L) {
  SpectrumReport rep;
  rep.caveat = "windowed discrete certificate: relative to the ξ window [" + std::to_string(-L.cfg.xi_max) + ", " +
               std::to_string(L.cfg.xi_max) + "] and the current mesh";
  if (L.cfg.threshold <= 0.0) return rep;
  const auto minima = landscape_minima(L, L.cfg.threshold);
  std::vector<EigenvalueEstimate> found(minima.size());
  parallel_for(minima.size(), L.cfg.threads, [&](std::size_t i) {
    const cplx seed(L.cfg.beta_at(minima[i].first), L.cfg.xi_at(minima[i].second));
    found[i] = refine_eigenvalue(c, seed, L.cfg.refine_tol);
  });
  for (std::size_t i = 0; i < minima.size(); ++i) {
    rep.candidates.emplace_back(L.cfg.beta_at(minima[i].first), L.cfg.xi_at(minima[i].second));
    auto& e = found[i];
    if (!e.converged) {
      rep.unresolved.push_back(std::move(e));
      continue;
    }
    bool dup = false;
    for (const auto& f : rep.eigenvalues) dup = dup || std::abs(f.lambda - e.lambda) < 1e-6 * (1.0 + std::abs(e.lambda));
    if (dup) continue;
    SigmaWorker w(c);
    // the pencil is singular exactly at λ_e; count the cluster just off it
    const auto sv = w.smallest(e.lambda + cplx(1e-9, 0.0), 3);
    const double smax = w.sigma_max_at(e.lambda);
    e.multiplicity = 0;
    for (double s : sv)
      if (s < 1e-6 * smax) ++e.multiplicity;
    e.multiplicity = std::max(1, e.multiplicity);
    rep.eigenvalues.push_back(std::move(e));
  }
  return rep;
}

struct BetaStarEstimate {
  double beta_star = 0.0;
  std::vector<double> beta;        // |β| values, ascending
  std::vector<double> profile;     // min over ξ of σ_rel for each |β|
  std::string diagnostic;
};

// Largest grid |β| such that every column with |β'| ≤ β stays above the
// threshold over the ξ window (outside the exclusion disk).
inline BetaStarEstimate estimate_beta_star(const SigmaLandscape& L, const SpectrumReport* spectrum = nullptr) {
  const auto& cfg = L.cfg;
  BetaStarEstimate out;
  std::map<double, double> col;  // |β| → min σ
  for (int j = 0; j < cfg.n_beta; ++j) {
    const double b = cfg.beta_at(j);
    const double key = std::round(std::abs(b) * 1e12) / 1e12;
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.n_xi; ++k) {
      if (std::abs(cplx(b, cfg.xi_at(k))) < cfg.exclusion_radius) continue;
      m = std::min(m, L.sigma(j, k));
    }
    auto it = col.find(key);
    col[key] = it == col.end() ? m : std::min(it->second, m);
  }
  for (const auto& [b, m] : col) {
    out.beta.push_back(b);
    out.profile.push_back(m);
  }
  out.beta_star = 0.0;
  bool broke = false;
  for (std::size_t i = 0; i < out.beta.size(); ++i) {
    if (!(out.profile[i] > cfg.threshold)) {
      broke = true;
      if (i == 0) out.diagnostic = "threshold not met on the imaginary axis";
      break;
    }
    out.beta_star = out.beta[i];
  }
  if (spectrum)
    for (const auto& e : spectrum->eigenvalues) {
      if (std::abs(e.lambda) < cfg.exclusion_radius) continue;
      out.beta_star = std::min(out.beta_star, std::abs(e.lambda.real()));
    }
  if (!broke && out.diagnostic.empty()) out.diagnostic = "bounded by the scanned strip width";
  return out;
}

// ---------------------------------------------------------------------------
// Resolvent scaling

// N(f,g;ξ) = ‖f‖₀ + ‖g₂‖₀ + ‖g₃‖₀ + |ξ|^{1/2}‖g₁‖₀.
// Sums run in index order rather than through Eigen's vectorized reductions,
// so the value does not depend on the SIMD width it was compiled for.
inline double data_norm(const PencilContext& c, const ModalRhs& rhs, double xi) {
  const auto& M = c.cs->ops().M;
  double f2 = 0.0;
  for (const auto& f : rhs.f) {
    if (!f.size()) continue;
    const VecC Mf = M.cast<cplx>() * f;
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) acc += std::conj(f[i]) * Mf[i];
    f2 += acc.real();
  }
  const double w = c.wall ? c.wall->weight() : 0.0;
  auto gn = [&](const VecC& g) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) s += std::norm(g[i]);
    return g.size() ? std::sqrt(w * s) : 0.0;
  };
  return std::sqrt(std::max(0.0, f2)) + gn(rhs.g[1]) + gn(rhs.g[2]) + std::sqrt(std::abs(xi)) * gn(rhs.g[0]);
}

struct ResolventSample {
  double xi = 0.0;
  double v_l2 = 0.0, grad_v = 0.0, p_l2 = 0.0, u23 = 0.0;
  double data = 0.0;
  double r_v = 0.0, r_grad = 0.0, r_p = 0.0, r_u = 0.0;  // the scaled ratios
  bool flagged = false;
};

struct ResolventProbe {
  std::vector<ResolventSample> samples;
  double slope_v = 0.0;  // log-log slope of ‖v‖₀ against |ξ|
  double xi_floor = 0.0;
};

inline double resolvent_floor(double omega) { return 4.0 * (1.0 + std::abs(omega)); }

inline ResolventProbe resolvent_scaling_probe(const PencilContext& c, const std::vector<double>& xis,
                                              const ModalRhs& rhs, double xi_floor = -1.0) {
  if (c.kind != PencilKind::elastic) throw Error(ErrorKind::interface, "the resolvent probe needs the elastic pencil");
  ResolventProbe out;
  out.xi_floor = xi_floor < 0 ? resolvent_floor(c.omega) : xi_floor;
  for (double xi : xis)
    if (std::abs(xi) < out.xi_floor)
      throw Error(ErrorKind::domain, "|ξ| = " + std::to_string(xi) + " is below the floor " + std::to_string(out.xi_floor));
  const auto& op = c.cs->ops();
  for (double xi : xis) {
    ResolventSample s;
    s.xi = xi;
    s.data = data_norm(c, rhs, xi);
    try {
      const auto sol = solve_modal_coupled(c, cplx(0.0, xi), rhs);
      s.v_l2 = vector_l2(c.cs, sol.v);
      s.grad_v = vector_h1_semi(c.cs, sol.v);
      s.p_l2 = std::sqrt(std::max(0.0, sol.p.dot(op.Mp.cast<cplx>() * sol.p).real()));
      s.u23 = std::sqrt(c.wall->weight() * (sol.u.u2.squaredNorm() + sol.u.u3.squaredNorm()));
    } catch (const NearEigenvalueError&) {
      s.flagged = true;
    }
    if (s.data > 0) {
      const double a = std::abs(xi);
      s.r_v = a * a * s.v_l2 / s.data;
      s.r_grad = a * s.grad_v / s.data;
      s.r_p = s.p_l2 / s.data;
      s.r_u = a * a * s.u23 / s.data;
    }
    out.samples.push_back(s);
  }
  // least-squares slope over the unflagged samples with ‖v‖ > 0
  std::vector<double> x, y;
  for (const auto& s : out.samples)
    if (!s.flagged && s.v_l2 > 0) {
      x.push_back(std::log(std::abs(s.xi)));
      y.push_back(std::log(s.v_l2));
    }
  if (x.size() >= 2) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    out.slope_v = sxy / sxx;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_landscape_csv(std::ostream& os, const SigmaLandscape& L) {
  os << "re_lambda,im_lambda,sigma_min\n" << std::setprecision(17);
  for (int j = 0; j < L.cfg.n_beta; ++j)
    for (int k = 0; k < L.cfg.n_xi; ++k)
      os << L.cfg.beta_at(j) << "," << L.cfg.xi_at(k) << "," << L.sigma(j, k) << "\n";
}

inline nlohmann::json spectrum_json(const SpectrumReport& rep, const SigmaLandscape& L, const BetaStarEstimate& b) {
  nlohmann::json j;
  j["omega"] = L.omega;
  j["window"] = {{"beta_max", L.cfg.beta_max}, {"xi_max", L.cfg.xi_max}, {"n_beta", L.cfg.n_beta},
                 {"n_xi", L.cfg.n_xi},         {"threshold", L.cfg.threshold},
                 {"exclusion_radius", L.cfg.exclusion_radius}};
  auto ev = nlohmann::json::array();
  for (const auto& e : rep.eigenvalues)
    ev.push_back({{"re", e.lambda.real()},
                  {"im", e.lambda.imag()},
                  {"residual", e.residual},
                  {"sigma_rel", e.sigma_rel},
                  {"iterations", e.iterations},
                  {"multiplicity", e.multiplicity}});
  j["eigenvalues"] = ev;
  auto un = nlohmann::json::array();
  for (const auto& e : rep.unresolved) un.push_back({{"seed_re", e.seed.real()}, {"seed_im", e.seed.imag()}, {"status", "unresolved"}});
  j["unresolved"] = un;
  j["landscape_min"] = L.min();
  j["beta_star_estimate"] = b.beta_star;
  j["beta_star_note"] = b.diagnostic;
  j["caveat"] = rep.caveat + "; β* values are new numerical data with no reference value";
  return j;
}

}  // namespace vesselmode
