#pragma once

// First-order solvers for the penalized factored problem: gradient descent,
// perturbed gradient descent with saddle-escape episodes, and the smallest
// Hessian eigenvalue by matrix-free Lanczos.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/penalty.hpp"
#include "lowrank_sdp/random.hpp"

namespace lowrank_sdp {

struct HessianEig {
  double lambda_min = 0.0;
  Matrix direction;
  double residual = 0.0;
  int restarts = 0;
};

/// Smallest eigenvalue of the Hessian of L at U, over the n*k space.
inline HessianEig min_hessian_eig(const PenaltyProblem& pp, const Matrix& u, double tol = 1e-10,
                                  std::uint64_t seed = 0) {
  if (!(tol > 0.0)) throw std::invalid_argument("min_hessian_eig: tol must be positive");
  const HessianOperator h(pp, u);
  LanczosOptions opts;
  opts.tol = tol;
  opts.seed = seed;
  const LanczosResult res = lanczos_smallest(h.as_map(), h.size(), opts);
  HessianEig out;
  out.lambda_min = res.value;
  out.direction = Eigen::Map<const Matrix>(res.vector.data(), u.rows(), u.cols());
  out.residual = res.residual;
  out.restarts = res.restarts;
  return out;
}

inline HessianEig min_hessian_eig(const PenaltyProblem& pp, const FactoredPoint& pt, double tol = 1e-10,
                                  std::uint64_t seed = 0) {
  return min_hessian_eig(pp, pt.matrix(), tol, seed);
}

enum class StepMode { fixed_1_over_l, backtracking };

inline const char* to_string(StepMode m) { return m == StepMode::fixed_1_over_l ? "fixed_1_over_l" : "backtracking"; }

/// Escape-episode parameters. Zero or negative values select the defaults
/// computed from l and rho at the starting ball radius:
///   noise_radius = sqrt(eps) min(1, 1/sqrt(l))
///   t_thres      = ceil(l / sqrt(rho eps)), capped at 1000
///   f_thres      = 0.1 (gamma sqrt(eps))^3 / rho^2
struct PgdConfig {
  double noise_radius = 0.0;
  long t_thres = 0;
  double f_thres = -1.0;
  /// Failure probability and f(U0) - f* bound of the escape analysis; kept
  /// for reporting, not used by the iteration.
  double delta = 0.1;
  double Delta_f = 0.0;
};

struct SolverConfig {
  double eps = 1e-6;
  double gamma = 1.0;
  long max_iters = 100000;
  StepMode step_mode = StepMode::backtracking;
  std::optional<PgdConfig> pgd;
  std::uint64_t seed = 0;
  /// Ball radius for the Lipschitz bounds; 0 selects the default.
  double tau = 0.0;
  Index k = 1;
  double armijo_c1 = 1e-4;
  /// Tolerance handed to the Lanczos eigen-check.
  double eig_tol = 1e-10;
};

enum class SolveStatus { sosp_reached, fosp_reached, max_iters, diverged, line_search_failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::sosp_reached: return "sosp_reached";
    case SolveStatus::fosp_reached: return "fosp_reached";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::diverged: return "diverged";
    case SolveStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

struct TraceRecord {
  long iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double residue_norm = 0.0;
  double step = 0.0;
  bool perturbed = false;
};

struct SolveTrace {
  std::vector<TraceRecord> records;
  SolveStatus status = SolveStatus::max_iters;
  long iterations = 0;
  int perturbations = 0;
  /// True when the final SOSP verdict came from a failed escape episode.
  bool escape_failed = false;
  /// Smallest Hessian eigenvalue from the last eigen-check, if any.
  std::optional<double> hess_min_eig;
  /// Iterations that left the tau ball (fixed steps only).
  long tau_exits = 0;
  LipschitzBounds bounds;
  double noise_radius = 0.0;
  long t_thres = 0;
  double f_thres = 0.0;

  void write_csv(std::ostream& os) const {
    os << "iter,objective,grad_norm,residue_norm,step,perturbed\n";
    const auto prec = os.precision(17);
    for (const auto& r : records) {
      os << r.iter << ',' << r.objective << ',' << r.grad_norm << ',' << r.residue_norm << ',' << r.step << ','
         << (r.perturbed ? 1 : 0) << '\n';
    }
    os.precision(prec);
  }
};

struct SolveResult {
  FactoredPoint point;
  SolveTrace trace;
};

/// Entries i.i.d. N(0, b0 / (n k lambda_max(A0))) when the operator has a
/// compactifier, N(0, 1/sqrt(n k)) otherwise; the second argument is the
/// variance.
inline Matrix initial_point(const PenaltyProblem& pp, Index k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("initial_point: k must be >= 1");
  const Index n = pp.dim();
  const double nk = static_cast<double>(n * k);
  double var = 1.0 / std::sqrt(nk);
  if (const auto& c = pp.op().compactifier(); c && c->rhs > 0.0) {
    var = c->rhs / (nk * extreme_eigenvalues(c->matrix).max);
  }
  const double sd = std::sqrt(var);
  const std::uint64_t s = derive_seed(seed, "init");
  Matrix u(n, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) u(i, j) = sd * keyed_normal(s, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  return u;
}

/// Default ball radius: twice the eps-FOSP norm bound in compact mode, else
/// twice the larger of ||U0||_F and the positive-definite-cost bound.
inline double default_tau(const PenaltyProblem& pp, const Matrix& u0, double eps) {
  const double u0n = u0.norm();
  if (pp.use_compactifier()) {
    try {
      return std::max(2.0 * std::sqrt(factor_norm_bound(pp, eps, BoundMode::compact)), 2.0 * u0n);
    } catch (const PlannerError&) {
    }
  }
  double pd = 0.0;
  try {
    pd = std::sqrt(factor_norm_bound(pp, eps, BoundMode::pd_cost));
  } catch (const PlannerError&) {
  }
  const double t = 2.0 * std::max(u0n, pd);
  return t > 0.0 ? t : 1.0;
}

namespace detail {

inline void validate(const SolverConfig& cfg, const Matrix& u0, const PenaltyProblem& pp) {
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("solver: eps must be positive");
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("solver: gamma must be positive");
  if (cfg.max_iters < 0) throw std::invalid_argument("solver: max_iters must be >= 0");
  if (u0.rows() != pp.dim()) throw std::invalid_argument("solver: U0 row count differs from problem side");
  if (!u0.allFinite()) throw std::invalid_argument("solver: U0 is not finite");
  if (cfg.pgd && cfg.pgd->noise_radius < 0.0) throw std::invalid_argument("solver: noise_radius must be positive");
}

struct Evaluated {
  double f = 0.0;
  Matrix g;
  Vector r;
};

inline Evaluated evaluate(const PenaltyProblem& pp, const Matrix& u) {
  Evaluated e;
  e.r = penalty_residue(pp, u);
  e.f = pp.effective_cost().inner_gram(u) + pp.mu() * e.r.squaredNorm();
  e.g = gradient(pp, u);
  return e;
}

// Uniform sample from the Frobenius ball of the given radius.
inline Matrix ball_noise(Index rows, Index cols, double radius, CounterRng& rng) {
  Matrix d(rows, cols);
  for (Index i = 0; i < d.size(); ++i) d(i) = rng.normal();
  const double nrm = d.norm();
  if (nrm == 0.0) return Matrix::Zero(rows, cols);
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d.size()));
  return d * (r / nrm);
}

class Descent {
 public:
  Descent(const PenaltyProblem& pp, const Matrix& u0, const SolverConfig& cfg) : pp_(pp), cfg_(cfg), u_(u0) {
    tau_ = cfg.tau > 0.0 ? cfg.tau : default_tau(pp, u0, cfg.eps);
    bounds_ = lipschitz_bounds(pp, tau_);
    eta_ = bounds_.l > 0.0 ? 1.0 / bounds_.l : 1.0;
    cur_ = evaluate(pp, u_);
  }

  const Matrix& point() const noexcept { return u_; }
  const Evaluated& current() const noexcept { return cur_; }
  const LipschitzBounds& bounds() const noexcept { return bounds_; }
  long tau_exits() const noexcept { return tau_exits_; }

  void set_point(const Matrix& u) {
    u_ = u;
    cur_ = evaluate(pp_, u_);
  }

  // One descent step; returns the step size or nullopt if the line search failed.
  std::optional<double> step() {
    const double gg = cur_.g.squaredNorm();
    if (cfg_.step_mode == StepMode::fixed_1_over_l) {
      const double eta = bounds_.l > 0.0 ? 1.0 / bounds_.l : 1.0;
      Matrix next = u_ - eta * cur_.g;
      if (next.norm() > tau_) {
        ++tau_exits_;
        tau_ *= 2.0;
        bounds_ = lipschitz_bounds(pp_, tau_);
      }
      set_point(next);
      return eta;
    }
    // L(U - eta G) - L(U) is a quartic in eta; expanding it avoids the
    // cancellation of differencing two nearly equal objective values.
    const Matrix d = -cur_.g;
    const double lin_c = pp_.effective_cost().inner_sym_product(u_, d);
    const double quad_c = pp_.effective_cost().inner_gram(d);
    const Vector s = linearized_residue(pp_, u_, d);
    const Vector q = apply_operator_gram(pp_.active_operator(), d);
    auto change = [&](double eta) {
      const Vector dr = eta * s + (eta * eta) * q;
      return eta * lin_c + eta * eta * quad_c + pp_.mu() * (2.0 * cur_.r.dot(dr) + dr.squaredNorm());
    };
    double eta = 2.0 * eta_;
    for (int tries = 0; tries < 200; ++tries) {
      const double delta = change(eta);
      if (std::isfinite(delta) && delta <= -cfg_.armijo_c1 * eta * gg) {
        Matrix next = u_ - eta * cur_.g;
        eta_ = eta;
        set_point(next);
        return eta;
      }
      eta *= 0.5;
    }
    return std::nullopt;
  }

 private:
  const PenaltyProblem& pp_;
  const SolverConfig& cfg_;
  Matrix u_;
  Evaluated cur_;
  double tau_ = 1.0;
  LipschitzBounds bounds_;
  double eta_ = 1.0;
  long tau_exits_ = 0;
};

inline TraceRecord record(long iter, const Evaluated& e, double step, bool perturbed) {
  return {iter, e.f, e.g.norm(), e.r.norm(), step, perturbed};
}

inline bool finite(const Evaluated& e) { return std::isfinite(e.f) && e.g.allFinite(); }

}  // namespace detail

/// Gradient descent until ||grad L||_F <= eps or max_iters.
inline SolveResult gd(const PenaltyProblem& pp, const Matrix& u0, const SolverConfig& cfg) {
  detail::validate(cfg, u0, pp);
  detail::Descent run(pp, u0, cfg);
  SolveTrace trace;
  trace.bounds = run.bounds();
  long it = 0;
  trace.records.push_back(detail::record(0, run.current(), 0.0, false));
  for (;; ++it) {
    if (!detail::finite(run.current())) {
      trace.status = SolveStatus::diverged;
      break;
    }
    if (run.current().g.norm() <= cfg.eps) {
      trace.status = SolveStatus::fosp_reached;
      break;
    }
    if (it >= cfg.max_iters) {
      trace.status = SolveStatus::max_iters;
      break;
    }
    const auto eta = run.step();
    if (!eta) {
      trace.status = SolveStatus::line_search_failed;
      break;
    }
    trace.records.push_back(detail::record(it + 1, run.current(), *eta, false));
  }
  trace.iterations = it;
  trace.tau_exits = run.tau_exits();
  return {FactoredPoint(run.point()), std::move(trace)};
}

inline SolveResult gd(const PenaltyProblem& pp, const FactoredPoint& u0, const SolverConfig& cfg) {
  return gd(pp, u0.matrix(), cfg);
}

/// Perturbed gradient descent. At an eps-FOSP outside an escape episode the
/// Hessian is checked first; if lambda_min >= -gamma sqrt(eps) the point is
/// returned as an SOSP. Otherwise ball noise is added and an episode starts.
/// An episode that has not lowered L by f_thres after t_thres steps is
/// abandoned: the pre-noise point is returned and declared an SOSP.
inline SolveResult pgd(const PenaltyProblem& pp, const Matrix& u0, const SolverConfig& cfg) {
  detail::validate(cfg, u0, pp);
  if (!cfg.pgd) throw std::invalid_argument("pgd: configuration has no escape parameters");
  detail::Descent run(pp, u0, cfg);
  SolveTrace trace;
  trace.bounds = run.bounds();

  const double l = trace.bounds.l > 0.0 ? trace.bounds.l : 1.0;
  const double rho = trace.bounds.rho > 0.0 ? trace.bounds.rho : 1.0;
  const double se = std::sqrt(cfg.eps);
  trace.noise_radius = cfg.pgd->noise_radius > 0.0 ? cfg.pgd->noise_radius : se * std::min(1.0, 1.0 / std::sqrt(l));
  trace.t_thres = cfg.pgd->t_thres > 0
                      ? cfg.pgd->t_thres
                      : std::clamp<long>(static_cast<long>(std::ceil(l / std::sqrt(rho * cfg.eps))), 1, 1000);
  trace.f_thres = cfg.pgd->f_thres >= 0.0 ? cfg.pgd->f_thres : 0.1 * std::pow(cfg.gamma * se, 3) / (rho * rho);
  const double curvature_floor = -cfg.gamma * se;

  CounterRng noise(derive_seed(cfg.seed, "pgd-noise"));
  const std::uint64_t lanczos_seed = derive_seed(cfg.seed, "lanczos");
  int eig_checks = 0;

  bool in_episode = false;
  Matrix episode_u;
  double episode_f = 0.0;
  long episode_start = 0;

  long it = 0;
  trace.records.push_back(detail::record(0, run.current(), 0.0, false));
  for (;; ++it) {
    if (!detail::finite(run.current())) {
      trace.status = SolveStatus::diverged;
      break;
    }
    if (in_episode && it - episode_start >= trace.t_thres) {
      in_episode = false;
      if (episode_f - run.current().f < trace.f_thres) {
        run.set_point(episode_u);
        trace.escape_failed = true;
        trace.status = SolveStatus::sosp_reached;
        trace.records.push_back(detail::record(it, run.current(), 0.0, false));
        break;
      }
    }
    if (!in_episode && run.current().g.norm() <= cfg.eps) {
      const HessianEig h = min_hessian_eig(pp, run.point(), cfg.eig_tol, lanczos_seed + 3 * static_cast<std::uint64_t>(eig_checks++));
      trace.hess_min_eig = h.lambda_min;
      if (h.lambda_min >= curvature_floor) {
        trace.status = SolveStatus::sosp_reached;
        break;
      }
      if (it >= cfg.max_iters) {
        trace.status = SolveStatus::max_iters;
        break;
      }
      in_episode = true;
      episode_u = run.point();
      episode_f = run.current().f;
      episode_start = it;
      run.set_point(run.point() + detail::ball_noise(run.point().rows(), run.point().cols(), trace.noise_radius, noise));
      ++trace.perturbations;
      trace.records.push_back(detail::record(it, run.current(), 0.0, true));
      continue;
    }
    if (it >= cfg.max_iters) {
      trace.status = SolveStatus::max_iters;
      break;
    }
    const auto eta = run.step();
    if (!eta) {
      trace.status = SolveStatus::line_search_failed;
      break;
    }
    trace.records.push_back(detail::record(it + 1, run.current(), *eta, false));
  }
  trace.iterations = it;
  trace.tau_exits = run.tau_exits();
  return {FactoredPoint(run.point()), std::move(trace)};
}

inline SolveResult pgd(const PenaltyProblem& pp, const FactoredPoint& u0, const SolverConfig& cfg) {
  return pgd(pp, u0.matrix(), cfg);
}

}  // namespace lowrank_sdp
