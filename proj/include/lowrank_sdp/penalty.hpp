#pragma once

// Penalized Burer-Monteiro objective L(U) = <C + G, U U^T> + mu ||r(U)||^2,
// its derivatives, the convex lift F(X), Lipschitz and residue bounds, and the
// (B, k, eps) parameter planner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/perturb.hpp"

namespace lowrank_sdp {

class PenaltyProblem {
 public:
  PenaltyProblem(SparseSymmetric cost, ConstraintOperator op, double mu,
                 std::optional<SparseSymmetric> perturbation = std::nullopt, bool use_compactifier = false)
      : cost_(std::move(cost)),
        op_(std::move(op)),
        mu_(mu),
        perturbation_(std::move(perturbation)),
        use_compactifier_(use_compactifier),
        active_(make_active(op_, use_compactifier_)),
        effective_(cost_) {
    validate();
  }

  /// Perturbation drawn from a GOE spec; the spec is kept for serialization.
  /// sigma_G = 0 means no perturbation.
  static PenaltyProblem with_goe(SparseSymmetric cost, ConstraintOperator op, double mu, const GoeSpec& goe,
                                 bool use_compactifier = false) {
    if (goe.n != cost.size()) throw std::invalid_argument("PenaltyProblem: GOE side differs from cost side");
    if (goe.sigma_G == 0.0) return PenaltyProblem(std::move(cost), std::move(op), mu, std::nullopt, use_compactifier);
    PenaltyProblem p(std::move(cost), std::move(op), mu, sample_goe(goe), use_compactifier);
    p.goe_ = goe;
    return p;
  }

  Index dim() const noexcept { return cost_.size(); }
  const SparseSymmetric& cost() const noexcept { return cost_; }
  const ConstraintOperator& op() const noexcept { return op_; }
  double mu() const noexcept { return mu_; }
  const std::optional<SparseSymmetric>& perturbation() const noexcept { return perturbation_; }
  const std::optional<GoeSpec>& goe() const noexcept { return goe_; }
  bool use_compactifier() const noexcept { return use_compactifier_; }

  /// C + G.
  const SparseSymmetric& effective_cost() const noexcept { return effective_; }
  /// The operator whose residue is penalized: extended by (A0, b0) when the
  /// compactifier is in use.
  const ConstraintOperator& active_operator() const noexcept { return active_; }

  bool operator==(const PenaltyProblem& o) const {
    return cost_ == o.cost_ && op_ == o.op_ && mu_ == o.mu_ && perturbation_ == o.perturbation_ &&
           goe_ == o.goe_ && use_compactifier_ == o.use_compactifier_;
  }

 private:
  static ConstraintOperator make_active(const ConstraintOperator& op, bool use) {
    if (!use) return op;
    if (!op.compactifier()) throw std::invalid_argument("PenaltyProblem: use_compactifier set but no compactifier");
    return op.extended();
  }

  void validate() {
    if (op_.dim() != cost_.size()) {
      throw std::invalid_argument("PenaltyProblem: cost side " + std::to_string(cost_.size()) +
                                  " differs from operator side " + std::to_string(op_.dim()));
    }
    if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw std::invalid_argument("PenaltyProblem: mu must be finite and >= 0");
    if (perturbation_) {
      if (perturbation_->size() != cost_.size()) throw std::invalid_argument("PenaltyProblem: perturbation side mismatch");
      effective_ = cost_ + *perturbation_;
    }
  }

  SparseSymmetric cost_;
  ConstraintOperator op_;
  double mu_;
  std::optional<SparseSymmetric> perturbation_;
  std::optional<GoeSpec> goe_;
  bool use_compactifier_;
  ConstraintOperator active_;
  SparseSymmetric effective_;
};

namespace detail {

inline void check_factor(const PenaltyProblem& pp, const Matrix& u, const char* what) {
  if (u.rows() != pp.dim()) {
    throw std::invalid_argument(std::string(what) + ": U has " + std::to_string(u.rows()) + " rows, problem side is " +
                                std::to_string(pp.dim()));
  }
}

}  // namespace detail

/// Residue of the penalized operator (tilde residue in compact mode).
inline Vector penalty_residue(const PenaltyProblem& pp, const Matrix& u) {
  detail::check_factor(pp, u, "penalty_residue");
  return apply_operator_gram(pp.active_operator(), u) - pp.active_operator().rhs();
}

inline double objective(const PenaltyProblem& pp, const Matrix& u) {
  const Vector r = penalty_residue(pp, u);
  return pp.effective_cost().inner_gram(u) + pp.mu() * r.squaredNorm();
}

/// Evaluates L and stores the residue and value on the point.
inline double objective(const PenaltyProblem& pp, FactoredPoint& pt) {
  const Vector r = penalty_residue(pp, pt.matrix());
  const double f = pp.effective_cost().inner_gram(pt.matrix()) + pp.mu() * r.squaredNorm();
  pt.set_cache({r, f});
  return f;
}

/// C + G + 2 mu A*(r), the matrix whose action on U gives half the gradient.
inline SparseSymmetric dual_matrix(const PenaltyProblem& pp, const Vector& r) {
  return SparseSymmetric::combine(1.0, pp.effective_cost(), 2.0 * pp.mu(), adjoint_operator(pp.active_operator(), r));
}

inline SparseSymmetric dual_matrix(const PenaltyProblem& pp, const Matrix& u) {
  return dual_matrix(pp, penalty_residue(pp, u));
}

/// 2 (C + G) U + 4 mu sum_i r_i A_i U.
inline Matrix gradient(const PenaltyProblem& pp, const Matrix& u) {
  const Vector r = penalty_residue(pp, u);
  Matrix g = Matrix::Zero(u.rows(), u.cols());
  pp.effective_cost().multiply_add(u, 2.0, g);
  const auto& mats = pp.active_operator().mats();
  for (std::size_t i = 0; i < mats.size(); ++i) mats[i].multiply_add(u, 4.0 * pp.mu() * r[static_cast<Index>(i)], g);
  return g;
}

inline Matrix gradient(const PenaltyProblem& pp, const FactoredPoint& pt) { return gradient(pp, pt.matrix()); }

/// s_i = <A_i, U V^T + V U^T>.
inline Vector linearized_residue(const PenaltyProblem& pp, const Matrix& u, const Matrix& v) {
  const auto& mats = pp.active_operator().mats();
  Vector s(static_cast<Index>(mats.size()));
  for (std::size_t i = 0; i < mats.size(); ++i) s[static_cast<Index>(i)] = mats[i].inner_sym_product(u, v);
  return s;
}

/// Hessian-vector products at a fixed U, with the dual matrix formed once.
class HessianOperator {
 public:
  HessianOperator(const PenaltyProblem& pp, const Matrix& u) : pp_(&pp), u_(u), dual_(dual_matrix(pp, u)) {
    detail::check_factor(pp, u, "HessianOperator");
  }

  /// 2 (C + G + 2 mu A*(r)) V + 4 mu sum_i s_i A_i U.
  Matrix apply(const Matrix& v) const {
    if (v.rows() != u_.rows() || v.cols() != u_.cols()) throw std::invalid_argument("hessian_vec: direction shape mismatch");
    Matrix out = Matrix::Zero(v.rows(), v.cols());
    dual_.multiply_add(v, 2.0, out);
    const Vector s = linearized_residue(*pp_, u_, v);
    const auto& mats = pp_->active_operator().mats();
    for (std::size_t i = 0; i < mats.size(); ++i) mats[i].multiply_add(u_, 4.0 * pp_->mu() * s[static_cast<Index>(i)], out);
    return out;
  }

  /// <V, H[V]> = 2 <C + G + 2 mu A*(r), V V^T> + 2 mu ||s||^2.
  double quadratic_form(const Matrix& v) const {
    return 2.0 * dual_.inner_gram(v) + 2.0 * pp_->mu() * linearized_residue(*pp_, u_, v).squaredNorm();
  }

  /// The map on vec(V) (column-major n*k vectors).
  LinearMap as_map() const {
    return [this](const Vector& x, Vector& y) {
      const Matrix v = Eigen::Map<const Matrix>(x.data(), u_.rows(), u_.cols());
      const Matrix hv = apply(v);
      y = Eigen::Map<const Vector>(hv.data(), hv.size());
    };
  }

  Index size() const noexcept { return u_.size(); }
  const Matrix& point() const noexcept { return u_; }
  const SparseSymmetric& dual() const noexcept { return dual_; }

 private:
  const PenaltyProblem* pp_;
  Matrix u_;
  SparseSymmetric dual_;
};

inline Matrix hessian_vec(const PenaltyProblem& pp, const Matrix& u, const Matrix& v) {
  return HessianOperator(pp, u).apply(v);
}

inline Matrix hessian_vec(const PenaltyProblem& pp, const FactoredPoint& pt, const Matrix& v) {
  return hessian_vec(pp, pt.matrix(), v);
}

/// Dense nk x nk Hessian in vec(U) coordinates. Only for small instances.
inline Matrix dense_hessian(const PenaltyProblem& pp, const Matrix& u) {
  const HessianOperator h(pp, u);
  const Index d = u.size();
  Matrix out(d, d);
  Matrix e = Matrix::Zero(u.rows(), u.cols());
  for (Index c = 0; c < d; ++c) {
    e(c) = 1.0;
    const Matrix col = h.apply(e);
    out.col(c) = Eigen::Map<const Vector>(col.data(), d);
    e(c) = 0.0;
  }
  return 0.5 * (out + out.transpose());
}

struct ConvexValue {
  double value = 0.0;
  Matrix gradient;
};

/// F(X) = <C + G, X> + mu ||A(X) - b||^2 and grad F = C + G + 2 mu A*(r).
inline ConvexValue convex_objective_and_grad(const PenaltyProblem& pp, const Matrix& x) {
  const Vector r = apply_operator(pp.active_operator(), x) - pp.active_operator().rhs();
  ConvexValue out;
  out.value = pp.effective_cost().inner(x) + pp.mu() * r.squaredNorm();
  out.gradient = dual_matrix(pp, r).to_dense();
  return out;
}

struct LipschitzBounds {
  double tau = 0.0;
  double l = 0.0;
  double rho = 0.0;
};

/// Smoothness constants of L on the ball ||U||_F <= tau:
///   l   = 2 ||C + G||_2 + 4 mu ||A|| ||b|| + 12 mu tau^2 ||A||^2
///   rho = 24 mu tau ||A||^2
inline LipschitzBounds lipschitz_bounds(const PenaltyProblem& pp, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("lipschitz_bounds: tau must be positive");
  const double cn = spectral_norm(pp.effective_cost());
  const double an = operator_norm(pp.active_operator());
  const double bn = pp.active_operator().rhs().norm();
  const double mu = pp.mu();
  return {tau, 2.0 * cn + 4.0 * mu * an * bn + 12.0 * mu * tau * tau * an * an, 24.0 * mu * tau * an * an};
}

enum class BoundMode { compact, pd_cost };

inline const char* to_string(BoundMode m) { return m == BoundMode::compact ? "compact" : "pd_cost"; }

class PlannerError : public std::invalid_argument {
 public:
  PlannerError(const std::string& what, std::optional<double> cap = std::nullopt)
      : std::invalid_argument(what), cap_(cap) {}
  std::optional<double> cap() const noexcept { return cap_; }

 private:
  std::optional<double> cap_;
};

/// Bound on ||U||_F^2 at every eps-FOSP, for the given mode.
inline double factor_norm_bound(const PenaltyProblem& pp, double eps, BoundMode mode) {
  if (!(eps > 0.0)) throw std::invalid_argument("factor_norm_bound: eps must be positive");
  const double mu = pp.mu();
  if (mode == BoundMode::compact) {
    if (!pp.op().compactifier()) throw PlannerError("compact mode requires a compactifier (A0, b0)");
    if (!pp.use_compactifier()) throw PlannerError("compact mode requires the compactifier to be penalized");
    const auto& c = *pp.op().compactifier();
    if (!(c.rhs > 0.0)) throw PlannerError("compact mode requires b0 > 0");
    if (!(mu > 0.0)) throw PlannerError("compact mode requires mu > 0");
    const ExtremeEigenvalues a0 = extreme_eigenvalues(c.matrix);
    const double cn = spectral_norm(pp.effective_cost());
    const double first = std::pow(eps / (2.0 * mu * c.rhs * a0.max), 2);
    const double second = (cn / (2.0 * mu) + 1.5 * c.rhs * a0.max) / (a0.min * a0.min) +
                          pp.op().rhs().norm() / (2.0 * a0.min);
    return std::max(first, second);
  }
  const double lc = extreme_eigenvalues(pp.cost()).min;
  if (!(lc > 0.0)) {
    throw PlannerError("pd_cost mode requires a positive definite cost; lambda_min(C) = " + std::to_string(lc));
  }
  if (pp.perturbation()) {
    const double lcg = extreme_eigenvalues(pp.effective_cost()).min;
    if (lcg < 0.5 * lc) {
      throw PlannerError("pd_cost mode requires lambda_min(C + G) >= lambda_min(C) / 2; lambda_min(C + G) = " +
                         std::to_string(lcg) + ", lambda_min(C) = " + std::to_string(lc));
    }
  }
  const double bn = pp.active_operator().rhs().norm();
  return std::max(std::pow(2.0 * eps / lc, 2), 2.0 * mu * bn * bn / lc);
}

/// Bound B on ||r||_2 (tilde residue in compact mode) at every eps-FOSP.
inline double residue_bound_B(const PenaltyProblem& pp, double eps, BoundMode mode) {
  const double u2 = factor_norm_bound(pp, eps, mode);
  const ConstraintOperator& a = pp.active_operator();
  return operator_norm(a) * u2 + a.rhs().norm();
}

struct PlannerConfig {
  double gamma = 1.0;
  double delta = 0.1;
  double c0 = 1.0;
  BoundMode mode = BoundMode::compact;
  /// Perturbation scale; defaults to the problem's GOE sigma.
  std::optional<double> sigma_G;
  /// Rank the caller intends to use; eps_max is computed at max(k, k_min).
  std::optional<Index> k;
  int max_rounds = 10;
};

struct PlannerOutput {
  double B = 0.0;
  Index k_min = 1;
  Index k_used = 1;
  double eps_max = 0.0;
  /// pd_cost only: the residue-bound cap lambda_min(C) / (6 sqrt(n log(n/delta)))
  /// and the looser cap with 4 in place of 6.
  std::optional<double> sigma_G_max;
  std::optional<double> sigma_G_max_theorem;
  double sigma_G = 0.0;
  double c0 = 1.0;
  double delta = 0.1;
  double gamma = 1.0;
  int rank = 0;
  double op_norm = 0.0;
  int rounds = 0;
  bool converged = false;
  BoundMode mode = BoundMode::compact;
};

/// eps <= (gamma k^2 sigma^2 / (32 c0 n mu ||A||^2))^(2/3).
inline double planner_eps_max(Index k, Index n, double gamma, double sigma, double c0, double mu, double op_norm) {
  const double denom = 32.0 * c0 * static_cast<double>(n) * mu * op_norm * op_norm;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return std::pow(gamma * static_cast<double>(k * k) * sigma * sigma / denom, 2.0 / 3.0);
}

/// k >= 3 [log(n/delta) + sqrt(rank log(1 + 8 mu B ||A|| sqrt(c0 n) / sigma))].
inline Index planner_k_min(Index n, double delta, int rank, double mu, double B, double op_norm, double c0,
                           double sigma) {
  const double inner = 1.0 + 8.0 * mu * B * op_norm * std::sqrt(c0 * static_cast<double>(n)) / sigma;
  const double k = 3.0 * (std::log(static_cast<double>(n) / delta) + std::sqrt(rank * std::log(inner)));
  return std::max<Index>(1, static_cast<Index>(std::ceil(k)));
}

/// Solves for (B, k, eps): B at the current eps, then k_min, then eps_max at
/// the rank in use, repeated until k_min stops changing.
inline PlannerOutput plan_parameters(const PenaltyProblem& pp, const PlannerConfig& cfg) {
  if (!(cfg.gamma > 0.0)) throw PlannerError("planner: gamma must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw PlannerError("planner: delta must lie in (0, 1)");
  if (!(cfg.c0 > 0.0)) throw PlannerError("planner: c0 must be positive");
  if (!(pp.mu() > 0.0)) throw PlannerError("planner: mu must be positive");
  const double sigma = cfg.sigma_G ? *cfg.sigma_G : (pp.goe() ? pp.goe()->sigma_G : 0.0);
  if (cfg.k && *cfg.k < 1) throw PlannerError("planner: k must be >= 1");

  const Index n = pp.dim();
  PlannerOutput out;
  out.mode = cfg.mode;
  out.sigma_G = sigma;
  out.c0 = cfg.c0;
  out.delta = cfg.delta;
  out.gamma = cfg.gamma;

  if (cfg.mode == BoundMode::pd_cost) {
    const double lc = extreme_eigenvalues(pp.cost()).min;
    if (!(lc > 0.0)) {
      throw PlannerError("pd_cost mode requires a positive definite cost; lambda_min(C) = " + std::to_string(lc));
    }
    const double root = std::sqrt(static_cast<double>(n) * std::log(static_cast<double>(n) / cfg.delta));
    out.sigma_G_max = root > 0.0 ? lc / (6.0 * root) : std::numeric_limits<double>::infinity();
    out.sigma_G_max_theorem = root > 0.0 ? lc / (4.0 * root) : std::numeric_limits<double>::infinity();
    if (sigma > *out.sigma_G_max) {
      throw PlannerError("sigma_G = " + std::to_string(sigma) + " exceeds the cap " + std::to_string(*out.sigma_G_max),
                         out.sigma_G_max);
    }
  }

  if (!(sigma > 0.0)) throw PlannerError("planner: sigma_G must be positive");

  const ConstraintOperator& a = pp.active_operator();
  out.op_norm = operator_norm(a);
  out.rank = operator_rank(a);

  Index k = cfg.k ? *cfg.k : n;
  double eps = planner_eps_max(k, n, cfg.gamma, sigma, cfg.c0, pp.mu(), out.op_norm);
  Index prev = -1;
  for (int round = 1; round <= std::max(1, cfg.max_rounds); ++round) {
    out.rounds = round;
    out.B = residue_bound_B(pp, std::isfinite(eps) ? eps : 1.0, cfg.mode);
    out.k_min = planner_k_min(n, cfg.delta, out.rank, pp.mu(), out.B, out.op_norm, cfg.c0, sigma);
    k = cfg.k ? std::max(*cfg.k, out.k_min) : out.k_min;
    eps = planner_eps_max(k, n, cfg.gamma, sigma, cfg.c0, pp.mu(), out.op_norm);
    if (out.k_min == prev) {
      out.converged = true;
      break;
    }
    prev = out.k_min;
  }
  out.k_used = k;
  out.eps_max = eps;
  return out;
}

/// Growth rates of the rank requirement for Max-Cut and matrix completion,
/// up to a configurable constant: c sqrt(n log(mu^2 sqrt(n) / sigma)) and
/// c sqrt(|S| log(mu^2 sqrt(n) / sigma)).
inline double maxcut_rank_scale(Index n, double mu, double sigma_G, double c = 1.0) {
  const double arg = mu * mu * std::sqrt(static_cast<double>(n)) / sigma_G;
  return c * std::sqrt(static_cast<double>(n) * std::log(std::max(arg, std::exp(1.0))));
}

inline double matcomp_rank_scale(Index observed, Index n, double mu, double sigma_G, double c = 1.0) {
  const double arg = mu * mu * std::sqrt(static_cast<double>(n)) / sigma_G;
  return c * std::sqrt(static_cast<double>(observed) * std::log(std::max(arg, std::exp(1.0))));
}

}  // namespace lowrank_sdp
