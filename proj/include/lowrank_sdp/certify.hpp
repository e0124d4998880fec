#pragma once

// Stationarity predicates, rank deficiency, the dual certificate
// lambda_min(C + G + 2 mu A*(r)) >= -gamma sqrt(eps) with its optimality-gap
// bound, and the convex-lift optimality conditions.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/penalty.hpp"
#include "lowrank_sdp/solve.hpp"

namespace lowrank_sdp {

struct CertifyOptions {
  /// sigma_k / sigma_1 at or below this declares rank deficiency.
  double rank_threshold = 1e-6;
  double eig_tol = 1e-10;
  std::uint64_t seed = 0;
};

struct Certificate {
  double grad_norm = 0.0;
  double hess_min_eig = 0.0;
  double sigma_k = 0.0;
  double dual_min_eig = 0.0;
  std::optional<double> gap_bound;
  std::optional<double> trace_bound;
  bool is_eps_fosp = false;
  bool is_eps_gamma_sosp = false;
  bool is_rank_deficient = false;
  bool certificate_holds = false;
};

struct RankReport {
  Vector singular_values;
  double sigma_k_over_sigma_1 = 0.0;
};

/// Singular values of U in descending order, and sigma_k / sigma_1
/// (zero for U = 0).
inline RankReport rank_deficiency_report(const Matrix& u) {
  const Eigen::JacobiSVD<Matrix> svd(u);
  RankReport out;
  out.singular_values = Vector::Zero(u.cols());
  const Vector s = svd.singularValues();
  out.singular_values.head(s.size()) = s;
  const double s1 = out.singular_values.size() ? out.singular_values[0] : 0.0;
  out.sigma_k_over_sigma_1 = s1 > 0.0 ? out.singular_values[out.singular_values.size() - 1] / s1 : 0.0;
  return out;
}

inline RankReport rank_deficiency_report(const FactoredPoint& pt) { return rank_deficiency_report(pt.matrix()); }

/// b0 / lambda_min(A0) when the compactifier is in use: every feasible X
/// satisfies Tr(X) <= b0 / lambda_min(A0).
inline std::optional<double> default_trace_bound(const PenaltyProblem& pp) {
  if (!pp.use_compactifier() || !pp.op().compactifier()) return std::nullopt;
  const auto& c = *pp.op().compactifier();
  return c.rhs / extreme_eigenvalues(c.matrix).min;
}

/// Smallest eigenvalue of C + G + 2 mu A*(r(U)).
inline double dual_min_eig(const PenaltyProblem& pp, const Matrix& u, double tol = 1e-10, std::uint64_t seed = 0) {
  const SparseSymmetric d = dual_matrix(pp, u);
  LanczosOptions opts;
  opts.tol = tol;
  opts.seed = seed;
  return lanczos_smallest(d.as_map(), d.size(), opts).value;
}

/// Evaluates every certificate field at U. When trace_bound is absent the
/// compact-mode default is used if available.
inline Certificate certify(const PenaltyProblem& pp, const Matrix& u, double eps, double gamma,
                           std::optional<double> trace_bound = std::nullopt, const CertifyOptions& opts = {}) {
  if (!(eps > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("certify: eps and gamma must be positive");
  Certificate c;
  c.grad_norm = gradient(pp, u).norm();
  c.hess_min_eig = min_hessian_eig(pp, u, opts.eig_tol, derive_seed(opts.seed, "certify-hessian")).lambda_min;
  const RankReport rr = rank_deficiency_report(u);
  c.sigma_k = rr.singular_values.size() ? rr.singular_values[rr.singular_values.size() - 1] : 0.0;
  c.dual_min_eig = dual_min_eig(pp, u, opts.eig_tol, derive_seed(opts.seed, "certify-dual"));
  c.trace_bound = trace_bound ? trace_bound : default_trace_bound(pp);
  const double floor = -gamma * std::sqrt(eps);
  if (c.trace_bound) c.gap_bound = gamma * std::sqrt(eps) * *c.trace_bound + 0.5 * eps * u.norm();
  c.is_eps_fosp = c.grad_norm <= eps;
  c.is_eps_gamma_sosp = c.is_eps_fosp && c.hess_min_eig >= floor;
  c.is_rank_deficient = rr.sigma_k_over_sigma_1 <= opts.rank_threshold;
  c.certificate_holds = c.dual_min_eig >= floor;
  return c;
}

inline Certificate certify(const PenaltyProblem& pp, const FactoredPoint& pt, double eps, double gamma,
                           std::optional<double> trace_bound = std::nullopt, const CertifyOptions& opts = {}) {
  return certify(pp, pt.matrix(), eps, gamma, trace_bound, opts);
}

struct KktReport {
  double lambda_min = 0.0;
  double complementarity = 0.0;
  bool holds = false;
};

/// grad F(X) >= 0 and grad F(X) X = 0 at X = U U^T, to tolerance tol.
inline KktReport convex_kkt_report(const PenaltyProblem& pp, const Matrix& u, double tol) {
  const Matrix x = u * u.transpose();
  const Matrix g = convex_objective_and_grad(pp, x).gradient;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  KktReport r;
  r.lambda_min = es.eigenvalues()[0];
  r.complementarity = (g * x).norm();
  r.holds = r.lambda_min >= -tol && r.complementarity <= tol * (1.0 + x.norm());
  return r;
}

inline bool convex_kkt_check(const PenaltyProblem& pp, const Matrix& u, double tol) {
  return convex_kkt_report(pp, u, tol).holds;
}

inline bool convex_kkt_check(const PenaltyProblem& pp, const FactoredPoint& pt, double tol) {
  return convex_kkt_check(pp, pt.matrix(), tol);
}

}  // namespace lowrank_sdp
