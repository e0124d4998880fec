#pragma once

// Matrix-free symmetric eigenvalue routines: power iteration for extreme
// eigenvalues and Lanczos with full reorthogonalization for the smallest one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

#include "lowrank_sdp/random.hpp"

namespace lowrank_sdp {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// y = A x for a symmetric linear map A. y is pre-sized by the caller.
using LinearMap = std::function<void(const Vector& x, Vector& y)>;

struct PowerOptions {
  double rel_tol = 1e-8;
  /// Upper bound is max(10 * dim, min_iterations).
  Index min_iterations = 1000;
};

enum class PowerStart { ones, pseudo_random };

namespace detail {

inline Vector power_start(Index dim, PowerStart start) {
  Vector x(dim);
  if (start == PowerStart::ones) {
    x.setOnes();
  } else {
    CounterRng rng(0x5eed5eedULL + static_cast<std::uint64_t>(dim));
    for (Index i = 0; i < dim; ++i) x[i] = rng.normal();
  }
  return x / x.norm();
}

// Rayleigh-quotient power iteration on a positive semidefinite map.
inline double psd_power(const LinearMap& apply, Index dim, PowerStart start, const PowerOptions& opts) {
  if (dim == 0) return 0.0;
  Vector x = power_start(dim, start);
  Vector y(dim);
  const Index max_iter = std::max<Index>(10 * dim, opts.min_iterations);
  double lambda = 0.0;
  for (Index it = 0; it < max_iter; ++it) {
    apply(x, y);
    const double next = x.dot(y);
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
    if (it > 0 && std::abs(next - lambda) <= opts.rel_tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

/// Largest eigenvalue of a positive semidefinite map, all-ones start.
inline double psd_max_eigenvalue(const LinearMap& apply, Index dim, const PowerOptions& opts = {}) {
  return detail::psd_power(apply, dim, PowerStart::ones, opts);
}

/// ||A||_2 of a symmetric map, by power iteration on A^2.
inline double spectral_norm(const LinearMap& apply, Index dim, const PowerOptions& opts = {}) {
  Vector tmp(dim);
  const LinearMap squared = [&](const Vector& x, Vector& y) {
    apply(x, tmp);
    apply(tmp, y);
  };
  return std::sqrt(std::max(0.0, detail::psd_power(squared, dim, PowerStart::pseudo_random, opts)));
}

struct ExtremeEigenvalues {
  double min = 0.0;
  double max = 0.0;
};

/// Both ends of the spectrum of a symmetric map via shifted power iteration.
inline ExtremeEigenvalues extreme_eigenvalues(const LinearMap& apply, Index dim, const PowerOptions& opts = {}) {
  if (dim == 0) return {};
  const double s = spectral_norm(apply, dim, opts);
  const LinearMap plus = [&](const Vector& x, Vector& y) {
    apply(x, y);
    y += s * x;
  };
  const LinearMap minus = [&](const Vector& x, Vector& y) {
    apply(x, y);
    y = s * x - y;
  };
  ExtremeEigenvalues out;
  out.max = detail::psd_power(plus, dim, PowerStart::pseudo_random, opts) - s;
  out.min = s - detail::psd_power(minus, dim, PowerStart::pseudo_random, opts);
  return out;
}

struct LanczosResult {
  double value = 0.0;
  Vector vector;
  double residual = 0.0;
  Index iterations = 0;
  int restarts = 0;
};

struct LanczosOptions {
  double tol = 1e-10;
  Index max_krylov = 300;
  std::uint64_t seed = 0;
  int max_attempts = 3;
};

/// Smallest eigenpair of a symmetric map. Full reorthogonalization; stops on
/// a residual below tol * (1 + ||T||), on an invariant subspace, or when the
/// Krylov space fills the whole space. Attempts that exhaust max_krylov
/// restart from the current Ritz vector mixed with a fresh start drawn from
/// seed + attempt.
inline LanczosResult lanczos_smallest(const LinearMap& apply, Index dim, const LanczosOptions& opts = {}) {
  if (dim <= 0) throw std::invalid_argument("lanczos_smallest: empty space");
  const Index kmax = std::min(dim, std::max<Index>(opts.max_krylov, 2));

  Vector carry;
  LanczosResult best;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    CounterRng rng(opts.seed + static_cast<std::uint64_t>(attempt));
    Vector q(dim);
    for (Index i = 0; i < dim; ++i) q[i] = rng.normal();
    q /= q.norm();
    if (carry.size() == dim) {
      q = carry + 1e-3 * q;
      q /= q.norm();
    }

    Matrix basis(dim, kmax);
    Vector alpha(kmax), beta(kmax);
    Vector w(dim);
    basis.col(0) = q;
    Index steps = 0;
    bool done = false;
    for (Index j = 0; j < kmax; ++j) {
      apply(basis.col(j), w);
      alpha[j] = basis.col(j).dot(w);
      w -= alpha[j] * basis.col(j);
      if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
      for (int pass = 0; pass < 2; ++pass) {
        const auto active = basis.leftCols(j + 1);
        w -= active * (active.transpose() * w);
      }
      beta[j] = w.norm();
      steps = j + 1;

      Eigen::SelfAdjointEigenSolver<Matrix> tri;
      tri.computeFromTridiagonal(alpha.head(steps), beta.head(steps - 1), Eigen::ComputeEigenvectors);
      const double theta = tri.eigenvalues()[0];
      const double t_norm = tri.eigenvalues().cwiseAbs().maxCoeff();
      const double resid = std::abs(beta[j] * tri.eigenvectors()(steps - 1, 0));
      const bool breakdown = beta[j] <= 1e-13 * (1.0 + t_norm);
      if (resid <= opts.tol * (1.0 + t_norm) || breakdown || steps == dim || steps == kmax) {
        best.value = theta;
        best.vector = basis.leftCols(steps) * tri.eigenvectors().col(0);
        best.vector.normalize();
        best.residual = resid;
        best.iterations += steps;
        best.restarts = attempt;
        if (resid <= opts.tol * (1.0 + t_norm) || breakdown || steps == dim) done = true;
        break;
      }
      basis.col(j + 1) = w / beta[j];
    }
    if (done) return best;
    carry = best.vector;
  }
  throw std::runtime_error("lanczos_smallest: no convergence after restarts");
}

}  // namespace lowrank_sdp
