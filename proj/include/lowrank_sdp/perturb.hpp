#pragma once

// Symmetric Gaussian perturbations and an empirical estimate of the
// least-singular-value constant c0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/random.hpp"

namespace lowrank_sdp {

struct GoeSpec {
  Index n = 1;
  double sigma_G = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const GoeSpec&) const = default;
};

/// G_ij ~ N(0, sigma_G^2) for i <= j, G = G^T. Entry (i, j) depends only on
/// (seed, i, j).
inline SparseSymmetric sample_goe(const GoeSpec& spec) {
  if (spec.n <= 0) throw std::invalid_argument("sample_goe: n must be positive");
  if (!(spec.sigma_G >= 0.0) || !std::isfinite(spec.sigma_G)) {
    throw std::invalid_argument("sample_goe: sigma_G must be finite and nonnegative");
  }
  if (spec.sigma_G == 0.0) return SparseSymmetric(spec.n);
  std::vector<SparseEntry> e;
  e.reserve(static_cast<std::size_t>(spec.n * (spec.n + 1) / 2));
  for (Index j = 0; j < spec.n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      e.push_back({i, j, spec.sigma_G * keyed_normal(spec.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j))});
    }
  }
  return SparseSymmetric(spec.n, std::move(e));
}

struct CalibrationResult {
  double c0_hat = 0.0;
  /// Fraction of trials with s < k^2 sigma^2 / (c0 n) at the configured c0.
  double violation_rate = 0.0;
  double c0 = 1.0;
  int trials = 0;
  /// Per-trial k^2 sigma^2 / (n s); a trial violates c0 when this exceeds it.
  std::vector<double> ratios;
};

constexpr Index kCalibrationMaxN = 400;

/// Sum of squares of the k smallest singular values of G over GOE draws.
/// c0_hat is the smallest c0 for which s >= k^2 sigma^2 / (c0 n) in every
/// trial. Trial t uses GoeSpec{n, sigma_G, hash_key(seed, t, 0)}.
inline CalibrationResult calibrate_c0(Index n, Index k, double sigma_G, int trials, std::uint64_t seed,
                                      double c0 = 1.0, unsigned threads = 1) {
  if (n < 1 || n > kCalibrationMaxN) {
    throw std::invalid_argument("calibrate_c0: n = " + std::to_string(n) + " outside [1, " +
                                std::to_string(kCalibrationMaxN) + "] (dense eigendecomposition budget)");
  }
  if (k < 1 || k > n) throw std::invalid_argument("calibrate_c0: k must satisfy 1 <= k <= n");
  if (!(sigma_G > 0.0)) throw std::invalid_argument("calibrate_c0: sigma_G must be positive");
  if (trials < 1) throw std::invalid_argument("calibrate_c0: trials must be >= 1");
  if (!(c0 > 0.0)) throw std::invalid_argument("calibrate_c0: c0 must be positive");

  CalibrationResult out;
  out.c0 = c0;
  out.trials = trials;
  out.ratios.assign(static_cast<std::size_t>(trials), 0.0);
  const double num = static_cast<double>(k) * static_cast<double>(k) * sigma_G * sigma_G;

  auto run = [&](int t) {
    const GoeSpec spec{n, sigma_G, hash_key(seed, static_cast<std::uint64_t>(t), 0)};
    const Eigen::SelfAdjointEigenSolver<Matrix> es(sample_goe(spec).to_dense(), Eigen::EigenvaluesOnly);
    Vector sv = es.eigenvalues().cwiseAbs();
    std::sort(sv.begin(), sv.end());
    const double s = sv.head(k).squaredNorm();
    out.ratios[static_cast<std::size_t>(t)] =
        s > 0.0 ? num / (static_cast<double>(n) * s) : std::numeric_limits<double>::infinity();
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
  if (workers == 1) {
    for (int t = 0; t < trials; ++t) run(t);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int t = static_cast<int>(w); t < trials; t += static_cast<int>(workers)) run(t);
      });
    }
    for (auto& th : pool) th.join();
  }

  int violations = 0;
  for (const double r : out.ratios) {
    out.c0_hat = std::max(out.c0_hat, r);
    if (r > c0) ++violations;
  }
  out.violation_rate = static_cast<double>(violations) / static_cast<double>(trials);
  return out;
}

}  // namespace lowrank_sdp
