#pragma once

// Instance generators: Max-Cut, matrix completion, the SDP with a suboptimal
// second-order point, and the constrained-case counterexample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/penalty.hpp"
#include "lowrank_sdp/random.hpp"

namespace lowrank_sdp {

struct Edge {
  Index u = 0;
  Index v = 0;
  double weight = 1.0;
};

struct Graph {
  Index n = 0;
  std::vector<Edge> edges;

  Graph() = default;
  Graph(Index n_, std::vector<Edge> e) : n(n_), edges(std::move(e)) { validate(); }

  /// Rejects self-loops, out-of-range vertices and repeated edges; orients
  /// every edge as u < v.
  void validate() {
    if (n < 1) throw std::invalid_argument("Graph: n must be >= 1");
    std::set<std::pair<Index, Index>> seen;
    for (auto& e : edges) {
      if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
        throw std::invalid_argument("Graph: edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                    ") outside [0, " + std::to_string(n) + ")");
      }
      if (e.u == e.v) throw std::invalid_argument("Graph: self-loop at " + std::to_string(e.u));
      if (e.u > e.v) std::swap(e.u, e.v);
      if (!seen.insert({e.u, e.v}).second) {
        throw std::invalid_argument("Graph: duplicate edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ")");
      }
    }
  }

  double total_weight() const {
    double w = 0.0;
    for (const auto& e : edges) w += e.weight;
    return w;
  }

  SparseSymmetric adjacency() const {
    std::vector<SparseEntry> entries;
    entries.reserve(edges.size());
    for (const auto& e : edges) entries.push_back({e.u, e.v, e.weight});
    return SparseSymmetric(n, std::move(entries));
  }

  static Graph cycle(Index n) {
    std::vector<Edge> e;
    for (Index i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
    return Graph(n, std::move(e));
  }

  static Graph complete_bipartite(Index a, Index b) {
    std::vector<Edge> e;
    for (Index i = 0; i < a; ++i)
      for (Index j = 0; j < b; ++j) e.push_back({i, a + j, 1.0});
    return Graph(a + b, std::move(e));
  }
};

struct Observation {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
};

struct ObservationSet {
  Index rows = 0;
  Index cols = 0;
  std::vector<Observation> entries;

  ObservationSet() = default;
  ObservationSet(Index r, Index c, std::vector<Observation> e) : rows(r), cols(c), entries(std::move(e)) { validate(); }

  void validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("ObservationSet: dimensions must be >= 1");
    std::set<std::pair<Index, Index>> seen;
    for (const auto& o : entries) {
      if (o.i < 0 || o.i >= rows || o.j < 0 || o.j >= cols) {
        throw std::invalid_argument("ObservationSet: index (" + std::to_string(o.i) + ", " + std::to_string(o.j) +
                                    ") out of range");
      }
      if (!seen.insert({o.i, o.j}).second) {
        throw std::invalid_argument("ObservationSet: duplicate observation (" + std::to_string(o.i) + ", " +
                                    std::to_string(o.j) + ")");
      }
    }
  }
};

/// min <C + G, U U^T> + mu sum_i (||u_i||^2 - 1)^2 with C the adjacency
/// matrix; the trace constraint (I, n) is carried as the compactifier and
/// penalized. G is drawn from GoeSpec{n, sigma_G, seed}.
inline PenaltyProblem build_maxcut(const Graph& g, double mu, double sigma_G, std::uint64_t seed) {
  if (g.n < 1) throw std::invalid_argument("build_maxcut: n must be >= 1");
  std::vector<SparseSymmetric> mats;
  mats.reserve(static_cast<std::size_t>(g.n));
  for (Index i = 0; i < g.n; ++i) mats.emplace_back(g.n, std::vector<SparseEntry>{{i, i, 1.0}});
  ConstraintOperator op(g.n, std::move(mats), Vector::Ones(g.n),
                        Compactifier{SparseSymmetric::identity(g.n), static_cast<double>(g.n)});
  return PenaltyProblem::with_goe(g.adjacency(), std::move(op), mu, GoeSpec{g.n, sigma_G, seed}, true);
}

/// Weight of the edges crossing the partition given by the signs of x.
inline double cut_value(const Graph& g, const Vector& x) {
  if (x.size() != g.n) throw std::invalid_argument("cut_value: sign vector length differs from n");
  double w = 0.0;
  for (const auto& e : g.edges)
    if ((x[e.u] >= 0.0) != (x[e.v] >= 0.0)) w += e.weight;
  return w;
}

/// Random-hyperplane rounding of the rows of U: x_i = sign(<u_i, h>).
inline Vector hyperplane_round(const Matrix& u, std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, "rounding"));
  Vector h(u.cols());
  for (Index j = 0; j < h.size(); ++j) h[j] = rng.normal();
  const Vector p = u * h;
  Vector x(u.rows());
  for (Index i = 0; i < x.size(); ++i) x[i] = p[i] >= 0.0 ? 1.0 : -1.0;
  return x;
}

struct RoundingReport {
  Vector signs;
  double cut = 0.0;
  double best_cut = 0.0;
  std::uint64_t best_seed = 0;
};

/// Best of several hyperplane roundings; seeds seed, seed+1, ...
inline RoundingReport round_maxcut(const Graph& g, const Matrix& u, std::uint64_t seed, int rounds = 16) {
  RoundingReport out;
  out.best_cut = -1.0;
  for (int t = 0; t < std::max(1, rounds); ++t) {
    const Vector x = hyperplane_round(u, seed + static_cast<std::uint64_t>(t));
    const double c = cut_value(g, x);
    if (t == 0) out.cut = c;
    if (c > out.best_cut) {
      out.best_cut = c;
      out.signs = x;
      out.best_seed = seed + static_cast<std::uint64_t>(t);
    }
  }
  return out;
}

/// Lifted problem on Z = [[W1, X], [X^T, W2]] of side n1 + n2: C = I and one
/// constraint <A_ij, Z> = Z(i, n1 + j) = M_ij per observation. No compactifier.
inline PenaltyProblem build_matcomp(const ObservationSet& obs, double mu, double sigma_G, std::uint64_t seed) {
  obs.validate();
  if (obs.entries.empty()) throw std::invalid_argument("build_matcomp: at least one observation is required");
  const Index n = obs.rows + obs.cols;
  std::vector<SparseSymmetric> mats;
  Vector b(static_cast<Index>(obs.entries.size()));
  mats.reserve(obs.entries.size());
  for (std::size_t t = 0; t < obs.entries.size(); ++t) {
    const auto& o = obs.entries[t];
    mats.emplace_back(n, std::vector<SparseEntry>{{o.i, obs.rows + o.j, 0.5}});
    b[static_cast<Index>(t)] = o.value;
  }
  ConstraintOperator op(n, std::move(mats), std::move(b));
  return PenaltyProblem::with_goe(SparseSymmetric::identity(n), std::move(op), mu, GoeSpec{n, sigma_G, seed}, false);
}

struct BadSdp {
  PenaltyProblem problem;
  FactoredPoint u_bar;
  FactoredPoint u_opt;
  double eps_bad = 0.0;
};

/// SDP with C = 0 whose single feasible point is X = (5(n-1)/3) e_n e_n^T,
/// penalized with mu = 1/2. U_bar = [I_{n-1}; 0] is a suboptimal SOSP of the
/// rank-(n-1) penalty problem.
inline BadSdp build_bad_sdp(Index n) {
  if (n < 3) throw std::invalid_argument("build_bad_sdp: n must be >= 3, got " + std::to_string(n));
  const double nm1 = static_cast<double>(n - 1);
  const double eps = std::sqrt(6.0 / nm1);
  const Index last = n - 1;
  std::vector<SparseSymmetric> mats;
  mats.reserve(static_cast<std::size_t>(n + 1));
  for (Index i = 0; i < last; ++i) mats.emplace_back(n, std::vector<SparseEntry>{{i, last, 1.0}});
  std::vector<SparseEntry> an, an1;
  for (Index i = 0; i < last; ++i) {
    an.push_back({i, i, eps});
    an1.push_back({i, i, 2.0 * eps});
  }
  an.push_back({last, last, eps});
  an1.push_back({last, last, eps});
  mats.emplace_back(n, std::move(an));
  mats.emplace_back(n, std::move(an1));
  Vector b = Vector::Zero(n + 1);
  b[n - 1] = 5.0 * nm1 * eps / 3.0;
  b[n] = 5.0 * nm1 * eps / 3.0;

  Matrix ubar = Matrix::Zero(n, n - 1);
  ubar.topRows(n - 1).setIdentity();
  Matrix uopt = Matrix::Zero(n, n - 1);
  uopt(last, 0) = std::sqrt(5.0 * nm1 / 3.0);

  return {PenaltyProblem(SparseSymmetric(n), ConstraintOperator(n, std::move(mats), std::move(b)), 0.5),
          FactoredPoint(std::move(ubar)), FactoredPoint(std::move(uopt)), eps};
}

struct ConstrainedCe {
  Index n = 0;
  SparseSymmetric cost;
  /// A_1..A_{n-2} with right-hand side 0, then the trace constraint (I, n-2).
  ConstraintOperator constraints;
  FactoredPoint u;
  Vector w;
  Matrix x0;
  Matrix d;
};

/// The constrained-case counterexample with k = n - 2 and its witnesses.
inline ConstrainedCe build_constrained_ce(Index n) {
  if (n < 4) throw std::invalid_argument("build_constrained_ce: n must be >= 4, got " + std::to_string(n));
  const Index k = n - 2;
  const Index p = n - 2, q = n - 1;
  std::vector<SparseEntry> c;
  for (Index i = 0; i < k; ++i) {
    c.push_back({i, i, 1.0});
    c.push_back({i, p, 1.0});
    c.push_back({i, q, 1.0});
  }
  c.push_back({p, p, 2.0 * static_cast<double>(n)});

  std::vector<SparseSymmetric> mats;
  for (Index i = 0; i < k; ++i) {
    mats.emplace_back(n, std::vector<SparseEntry>{{i, p, 1.0}, {i, q, 1.0}, {q, q, 1.0}});
  }
  mats.push_back(SparseSymmetric::identity(n));
  Vector b = Vector::Zero(k + 1);
  b[k] = static_cast<double>(k);

  Matrix u = Matrix::Zero(n, k);
  u.topRows(k).setIdentity();
  Vector w = Vector::Ones(n);
  w[p] = 0.0;
  w[q] = -1.0;
  Matrix en = Matrix::Zero(n, n);
  en(q, q) = 1.0;
  const Matrix x0 = (static_cast<double>(n - 2) / static_cast<double>(n)) * (w * w.transpose() + en);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0 * static_cast<double>(n) - 1.0;
  d(1, 1) = -(static_cast<double>(n) - 1.0);

  return {n,
          SparseSymmetric(n, std::move(c)),
          ConstraintOperator(n, std::move(mats), std::move(b)),
          FactoredPoint(std::move(u)),
          std::move(w),
          x0,
          std::move(d)};
}

struct CeCheck {
  std::string name;
  double residual = 0.0;
  bool passed = false;
};

struct CeReport {
  std::vector<CeCheck> checks;
  double objective_u = 0.0;
  double objective_x0 = 0.0;
  /// Smallest tangent increase divided by sum_i c_i^2 for du_i = c_i (1, -1).
  double min_tangent_ratio = 0.0;
  double min_tangent_increase = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CeCheck& c) { return c.passed; });
  }
  std::string failures() const {
    std::string s;
    for (const auto& c : checks)
      if (!c.passed) s += c.name + " (residual " + std::to_string(c.residual) + "); ";
    return s;
  }
};

/// Checks feasibility of U U^T and X0, X0 >= 0, the objective gap, the
/// first-order identity C U = U + sum_i A_i U, and positivity of the
/// objective change along random tangent directions.
inline CeReport verify_constrained_ce(const ConstrainedCe& ce, double tol, int directions = 100,
                                      std::uint64_t seed = 0) {
  const Index n = ce.n, k = n - 2, p = n - 2, q = n - 1;
  const Matrix& u = ce.u.matrix();
  CeReport rep;
  auto add = [&](std::string name, double resid, bool ok) { rep.checks.push_back({std::move(name), resid, ok}); };

  const Matrix xu = u * u.transpose();
  const double ru = (apply_operator(ce.constraints, xu) - ce.constraints.rhs()).cwiseAbs().maxCoeff();
  const double rx = (apply_operator(ce.constraints, ce.x0) - ce.constraints.rhs()).cwiseAbs().maxCoeff();
  add("feasibility of U U^T", ru, ru <= tol);
  add("feasibility of X0", rx, rx <= tol);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(ce.x0, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()[0];
  add("X0 positive semidefinite", std::max(0.0, -lmin), lmin >= -tol);

  rep.objective_u = ce.cost.inner(xu);
  rep.objective_x0 = ce.cost.inner(ce.x0);
  add("objective gap <C, U U^T> - <C, X0> > 0", rep.objective_u - rep.objective_x0,
      rep.objective_u - rep.objective_x0 > tol);

  Matrix rhs = u;
  for (Index i = 0; i < k; ++i) rhs += ce.constraints.mats()[static_cast<std::size_t>(i)] * u;
  const double fo = (ce.cost * u - rhs).cwiseAbs().maxCoeff();
  add("first-order identity C U = U + sum A_i U", fo, fo <= tol);

  // C - sum_i A_i - I restricted to the tangent directions.
  Matrix m = ce.cost.to_dense() - Matrix::Identity(n, n);
  for (Index i = 0; i < k; ++i) m -= ce.constraints.mats()[static_cast<std::size_t>(i)].to_dense();

  CounterRng rng(derive_seed(seed, "tangent"));
  double worst_ratio = std::numeric_limits<double>::infinity();
  double worst_increase = std::numeric_limits<double>::infinity();
  double worst_ortho = 0.0, worst_identity = 0.0;
  for (int t = 0; t < directions; ++t) {
    Matrix du = Matrix::Zero(n, k);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j) du(i, j) = rng.normal();
    du.topRows(k).diagonal().array() -= du.topRows(k).trace() / static_cast<double>(k);
    Vector c(k);
    for (Index j = 0; j < k; ++j) {
      c[j] = rng.normal();
      du(p, j) = c[j];
      du(q, j) = -c[j];
    }
    double ortho = std::abs((du.transpose() * u).trace());
    for (Index i = 0; i < k; ++i) {
      ortho = std::max(ortho, std::abs((du.transpose() * (ce.constraints.mats()[static_cast<std::size_t>(i)] * u)).trace()));
    }
    worst_ortho = std::max(worst_ortho, ortho);
    const double increase = (du.transpose() * m * du).trace();
    double via_d = 0.0;
    for (Index j = 0; j < k; ++j) {
      Eigen::Vector2d dj(du(p, j), du(q, j));
      via_d += dj.dot(ce.d * dj);
    }
    worst_identity = std::max(worst_identity, std::abs(increase - via_d) / (1.0 + std::abs(via_d)));
    worst_increase = std::min(worst_increase, increase);
    worst_ratio = std::min(worst_ratio, increase / c.squaredNorm());
  }
  if (directions > 0) {
    rep.min_tangent_ratio = worst_ratio;
    rep.min_tangent_increase = worst_increase;
    add("tangent directions orthogonal to span{U, A_i U}", worst_ortho, worst_ortho <= tol);
    add("tangent increase equals sum du_i^T D du_i", worst_identity, worst_identity <= tol);
    add("tangent increase positive", std::max(0.0, -worst_increase), worst_increase > 0.0);
  }
  const Eigen::Vector2d one(1.0, -1.0);
  const double dd = one.dot(ce.d * one);
  add("[1, -1] D [1, -1]^T = n", std::abs(dd - static_cast<double>(n)), std::abs(dd - static_cast<double>(n)) <= tol);
  return rep;
}

}  // namespace lowrank_sdp
