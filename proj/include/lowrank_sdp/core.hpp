#pragma once

// Data model for SDP instances: sparse symmetric matrices, the constraint
// operator A(X)_i = <A_i, X> and its adjoint, residues and operator norms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lowrank_sdp/spectral.hpp"

namespace lowrank_sdp {

struct SparseEntry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
  bool operator==(const SparseEntry&) const = default;
};

/// Symmetric n x n matrix stored as its upper triangle in coordinate form,
/// sorted by (row, col). Off-diagonal entries stand for both (i, j) and (j, i).
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  explicit SparseSymmetric(Index n) : n_(check_side(n)) {}

  /// Entries may name either triangle; they are folded to row <= col.
  /// Exact zeros are dropped and a repeated (i, j) key is an error.
  SparseSymmetric(Index n, std::vector<SparseEntry> entries) : n_(check_side(n)), entries_(std::move(entries)) {
    for (auto& e : entries_) {
      if (e.row < 0 || e.row >= n_ || e.col < 0 || e.col >= n_) {
        throw std::invalid_argument("SparseSymmetric: index (" + std::to_string(e.row) + ", " +
                                    std::to_string(e.col) + ") outside [0, " + std::to_string(n_) + ")");
      }
      if (e.row > e.col) std::swap(e.row, e.col);
    }
    std::erase_if(entries_, [](const SparseEntry& e) { return e.value == 0.0; });
    std::sort(entries_.begin(), entries_.end(), key_less);
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].row == entries_[i - 1].row && entries_[i].col == entries_[i - 1].col) {
        throw std::invalid_argument("SparseSymmetric: duplicate entry (" + std::to_string(entries_[i].row) + ", " +
                                    std::to_string(entries_[i].col) + ")");
      }
    }
  }

  static SparseSymmetric identity(Index n) {
    std::vector<SparseEntry> e;
    e.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) e.push_back({i, i, 1.0});
    return SparseSymmetric(n, std::move(e));
  }

  /// Upper triangle of a dense matrix; the lower triangle is ignored.
  static SparseSymmetric from_dense(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("SparseSymmetric::from_dense: matrix not square");
    std::vector<SparseEntry> e;
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i <= j; ++i)
        if (m(i, j) != 0.0) e.push_back({i, j, m(i, j)});
    return SparseSymmetric(m.rows(), std::move(e));
  }

  Index size() const noexcept { return n_; }
  const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
  /// Stored nonzeros of the full symmetric matrix.
  std::size_t nnz() const noexcept {
    std::size_t c = 0;
    for (const auto& e : entries_) c += (e.row == e.col) ? 1 : 2;
    return c;
  }
  bool empty() const noexcept { return entries_.empty(); }

  /// <S, X> for a dense square X; uses X(i, j) + X(j, i) off the diagonal.
  double inner(const Matrix& x) const {
    check_square(x, "inner");
    double s = 0.0;
    for (const auto& e : entries_) s += e.row == e.col ? e.value * x(e.row, e.row) : e.value * (x(e.row, e.col) + x(e.col, e.row));
    return s;
  }

  /// Frobenius inner product of two sparse symmetric matrices.
  double inner(const SparseSymmetric& other) const {
    if (other.n_ != n_) throw std::invalid_argument("SparseSymmetric::inner: side mismatch");
    double s = 0.0;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() && b != other.entries_.end()) {
      if (key_less(*a, *b)) {
        ++a;
      } else if (key_less(*b, *a)) {
        ++b;
      } else {
        s += (a->row == a->col ? 1.0 : 2.0) * a->value * b->value;
        ++a;
        ++b;
      }
    }
    return s;
  }

  /// <S, U U^T> without forming U U^T.
  double inner_gram(const Matrix& u) const {
    check_rows(u, "inner_gram");
    double s = 0.0;
    for (const auto& e : entries_) {
      const double d = u.row(e.row).dot(u.row(e.col));
      s += e.row == e.col ? e.value * d : 2.0 * e.value * d;
    }
    return s;
  }

  /// <S, U V^T + V U^T>.
  double inner_sym_product(const Matrix& u, const Matrix& v) const {
    check_rows(u, "inner_sym_product");
    check_rows(v, "inner_sym_product");
    double s = 0.0;
    for (const auto& e : entries_) {
      if (e.row == e.col) {
        s += 2.0 * e.value * u.row(e.row).dot(v.row(e.row));
      } else {
        s += 2.0 * e.value * (u.row(e.row).dot(v.row(e.col)) + u.row(e.col).dot(v.row(e.row)));
      }
    }
    return s;
  }

  /// out += alpha * S * m.
  void multiply_add(const Matrix& m, double alpha, Matrix& out) const {
    check_rows(m, "multiply_add");
    if (out.rows() != n_ || out.cols() != m.cols()) throw std::invalid_argument("SparseSymmetric::multiply_add: output shape");
    if (alpha == 0.0) return;
    for (const auto& e : entries_) {
      const double a = alpha * e.value;
      out.row(e.row) += a * m.row(e.col);
      if (e.row != e.col) out.row(e.col) += a * m.row(e.row);
    }
  }

  void multiply_add(const Vector& x, double alpha, Vector& out) const {
    if (x.size() != n_ || out.size() != n_) throw std::invalid_argument("SparseSymmetric::multiply_add: vector size");
    if (alpha == 0.0) return;
    for (const auto& e : entries_) {
      const double a = alpha * e.value;
      out[e.row] += a * x[e.col];
      if (e.row != e.col) out[e.col] += a * x[e.row];
    }
  }

  Matrix operator*(const Matrix& m) const {
    Matrix out = Matrix::Zero(n_, m.cols());
    multiply_add(m, 1.0, out);
    return out;
  }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(n_, n_);
    for (const auto& e : entries_) {
      d(e.row, e.col) = e.value;
      d(e.col, e.row) = e.value;
    }
    return d;
  }

  double frobenius_norm() const { return std::sqrt(inner(*this)); }

  SparseSymmetric scaled(double alpha) const {
    SparseSymmetric out(n_);
    if (alpha == 0.0) return out;
    out.entries_ = entries_;
    for (auto& e : out.entries_) e.value *= alpha;
    return out;
  }

  /// alpha * a + beta * b, merged in one pass.
  static SparseSymmetric combine(double alpha, const SparseSymmetric& a, double beta, const SparseSymmetric& b) {
    if (a.n_ != b.n_) throw std::invalid_argument("SparseSymmetric::combine: side mismatch");
    SparseSymmetric out(a.n_);
    out.entries_.reserve(a.entries_.size() + b.entries_.size());
    auto i = a.entries_.begin();
    auto j = b.entries_.begin();
    auto push = [&](Index r, Index c, double v) {
      if (v != 0.0) out.entries_.push_back({r, c, v});
    };
    while (i != a.entries_.end() || j != b.entries_.end()) {
      if (j == b.entries_.end() || (i != a.entries_.end() && key_less(*i, *j))) {
        push(i->row, i->col, alpha * i->value);
        ++i;
      } else if (i == a.entries_.end() || key_less(*j, *i)) {
        push(j->row, j->col, beta * j->value);
        ++j;
      } else {
        push(i->row, i->col, alpha * i->value + beta * j->value);
        ++i;
        ++j;
      }
    }
    return out;
  }

  friend SparseSymmetric operator+(const SparseSymmetric& a, const SparseSymmetric& b) { return combine(1.0, a, 1.0, b); }

  bool operator==(const SparseSymmetric&) const = default;

  LinearMap as_map() const {
    return [this](const Vector& x, Vector& y) {
      y.setZero();
      multiply_add(x, 1.0, y);
    };
  }

 private:
  static bool key_less(const SparseEntry& a, const SparseEntry& b) noexcept {
    return a.row < b.row || (a.row == b.row && a.col < b.col);
  }
  static Index check_side(Index n) {
    if (n <= 0) throw std::invalid_argument("SparseSymmetric: side must be positive");
    return n;
  }
  void check_square(const Matrix& x, const char* what) const {
    if (x.rows() != n_ || x.cols() != n_) {
      throw std::invalid_argument(std::string("SparseSymmetric::") + what + ": expected " + std::to_string(n_) + "x" +
                                  std::to_string(n_) + ", got " + std::to_string(x.rows()) + "x" +
                                  std::to_string(x.cols()));
    }
  }
  void check_rows(const Matrix& x, const char* what) const {
    if (x.rows() != n_) {
      throw std::invalid_argument(std::string("SparseSymmetric::") + what + ": expected " + std::to_string(n_) +
                                  " rows, got " + std::to_string(x.rows()));
    }
  }

  Index n_ = 0;
  std::vector<SparseEntry> entries_;
};

/// ||S||_2 by power iteration.
inline double spectral_norm(const SparseSymmetric& s) { return spectral_norm(s.as_map(), s.size()); }

inline ExtremeEigenvalues extreme_eigenvalues(const SparseSymmetric& s) {
  return extreme_eigenvalues(s.as_map(), s.size());
}

/// Redundant constraint <A0, X> = b0 with A0 positive definite.
struct Compactifier {
  SparseSymmetric matrix;
  double rhs = 0.0;
  bool operator==(const Compactifier&) const = default;
};

/// The linear map A : S^n -> R^m with right-hand side b and an optional
/// compactifying pair (A0, b0).
class ConstraintOperator {
 public:
  ConstraintOperator(Index n, std::vector<SparseSymmetric> mats, Vector rhs,
                     std::optional<Compactifier> compactifier = std::nullopt)
      : n_(n), mats_(std::move(mats)), rhs_(std::move(rhs)), compactifier_(std::move(compactifier)) {
    if (n_ <= 0) throw std::invalid_argument("ConstraintOperator: side must be positive");
    if (static_cast<Index>(mats_.size()) != rhs_.size()) {
      throw std::invalid_argument("ConstraintOperator: " + std::to_string(mats_.size()) + " matrices but " +
                                  std::to_string(rhs_.size()) + " right-hand sides");
    }
    for (std::size_t i = 0; i < mats_.size(); ++i) {
      if (mats_[i].size() != n_) {
        throw std::invalid_argument("ConstraintOperator: constraint " + std::to_string(i) + " has side " +
                                    std::to_string(mats_[i].size()) + ", expected " + std::to_string(n_));
      }
    }
    if (compactifier_) {
      if (compactifier_->matrix.size() != n_) throw std::invalid_argument("ConstraintOperator: A0 side mismatch");
      if (!(compactifier_->rhs >= 0.0)) throw std::invalid_argument("ConstraintOperator: b0 must be nonnegative");
      const Eigen::SelfAdjointEigenSolver<Matrix> es(compactifier_->matrix.to_dense(), Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
      if (!(lo > 1e-10 * hi)) {
        throw std::invalid_argument("ConstraintOperator: A0 is not positive definite (lambda_min = " +
                                    std::to_string(lo) + ")");
      }
    }
  }

  Index dim() const noexcept { return n_; }
  Index size() const noexcept { return static_cast<Index>(mats_.size()); }
  const std::vector<SparseSymmetric>& mats() const noexcept { return mats_; }
  const Vector& rhs() const noexcept { return rhs_; }
  const std::optional<Compactifier>& compactifier() const noexcept { return compactifier_; }

  /// The operator with (A0, b0) prepended as constraint 0 and no compactifier.
  ConstraintOperator extended() const {
    if (!compactifier_) throw std::logic_error("ConstraintOperator::extended: no compactifier");
    std::vector<SparseSymmetric> mats;
    mats.reserve(mats_.size() + 1);
    mats.push_back(compactifier_->matrix);
    mats.insert(mats.end(), mats_.begin(), mats_.end());
    Vector b(rhs_.size() + 1);
    b << compactifier_->rhs, rhs_;
    return ConstraintOperator(n_, std::move(mats), std::move(b));
  }

  /// Nonzeros across all constraint matrices (diagnostic only).
  std::size_t nnz() const {
    std::size_t z = compactifier_ ? compactifier_->matrix.nnz() : 0;
    for (const auto& a : mats_) z += a.nnz();
    return z;
  }

  bool operator==(const ConstraintOperator& o) const {
    return n_ == o.n_ && mats_ == o.mats_ && rhs_ == o.rhs_ && compactifier_ == o.compactifier_;
  }

 private:
  Index n_;
  std::vector<SparseSymmetric> mats_;
  Vector rhs_;
  std::optional<Compactifier> compactifier_;
};

/// An n x k factor U of X = U U^T, with an optional cache of the residue and
/// penalty value last computed for it.
class FactoredPoint {
 public:
  struct Cache {
    Vector residue;
    double objective = 0.0;
  };

  FactoredPoint() = default;
  explicit FactoredPoint(Matrix u) : u_(std::move(u)) {
    if (u_.rows() <= 0 || u_.cols() <= 0) throw std::invalid_argument("FactoredPoint: empty factor");
  }

  const Matrix& matrix() const noexcept { return u_; }
  Index rows() const noexcept { return u_.rows(); }
  Index cols() const noexcept { return u_.cols(); }

  void set_matrix(Matrix u) {
    u_ = std::move(u);
    cache_.reset();
  }

  const std::optional<Cache>& cache() const noexcept { return cache_; }
  void set_cache(Cache c) { cache_ = std::move(c); }
  void clear_cache() noexcept { cache_.reset(); }

 private:
  Matrix u_;
  std::optional<Cache> cache_;
};

/// A(X)_i = <A_i, X>.
inline Vector apply_operator(const ConstraintOperator& op, const Matrix& x) {
  if (x.rows() != op.dim() || x.cols() != op.dim()) {
    throw std::invalid_argument("apply_operator: X is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                ", operator side is " + std::to_string(op.dim()));
  }
  Vector out(op.size());
  for (Index i = 0; i < op.size(); ++i) out[i] = op.mats()[static_cast<std::size_t>(i)].inner(x);
  return out;
}

/// A*(y) = sum_i y_i A_i.
inline SparseSymmetric adjoint_operator(const ConstraintOperator& op, const Vector& y) {
  if (y.size() != op.size()) {
    throw std::invalid_argument("adjoint_operator: y has length " + std::to_string(y.size()) + ", operator has " +
                                std::to_string(op.size()) + " constraints");
  }
  SparseSymmetric acc(op.dim());
  for (Index i = 0; i < op.size(); ++i) {
    if (y[i] != 0.0) acc = SparseSymmetric::combine(1.0, acc, y[i], op.mats()[static_cast<std::size_t>(i)]);
  }
  return acc;
}

/// A(U U^T) computed from row products of U.
inline Vector apply_operator_gram(const ConstraintOperator& op, const Matrix& u) {
  Vector out(op.size());
  for (Index i = 0; i < op.size(); ++i) out[i] = op.mats()[static_cast<std::size_t>(i)].inner_gram(u);
  return out;
}

/// r = A(U U^T) - b; with include_compactifier, <A0, U U^T> - b0 is prepended.
inline Vector residue(const ConstraintOperator& op, const Matrix& u, bool include_compactifier) {
  if (u.rows() != op.dim()) {
    throw std::invalid_argument("residue: U has " + std::to_string(u.rows()) + " rows, operator side is " +
                                std::to_string(op.dim()));
  }
  const Vector r = apply_operator_gram(op, u) - op.rhs();
  if (!include_compactifier) return r;
  if (!op.compactifier()) throw std::invalid_argument("residue: compactifier requested but absent");
  Vector out(r.size() + 1);
  out << op.compactifier()->matrix.inner_gram(u) - op.compactifier()->rhs, r;
  return out;
}

inline Vector residue(const ConstraintOperator& op, const FactoredPoint& pt, bool include_compactifier) {
  return residue(op, pt.matrix(), include_compactifier);
}

/// Gram matrix G_ij = <A_i, A_j>.
inline Matrix gram_matrix(const ConstraintOperator& op) {
  const Index m = op.size();
  Matrix g(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i; j < m; ++j) {
      const double v = op.mats()[static_cast<std::size_t>(i)].inner(op.mats()[static_cast<std::size_t>(j)]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

/// ||A|| = max over unit-Frobenius symmetric Y of ||A(Y)||_2, the square root
/// of the top eigenvalue of the Gram matrix. Zero for an empty operator.
inline double operator_norm(const ConstraintOperator& op) {
  if (op.size() == 0) return 0.0;
  const Matrix g = gram_matrix(op);
  const LinearMap apply = [&g](const Vector& x, Vector& y) { y.noalias() = g * x; };
  return std::sqrt(std::max(0.0, psd_max_eigenvalue(apply, g.rows())));
}

/// Numerical rank of the Gram matrix: eigenvalues above tol * largest.
inline int operator_rank(const ConstraintOperator& op, double tol = 1e-9) {
  if (!(tol > 0.0)) throw std::invalid_argument("operator_rank: tol must be positive");
  if (op.size() == 0) return 0;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(gram_matrix(op), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  if (top <= 0.0) return 0;
  return static_cast<int>((es.eigenvalues().array() > tol * top).count());
}

}  // namespace lowrank_sdp
