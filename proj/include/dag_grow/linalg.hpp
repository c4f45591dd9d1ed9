#pragma once

// Dense kernels shared by the projection and the new-neuron solver. All work
// is in double precision.

#include "dag_grow/netdag.hpp"

namespace daggrow {

/// Appends a constant-1 column (bias channel).
Matrix with_bias_column(const Matrix& b);

/// E[x x^T] over rows: X^T X / n.
Matrix second_moment(const Matrix& x);
/// E[x y^T] over rows: X^T Y / n.
Matrix cross_moment(const Matrix& x, const Matrix& y);

/// Eigendecomposition of a regularized second-moment matrix S + r I, where the
/// ridge is relative: r = relative_ridge * trace(S) / dim(S).
///
/// Directions whose regularized eigenvalue is numerically zero are dropped, so
/// with relative_ridge = 0 solve() returns the minimum-norm least-squares
/// solution (pseudo-inverse) instead of failing on rank-deficient S.
class CovarianceFactor {
 public:
  CovarianceFactor() = default;
  CovarianceFactor(const Matrix& s, double relative_ridge);

  Eigen::Index dim() const { return eigenvalues_.size(); }
  double ridge() const { return ridge_; }
  /// Number of retained directions.
  Eigen::Index rank() const { return rank_; }

  /// (S + r I)^+ rhs
  Matrix solve(const Matrix& rhs) const;
  /// (S + r I)^{+1/2}, symmetric.
  Matrix inverse_sqrt() const;

 private:
  Matrix eigenvectors_;
  Vector eigenvalues_;  ///< regularized; zero for dropped directions
  Vector inv_;          ///< 1 / eigenvalue or 0
  double ridge_ = 0.0;
  Eigen::Index rank_ = 0;
};

/// Ridge least squares min_W mean |W x_i - y_i|^2 over rows of (x, y), with x
/// already carrying a bias column. Returns W (y.cols x x.cols).
Matrix ridge_least_squares(const Matrix& x, const Matrix& y, double relative_ridge);

}  // namespace daggrow
