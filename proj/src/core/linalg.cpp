#include "dag_grow/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "dag_grow/error.hpp"

namespace daggrow {

Matrix with_bias_column(const Matrix& b) {
  Matrix out(b.rows(), b.cols() + 1);
  out.leftCols(b.cols()) = b;
  out.col(b.cols()).setOnes();
  return out;
}

Matrix second_moment(const Matrix& x) {
  if (x.rows() == 0) throw UsageError("second moment of an empty batch");
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  Matrix full = s.selfadjointView<Eigen::Lower>();
  return full / static_cast<double>(x.rows());
}

Matrix cross_moment(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw UsageError("cross moment of batches with different sizes");
  if (x.rows() == 0) throw UsageError("cross moment of an empty batch");
  return (x.transpose() * y) / static_cast<double>(x.rows());
}

CovarianceFactor::CovarianceFactor(const Matrix& s, double relative_ridge) {
  if (s.rows() != s.cols()) throw UsageError("covariance must be square");
  if (relative_ridge < 0.0) throw UsageError("ridge must be non-negative");
  if (!s.allFinite()) throw NumericError("non-finite covariance matrix");
  const Eigen::Index p = s.rows();
  ridge_ = p > 0 ? relative_ridge * s.trace() / static_cast<double>(p) : 0.0;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition did not converge");
  eigenvectors_ = eig.eigenvectors();
  eigenvalues_ = eig.eigenvalues().array() + ridge_;
  const double top = p > 0 ? std::max(eigenvalues_.maxCoeff(), 0.0) : 0.0;
  // Eigenvalues of an exactly singular S come back as O(p * eps * |S|) noise.
  const double cutoff = 16.0 * top * static_cast<double>(std::max<Eigen::Index>(p, 1)) *
                        std::numeric_limits<double>::epsilon();
  inv_.resize(p);
  rank_ = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (eigenvalues_(i) > cutoff && eigenvalues_(i) > 0.0) {
      inv_(i) = 1.0 / eigenvalues_(i);
      ++rank_;
    } else {
      eigenvalues_(i) = 0.0;
      inv_(i) = 0.0;
    }
  }
}

Matrix CovarianceFactor::solve(const Matrix& rhs) const {
  if (rhs.rows() != dim()) throw UsageError("right-hand side has the wrong row count");
  Matrix projected = eigenvectors_.transpose() * rhs;
  projected = inv_.asDiagonal() * projected;
  return eigenvectors_ * projected;
}

Matrix CovarianceFactor::inverse_sqrt() const {
  Vector root = inv_.cwiseSqrt();
  return eigenvectors_ * root.asDiagonal() * eigenvectors_.transpose();
}

Matrix ridge_least_squares(const Matrix& x, const Matrix& y, double relative_ridge) {
  CovarianceFactor factor(second_moment(x), relative_ridge);
  return factor.solve(cross_moment(x, y)).transpose();
}

}  // namespace daggrow
