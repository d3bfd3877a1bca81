#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace nsdfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order (columns of `vectors` follow the same order).
struct SortedEigen {
  Vector values;
  Matrix vectors;
};

SortedEigen sorted_eigen(const Matrix& sym);

/// Flip each column so that its entry of largest magnitude is positive.
void fix_signs_largest(Matrix& columns);

/// Flip each column so that the entry in `row` is positive (first nonzero
/// row at or after `row` when that entry is exactly zero).
void fix_signs_row(Matrix& columns, Eigen::Index row = 0);

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Moore-Penrose inverse of a symmetric PSD matrix. Eigenvalues below
/// `rel_tol * max_eigenvalue` are treated as zero. The reciprocal condition
/// number of the retained spectrum is written to `rcond` when non-null.
Matrix pinv_psd(const Matrix& a, double rel_tol = 1e-12, double* rcond = nullptr);

/// Symmetric square root factor L with L * L' = a; negative eigenvalues are
/// clamped to zero.
Matrix psd_sqrt(const Matrix& a);

/// Largest principal angle (radians) between the column spaces of a and b.
double max_principal_angle(const Matrix& a, const Matrix& b);

/// Trace R^2 of the multivariate regression of `truth` (k x T) on
/// `estimate` (p x T), both demeaned across time.
double trace_r2(const Matrix& truth, const Matrix& estimate);

/// Numerical rank via singular values relative to the largest one.
Eigen::Index numerical_rank(const Matrix& a, double rel_tol = 1e-10);

/// Sample covariance of the rows of x (k x T), demeaned, divisor T.
Matrix row_covariance(const Matrix& x);

/// First differences along time of a k x T matrix, giving k x (T-1).
Matrix diff_cols(const Matrix& x);

/// Spectral radius of a square matrix.
double spectral_radius(const Matrix& a);

/// Least-squares VAR(p) without intercept fitted to the rows of y (k x T).
struct VarFit {
  std::vector<Matrix> coefficients;  // p matrices, k x k
  Matrix residuals;                  // k x (T - p)
  Matrix residual_cov;               // k x k, divisor T - p
  double companion_radius = 0.0;
};

VarFit fit_var(const Matrix& y, int order);

/// Companion matrix of a VAR given its coefficient matrices.
Matrix companion(const std::vector<Matrix>& coefficients);

}  // namespace nsdfm
