#include "nsdfm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nsdfm {

SortedEigen sorted_eigen(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(sym));
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("sorted_eigen: eigen-decomposition failed");
  }
  SortedEigen out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

void fix_signs_largest(Matrix& columns) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Eigen::Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < 0.0) columns.col(j) *= -1.0;
  }
}

void fix_signs_row(Matrix& columns, Eigen::Index row) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    for (Eigen::Index i = row; i < columns.rows(); ++i) {
      if (columns(i, j) != 0.0) {
        if (columns(i, j) < 0.0) columns.col(j) *= -1.0;
        break;
      }
    }
  }
}

Matrix pinv_psd(const Matrix& a, double rel_tol, double* rcond) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
  const Vector& ev = solver.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (top > 0.0 && ev(i) > rel_tol * top) inv(i) = 1.0 / ev(i);
  }
  if (rcond != nullptr) *rcond = top > 0.0 ? std::max(ev.minCoeff(), 0.0) / top : 0.0;
  return solver.eigenvectors() * inv.asDiagonal() * solver.eigenvectors().transpose();
}

Matrix psd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
  Vector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal();
}

namespace {

Matrix orthonormal_basis(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Eigen::Index rank = std::max<Eigen::Index>(1, numerical_rank(a));
  return svd.matrixU().leftCols(rank);
}

}  // namespace

double max_principal_angle(const Matrix& a, const Matrix& b) {
  const Matrix qa = orthonormal_basis(a);
  const Matrix qb = orthonormal_basis(b);
  if (qa.cols() != qb.cols()) return M_PI / 2.0;
  Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
  const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  if (smallest < M_SQRT1_2) return std::acos(smallest);
  // acos loses half the digits near 1; use the sine of the residual instead.
  const Matrix resid = qb - qa * (qa.transpose() * qb);
  Eigen::JacobiSVD<Matrix> rs(resid);
  return std::asin(std::clamp(rs.singularValues()(0), 0.0, 1.0));
}

double trace_r2(const Matrix& truth, const Matrix& estimate) {
  const Matrix y = truth.colwise() - truth.rowwise().mean();
  const Matrix x = estimate.colwise() - estimate.rowwise().mean();
  const Matrix xx = x * x.transpose();
  const Matrix beta = (xx.ldlt().solve(x * y.transpose())).transpose();
  const Matrix fitted = beta * x;
  return (fitted * fitted.transpose()).trace() / (y * y.transpose()).trace();
}

Eigen::Index numerical_rank(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

Matrix row_covariance(const Matrix& x) {
  const Matrix c = x.colwise() - x.rowwise().mean();
  return c * c.transpose() / static_cast<double>(x.cols());
}

Matrix diff_cols(const Matrix& x) {
  if (x.cols() < 2) return Matrix(x.rows(), 0);
  return x.rightCols(x.cols() - 1) - x.leftCols(x.cols() - 1);
}

double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(a, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix companion(const std::vector<Matrix>& coefficients) {
  const Eigen::Index k = coefficients.front().rows();
  const Eigen::Index p = static_cast<Eigen::Index>(coefficients.size());
  Matrix c = Matrix::Zero(k * p, k * p);
  for (Eigen::Index l = 0; l < p; ++l) c.block(0, l * k, k, k) = coefficients[l];
  if (p > 1) c.block(k, 0, k * (p - 1), k * (p - 1)).setIdentity();
  return c;
}

VarFit fit_var(const Matrix& y, int order) {
  const Eigen::Index k = y.rows();
  const Eigen::Index T = y.cols();
  if (order < 1 || T <= order + k * order) {
    throw std::invalid_argument("fit_var: too few observations for VAR order");
  }
  const Eigen::Index n_obs = T - order;
  Matrix lhs = y.rightCols(n_obs);
  Matrix design(k * order, n_obs);
  for (int l = 1; l <= order; ++l) {
    design.block((l - 1) * k, 0, k, n_obs) = y.middleCols(order - l, n_obs);
  }
  const Matrix gram = design * design.transpose();
  const Matrix cross = lhs * design.transpose();
  Matrix beta = gram.ldlt().solve(cross.transpose()).transpose();
  VarFit fit;
  for (int l = 0; l < order; ++l) fit.coefficients.push_back(beta.block(0, l * k, k, k));
  fit.residuals = lhs - beta * design;
  fit.residual_cov = fit.residuals * fit.residuals.transpose() / static_cast<double>(n_obs);
  fit.companion_radius = spectral_radius(companion(fit.coefficients));
  return fit;
}

}  // namespace nsdfm
