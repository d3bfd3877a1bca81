#include "nsdfm/kernels.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace nsdfm {

namespace {

Matrix lag_product(const Matrix& x, int k) {
  const Eigen::Index T = x.cols();
  const Eigen::Index len = T - k;
  if (len <= 0) return Matrix::Zero(x.rows(), x.rows());
  return x.rightCols(len) * x.leftCols(len).transpose() / static_cast<double>(T);
}

Vector spectral_column(const std::vector<Matrix>& gammas, Eigen::Index h, int top_k) {
  const int M = static_cast<int>(gammas.size()) - 1;
  const Eigen::Index n = gammas.front().rows();
  const double w = 2.0 * std::numbers::pi * static_cast<double>(h) / (2.0 * M + 1.0);
  Eigen::MatrixXcd sigma = gammas.front().cast<std::complex<double>>();
  for (int k = 1; k <= M; ++k) {
    const double weight = 1.0 - static_cast<double>(k) / (M + 1.0);
    const std::complex<double> phase = std::polar(weight, -static_cast<double>(k) * w);
    // Gamma_{-k} = Gamma_k'
    sigma += phase * gammas[k].cast<std::complex<double>>() +
             std::conj(phase) * gammas[k].transpose().cast<std::complex<double>>();
  }
  sigma /= 2.0 * std::numbers::pi;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sigma, Eigen::EigenvaluesOnly);
  const Vector ev = solver.eigenvalues().reverse();
  Vector out = Vector::Zero(top_k);
  const Eigen::Index k = std::min<Eigen::Index>(top_k, n);
  out.head(k) = ev.head(k).cwiseMax(0.0);
  return out;
}

}  // namespace

std::vector<Matrix> autocovariances(const Matrix& x, int max_lag, Exec exec) {
  std::vector<Matrix> out(static_cast<std::size_t>(max_lag + 1));
  if (exec == Exec::serial) {
    for (int k = 0; k <= max_lag; ++k) out[k] = lag_product(x, k);
    return out;
  }
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k <= max_lag; ++k) out[k] = lag_product(x, k);
  return out;
}

Matrix spectral_eigenvalues(const std::vector<Matrix>& gammas, int top_k, Exec exec) {
  const int M = static_cast<int>(gammas.size()) - 1;
  Matrix out(top_k, M + 1);
  if (exec == Exec::serial) {
    for (int h = 0; h <= M; ++h) out.col(h) = spectral_column(gammas, h, top_k);
    return out;
  }
#pragma omp parallel for schedule(dynamic)
  for (int h = 0; h <= M; ++h) out.col(h) = spectral_column(gammas, h, top_k);
  return out;
}

RowSolve solve_rows(const Matrix& cross, const Vector& sq, const Matrix& gram_inv, double count, Exec exec) {
  const Eigen::Index n = cross.rows();
  RowSolve out{Matrix(n, cross.cols()), Vector(n)};
  auto row = [&](Eigen::Index i) {
    const Eigen::RowVectorXd b = cross.row(i) * gram_inv;
    out.beta.row(i) = b;
    out.resid(i) = (sq(i) - b.dot(cross.row(i))) / count;
  };
  if (exec == Exec::serial) {
    for (Eigen::Index i = 0; i < n; ++i) row(i);
    return out;
  }
#pragma omp parallel for
  for (Eigen::Index i = 0; i < n; ++i) row(i);
  return out;
}

}  // namespace nsdfm
