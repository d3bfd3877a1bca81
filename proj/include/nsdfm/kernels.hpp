#pragma once

#include "nsdfm/linalg.hpp"

#include <vector>

namespace nsdfm {

/// Execution policy of the data-parallel kernels. `serial` is the reference
/// implementation the OpenMP versions are tested against.
enum class Exec { serial, parallel };

/// Gamma_k = (1/T) sum_t x_{t+k} x_t' for k = 0..max_lag; x (n x T) is
/// used as given (callers demean).
std::vector<Matrix> autocovariances(const Matrix& x, int max_lag, Exec exec = Exec::parallel);

/// Bartlett lag-window spectral density
///   Sigma(w) = (1/2pi) sum_{|k|<=M} (1 - |k|/(M+1)) Gamma_k e^{-ikw}
/// evaluated at w_h = 2 pi h / (2M+1), h = 0..M, with M = gammas.size()-1.
/// Returns the top_k eigenvalues (rows, descending) for each frequency (cols).
Matrix spectral_eigenvalues(const std::vector<Matrix>& gammas, int top_k, Exec exec = Exec::parallel);

/// Rowwise least squares with a shared Gram matrix: row i of the result is
/// cross.row(i) * gram^{-1}, and resid(i) = (sq(i) - beta_i' cross_i) / count,
/// the mean squared residual implied by the normal equations.
struct RowSolve {
  Matrix beta;
  Vector resid;
};

RowSolve solve_rows(const Matrix& cross, const Vector& sq, const Matrix& gram_inv, double count,
                    Exec exec = Exec::parallel);

}  // namespace nsdfm
