#pragma once

#include "nsdfm/linalg.hpp"
#include "nsdfm/preprocess.hpp"

#include <string>
#include <vector>

namespace nsdfm {

class TrendCycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// S = T^{-2} sum_t F_t F_t'.
Matrix longrun_cov(const Matrix& f);

struct TrendExtraction {
  Matrix phi1;     // r x k
  Matrix phi0;     // r x (r-k), remaining eigenvectors of S
  Matrix trends;   // k x T
  Vector eigenvalues;
  std::vector<std::string> warnings;
};

TrendExtraction extract_trends(const Matrix& f, int trend_count);

struct CycleExtraction {
  Matrix g;                // (r-k) x T
  Matrix hmat;             // (r-k) x d
  Matrix cycles;           // d x T
  Matrix residual_cycles;  // (r-k) x T, G - H C
  VarFit var;
  std::vector<std::string> warnings;
};

CycleExtraction extract_cycles(const Matrix& f, const Matrix& phi0, int d, int var_order = 2);

struct TCDecomposition {
  Matrix phi1, phi0, trends, g, hmat, cycles, residual_cycles;
  VarFit var;
  std::vector<std::string> warnings;

  /// Phi1 T + Phi0 H C + Phi0 (G - H C).
  Matrix reconstruct() const;
};

TCDecomposition decompose_factors(const Matrix& f, int trend_count, int d, int var_order = 2);

struct VariableComponents {
  Vector deterministic;
  Vector trend;
  Vector cycle;
  Vector residual_cycle;
  Vector idiosyncratic;

  Vector total() const;
};

/// Splits y_i = D_i + lambda' Phi1 T + lambda' Phi0 H C + lambda' Phi0 (G - H C) + xi_i.
VariableComponents decompose_variable(const Eigen::RowVectorXd& lambda_row, const TCDecomposition& tc,
                                      const Eigen::RowVectorXd& xi_row, const DetrendResult& det);

/// Bartlett lag-window spectral density of a univariate series at the given
/// frequencies; bandwidth <= 0 means floor(sqrt(T)).
Vector smoothed_spectrum(const Eigen::RowVectorXd& y, const Vector& freqs, int bandwidth = 0);

}  // namespace nsdfm
