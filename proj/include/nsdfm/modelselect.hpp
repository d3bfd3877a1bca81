#pragma once

#include "nsdfm/kernels.hpp"
#include "nsdfm/preprocess.hpp"

#include <string>
#include <vector>

namespace nsdfm {

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpectralEstimate {
  Vector frequencies;  // w_h = 2 pi h / (2M+1), h = 0..M
  Matrix eigenvalues;  // top_k x (M+1), descending per column
  int bandwidth = 0;
  double total_variance = 0.0;  // trace of the lag-0 covariance of the input
};

/// Standardizes each row of dX to unit variance, then computes the Bartlett
/// lag-window spectral eigenvalues with bandwidth M (M < T).
SpectralEstimate spectral_density_eigs(const Matrix& dx, int bandwidth, int top_k, Exec exec = Exec::parallel);

int default_spectral_bandwidth(Eigen::Index T);  // floor(0.75 sqrt(T))

struct CriterionScan {
  std::vector<double> c_grid;
  std::vector<int> k_hat;       // estimate for each c on the full sample
  std::vector<double> stability;  // variance of the estimate across subsamples
  int chosen = 0;
  std::vector<std::string> warnings;
};

struct QSelection {
  int q_hat = 0;
  std::vector<double> criterion;  // IC(k), k = 0..kmax, full sample at the chosen c
  CriterionScan scan;
};

struct HallinLiskaOptions {
  int subsamples = 7;
  double min_fraction = 0.7;
  double c_max = 3.0;
  int c_steps = 300;
};

/// Hallin-Liska information criterion on Bartlett spectral eigenvalues of dX
/// with nested subsamples (n_j, T_j) and a stability scan over c.
QSelection select_q(const Matrix& dx, int q_max, const HallinLiskaOptions& opt = {}, Exec exec = Exec::parallel);

struct TrendSelection {
  int trend_count = 0;
  Vector eigenvalues;              // of (n T^2)^{-1} sum x_t x_t'
  std::vector<double> criterion;   // IC(k), k = 0..kmax
  std::vector<std::string> warnings;
};

/// Number of common trends from the eigenvalues of the levels second moment
/// (n T^2)^{-1} sum_t x_t x_t' of the detrended panel, series scaled by the
/// standard deviation of their differences.
TrendSelection select_trend_count(const Matrix& x, int kmax);

struct ShareTable {
  Vector q_row;  // cumulative % of spectral eigenvalue mass, k = 1..K
  Vector r_row;  // cumulative % of covariance eigenvalue mass, k = 1..K
};

ShareTable explained_variance_table(const Matrix& dx, int kmax, Exec exec = Exec::parallel);

struct RSelection {
  int r_hat = 0;
  ShareTable table;
  std::vector<std::string> warnings;
};

/// Smallest r whose covariance share reaches the q_hat spectral share minus
/// tol_share percentage points.
RSelection match_r(const ShareTable& table, int q_hat, int r_max, double tol_share = 1.0);
RSelection select_r(const Matrix& dx, int q_hat, int r_max, double tol_share = 1.0, Exec exec = Exec::parallel);

struct AdfResult {
  double statistic = 0.0;
  double critical_value = 0.0;
  int lags = 0;
  bool reject = false;  // unit root rejected at the 5% level
};

/// ADF regression with constant; lag order chosen by BIC up to
/// floor(12 (T/100)^{1/4}) unless max_lag >= 0.
AdfResult adf_test(const Vector& y, int max_lag = -1);

/// 5% constant-case critical value for sample size T (response surface).
double adf_critical_5pct(Eigen::Index T);

std::vector<AdfResult> adf_batch(const Matrix& rows, int max_lag = -1, Exec exec = Exec::parallel);

struct RhoClassification {
  std::vector<int> rho;
  std::vector<AdfResult> tests;
};

/// ADF on xi_hat = x - chi_hat per series: fail to reject -> rho = 1;
/// metadata overrides applied last.
RhoClassification classify_idiosyncratic(const Matrix& x, const Matrix& chi_hat,
                                         const std::vector<RhoMode>& modes = {}, Exec exec = Exec::parallel);

struct SelectionReport {
  int q_hat = 0;
  int trend_count_hat = 0;
  int r_hat = 0;
  int d_hat = 0;
  ShareTable table;
  std::vector<int> rho;
  std::vector<AdfResult> adf;
  std::vector<double> q_criterion;
  Vector trend_eigenvalues;
  std::vector<std::string> warnings;
};

}  // namespace nsdfm
