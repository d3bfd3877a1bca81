#pragma once

#include "nsdfm/model.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nsdfm {

class KalmanError : public std::runtime_error {
 public:
  KalmanError(Eigen::Index t, const std::string& what)
      : std::runtime_error("t=" + std::to_string(t) + ": " + what), t_(t) {}
  Eigen::Index t() const noexcept { return t_; }

 private:
  Eigen::Index t_;
};

/// Mean and covariance of alpha_0 given no data. The first filter step
/// predicts alpha_1 = T alpha_0 + w_1 from it.
struct InitialState {
  Vector mean;
  Matrix cov;
};

/// Large-kappa diffuse prior: kappa * I on nonstationary blocks. When the
/// factor companion block is stable its covariance is the stationary
/// Lyapunov solution instead.
InitialState diffuse_initial_state(const StateSpace& ss, double kappa);

/// Solves P = A P A' + Q for stable A by doubling.
Matrix stationary_covariance(const Matrix& a, const Matrix& q);

enum class SmootherVariant { classic_pinv, dk_no_inverse };

struct FilterOutput {
  Matrix pred_mean;               // m x T, alpha_{t|t-1}
  std::vector<Matrix> pred_cov;   // P_{t|t-1}
  Matrix filt_mean;               // m x T, alpha_{t|t}
  std::vector<Matrix> filt_cov;   // P_{t|t}
  Matrix innovations;             // n x T
  Matrix scores;                  // m x T, Z' S_t^{-1} v_t
  Vector innovation_logdet;       // log det S_t
  Matrix info;                    // Z' D^{-1} Z, constant in t
  double loglik = 0.0;
};

/// Forward Kalman filter. The innovation covariance S_t = Z P Z' + D is
/// never formed: with D diagonal every quantity is obtained from
/// Z' D^{-1} Z and an m x m Cholesky factorization (Woodbury/Sylvester).
FilterOutput kf_forward(const StateSpace& ss, const Matrix& x, const InitialState& init);

struct SmootherOutput {
  Matrix mean;                  // m x T, alpha_{t|T}
  std::vector<Matrix> cov;      // P_{t|T}
  std::vector<Matrix> lag1;     // Cov(alpha_t, alpha_{t-1} | X); lag1[0] is zero
  std::vector<std::string> warnings;
};

SmootherOutput ks_backward(const FilterOutput& filter, const StateSpace& ss,
                           SmootherVariant variant = SmootherVariant::dk_no_inverse);

struct RiccatiResult {
  Matrix pred_cov;   // steady-state P_{t|t-1}
  Matrix filt_cov;   // steady-state P_{t|t}
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> trace_path;  // tr of the factor block of P_k per iteration
};

class RiccatiError : public std::runtime_error {
 public:
  RiccatiError(double residual, const std::string& what)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Iterates the Riccati difference equation from `start` (default Q) until
/// ||P_{k+1} - P_k||_F < tol * max(1, ||P_k||_F).
RiccatiResult riccati_steady_state(const StateSpace& ss, double tol, int max_iter,
                                   const Matrix* start = nullptr);

/// Traces of the F_t block of the predicted, filtered and smoothed MSEs.
struct MseTrace {
  Vector predicted;
  Vector filtered;
  Vector smoothed;
};

MseTrace mse_traces(const FilterOutput& filter, const SmootherOutput& smoother, int factors);

/// First t from which ||P_{s|s-1} - P*||_F / ||P*||_F < rel_tol for all s >= t.
/// Returns T when the tolerance is never met for the remaining sample.
Eigen::Index burn_in_index(const FilterOutput& filter, const Matrix& p_star, double rel_tol = 1e-6);

}  // namespace nsdfm
