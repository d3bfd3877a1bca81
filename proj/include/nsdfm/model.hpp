#pragma once

#include "nsdfm/linalg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nsdfm {

/// Error raised when an object does not match its declared dimensions or
/// otherwise cannot be used. `field()` names the offending member.
class ModelError : public std::runtime_error {
 public:
  ModelError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Dimensions of the factor model plus estimation settings.
struct ModelSpec {
  int n = 0;          // series
  int T = 0;          // periods
  int r = 0;          // static factors
  int q = 0;          // dynamic shocks
  int d = 0;          // cointegration relations among the dynamic factors
  int var_order = 2;  // fixed

  double diffuse_scale = 1e7;
  double em_tol = 1e-6;
  int em_max_iter = 500;
  int em_min_iter = 2;
  double loglik_slack = 1e-8;
  double i1_floor_frac = 1e-4;

  int trend_count() const { return q - d; }

  /// Hard violations (empty when the spec is usable).
  std::vector<std::string> violations() const;
  /// Soft warnings, e.g. r != 2q.
  std::vector<std::string> warnings() const;
};

/// Parameters of x_t = Lambda F_t + xi_t, F_t = A1 F_{t-1} + A2 F_{t-2} + H u_t.
///
/// `r_diag` holds the idiosyncratic innovation variances. For rho_i = 0 it is
/// the measurement noise variance; for rho_i = 1 it is the random-walk
/// innovation variance of the extra latent state, and the measurement noise
/// of that series is the fixed floor `i1_noise(i)`.
struct Params {
  Matrix lambda;  // n x r
  Matrix a1;      // r x r
  Matrix a2;      // r x r
  Matrix h;       // r x q
  Vector r_diag;  // n
  std::vector<int> rho;  // n flags in {0, 1}
  Vector i1_noise;       // n, used where rho_i = 1

  Eigen::Index n() const { return lambda.rows(); }
  Eigen::Index factors() const { return lambda.cols(); }
  Eigen::Index shocks() const { return h.cols(); }
  int n_i1() const;
  /// Measurement noise variance of each series.
  Vector observation_variance() const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Lists every violated invariant of `params` against `spec`; never throws.
ValidationReport validate_params(const Params& params, const ModelSpec& spec);

/// Linear Gaussian state space alpha_t = T alpha_{t-1} + w_t, x_t = Z alpha_t + e_t
/// with state layout [F_t; F_{t-1}; xi^(1)_t].
struct StateSpace {
  Matrix transition;  // m x m
  Matrix design;      // n x m
  Matrix state_cov;   // m x m
  Vector obs_var;     // n (diagonal measurement covariance)
  int factors = 0;    // r
  std::vector<int> i1_series;  // series index of each xi^(1) state

  Eigen::Index dim() const { return transition.rows(); }
  Eigen::Index n() const { return design.rows(); }
};

StateSpace build_state_space(const Params& params, const ModelSpec& spec);

/// Final smoothed quantities of a fitted model.
struct FactorEstimates {
  Matrix states;                // m x T smoothed state means
  std::vector<Matrix> state_cov;   // T smoothed covariances
  std::vector<Matrix> lag1_cov;    // T, Cov(alpha_t, alpha_{t-1} | X); entry 0 is zero
  Matrix factors;               // r x T, the F_t block of `states`
  Matrix chi;                   // n x T common components
  Matrix xi;                    // n x T idiosyncratic components
  double loglik = 0.0;
};

}  // namespace nsdfm
