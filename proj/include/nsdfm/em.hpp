#pragma once

#include "nsdfm/kalman.hpp"
#include "nsdfm/kernels.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nsdfm {

class EMError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Groups of series indices that must share one loading row.
struct TieGroups {
  std::vector<std::vector<int>> groups;
};

struct SufficientStats {
  Matrix sxf;  // n x r, sum_t E[(x_it - xi_it) F_t']
  Vector sxx;  // n, sum_t E[(x_it - xi_it)^2]
  Matrix sff;  // r x r, sum_{t=1..T} E[F_t F_t']
  Matrix s11;  // r x r, sum_{t=3..T} E[F_t F_t']
  Matrix s10;  // r x 2r, sum_{t=3..T} E[F_t (F_{t-1}', F_{t-2}')]
  Matrix s00;  // 2r x 2r, sum_{t=3..T} E[alpha_{t-1} alpha_{t-1}'] on the factor block
  int transitions = 0;  // T - 2 terms in the three sums above
  Vector srw;  // n, sum_{t=2..T} E[(xi_t - xi_{t-1})^2] for random-walk series, 0 otherwise
  Vector obs_var;  // observation variances of the parameters the moments came from
  std::vector<int> rho;
  Vector i1_noise;
  int T = 0;
};

struct EStepResult {
  SufficientStats stats;
  double loglik = 0.0;
  FilterOutput filter;
  SmootherOutput smoother;
};

/// Principal-components starting values.
Params init_pca(const Matrix& x, const ModelSpec& spec, const std::vector<int>& rho);

/// Initial state used throughout EM: kappa * I with zero mean. It does not
/// depend on the parameters, so the likelihood surface is the same at
/// every iteration.
InitialState em_initial_state(const StateSpace& ss, double kappa);

EStepResult e_step(const Params& params, const Matrix& x, const ModelSpec& spec);

struct MStepInfo {
  double ridge = 0.0;  // perturbation added to a singular moment matrix, 0 if none
  std::vector<std::string> notes;
};

Params m_step(const SufficientStats& stats, const TieGroups& ties, const ModelSpec& spec,
              MStepInfo* info = nullptr, Exec exec = Exec::parallel);

struct EMState {
  Params params;
  std::vector<double> loglik_path;  // l(theta_0), l(theta_1), ...
  int k = 0;                        // M-steps performed
  bool converged = false;
  double delta_l = 0.0;
  double ridge_max = 0.0;
  int backtracks = 0;  // E-steps spent on step-halving
  std::vector<std::string> warnings;
};

struct EMOptions {
  TieGroups ties;
  bool normalize = true;  // Lambda = sqrt(n) V and E[F] sign rule on the fitted chi
  Exec exec = Exec::parallel;
  int max_halvings = 30;  // step-halving attempts when an update lowers the likelihood
};

struct EMResult {
  EMState state;
  FactorEstimates estimates;
  FilterOutput filter;
  SmootherOutput smoother;
  StateSpace state_space;
};

/// Runs EM from init_pca until the symmetric relative likelihood change
/// drops below spec.em_tol (after at least spec.em_min_iter updates). An
/// update that lowers the likelihood is halved towards the current values;
/// if no step helps the run stops there.
EMResult run_em(const Matrix& x, const ModelSpec& spec, const std::vector<int>& rho, const EMOptions& opt = {});

/// Same, from explicit starting values.
EMResult run_em_from(const Matrix& x, const ModelSpec& spec, Params start, const EMOptions& opt = {});

/// from + step * (to - from) for Lambda, A1, A2, R; H from the blended HH'.
Params blend_params(const Params& from, const Params& to, double step, int q);

/// Applies F -> K F and the implied changes to Lambda, A1, A2, H.
Params rotate_params(const Params& p, const Matrix& k);

/// Rotation matrix K such that Lambda K^{-1} = sqrt(n) V, V the leading r
/// eigenvectors of the covariance of d chi, d chi computed from `factors`.
Matrix normalization_rotation(const Matrix& lambda, const Matrix& factors);

FactorEstimates make_estimates(const Params& p, const StateSpace& ss, const Matrix& x,
                               const FilterOutput& f, const SmootherOutput& s);

}  // namespace nsdfm
