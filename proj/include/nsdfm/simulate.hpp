#pragma once

#include "nsdfm/kalman.hpp"
#include "nsdfm/model.hpp"

#include <cstdint>
#include <random>

namespace nsdfm {

struct DGPConfig {
  int n = 50;
  int T = 150;
  int r = 4;  // q * (s + 1)
  int q = 2;
  int d = 1;  // q - d random-walk trends, d cycles
  double loading_scale = 1.0;
  double lag_loading_scale = 1.0;  // multiplies the loadings of f_{t-1}, ..., f_{t-s}
  double cycle_radius = 0.7;
  double idio_ar = 0.3;     // AR(1) coefficient of the stationary idiosyncratics
  double i1_share = 0.0;    // fraction of series with random-walk idiosyncratics
  double snr = 1.0;         // var(d chi_i) / var(d xi_i)
  bool random_k = false;    // draw a random invertible K instead of I
  int burn = 100;           // discarded start-up periods of the cycle
  std::uint64_t seed = 1;

  void validate() const;
};

struct GroundTruth {
  Matrix factors;        // r x T, F_t
  Matrix dynamic;        // q x T, f_t
  Matrix trends;         // (q-d) x T, tau_t
  Matrix cycle_states;   // d x T
  Matrix shocks;         // q x T
  Matrix lambda;         // n x r
  Matrix psi;            // q x (q-d), orthonormal
  Matrix psi_perp;       // q x d
  Matrix k;              // r x r
  Matrix chi;            // n x T
  Matrix xi;             // n x T
  Matrix cycles;         // n x T, chi_i minus b_i(1)' Psi tau_t
  std::vector<int> rho;
  Params params;         // VAR(2) parameters of F (A2 = 0), R from xi innovations
};

struct SimulatedPanel {
  Matrix x;  // n x T
  GroundTruth truth;
};

SimulatedPanel gen_dfm(const DGPConfig& cfg);

/// Dense joint-Gaussian conditioning of (alpha_1..alpha_T, x_1..x_T).
struct OracleMoments {
  Matrix mean;                // m x T
  std::vector<Matrix> cov;    // P_{t|T}
  std::vector<Matrix> lag1;   // Cov(alpha_t, alpha_{t-1} | X), entry 0 zero
  double loglik = 0.0;        // log density of X
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

OracleMoments oracle_conditional_moments(const StateSpace& ss, const Matrix& x, const InitialState& init);

/// Filtered moments alpha_{t|t}, P_{t|t} by conditioning on prefixes x_1..x_t.
struct OracleFiltered {
  Matrix mean;
  std::vector<Matrix> cov;
};

OracleFiltered oracle_filtered_moments(const StateSpace& ss, const Matrix& x, const InitialState& init);

/// Random stable state space of small dimension for oracle tests; Q is full
/// rank with probability one.
StateSpace random_state_space(int n, int m, std::mt19937_64& rng, double radius = 0.95);

}  // namespace nsdfm
