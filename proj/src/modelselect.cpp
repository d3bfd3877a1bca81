#include "nsdfm/modelselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nsdfm {

namespace {

Matrix standardize_rows(const Matrix& x) {
  Matrix c = x.colwise() - x.rowwise().mean();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const double sd = std::sqrt(c.row(i).squaredNorm() / static_cast<double>(c.cols()));
    if (sd > 0.0) c.row(i) /= sd;
  }
  return c;
}

// Frequency average over [-pi, pi] of each eigenvalue row: the grid holds
// h = 0..M and the spectrum is symmetric in h.
Vector frequency_average(const Matrix& eig) {
  const Eigen::Index M = eig.cols() - 1;
  Vector avg = eig.col(0);
  if (M > 0) avg += 2.0 * eig.rightCols(M).rowwise().sum();
  return avg / static_cast<double>(2 * M + 1);
}

double hl_penalty(Eigen::Index n, Eigen::Index T, int M) {
  const double m = std::min({static_cast<double>(n), static_cast<double>(M) * M,
                             std::sqrt(static_cast<double>(T) / M)});
  return std::log(m) / std::sqrt(m);
}

int argmin_ic(const Vector& log_v, double c, double p) {
  int best = 0;
  double best_val = log_v(0);
  for (Eigen::Index k = 1; k < log_v.size(); ++k) {
    const double val = log_v(k) + static_cast<double>(k) * c * p;
    if (val < best_val) {
      best_val = val;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

int default_spectral_bandwidth(Eigen::Index T) {
  return std::max(1, static_cast<int>(std::floor(0.75 * std::sqrt(static_cast<double>(T)))));
}

SpectralEstimate spectral_density_eigs(const Matrix& dx, int bandwidth, int top_k, Exec exec) {
  if (bandwidth >= dx.cols()) throw SelectionError("spectral_density_eigs: bandwidth must be below T");
  if (bandwidth < 0) throw SelectionError("spectral_density_eigs: negative bandwidth");
  const Matrix z = standardize_rows(dx);
  const auto gammas = autocovariances(z, bandwidth, exec);
  SpectralEstimate est;
  est.bandwidth = bandwidth;
  est.eigenvalues = spectral_eigenvalues(gammas, top_k, exec);
  est.frequencies.resize(bandwidth + 1);
  for (int h = 0; h <= bandwidth; ++h) {
    est.frequencies(h) = 2.0 * std::numbers::pi * h / (2.0 * bandwidth + 1.0);
  }
  est.total_variance = gammas.front().trace();
  return est;
}

namespace {

// Stability scan shared by the spectral criterion: k_hat per subsample and c,
// then the first stable interval whose estimate is below kmax.
CriterionScan stability_scan(const std::vector<Vector>& log_v, const std::vector<double>& penalties,
                             int kmax, const HallinLiskaOptions& opt) {
  CriterionScan scan;
  const std::size_t J = log_v.size();
  for (int s = 0; s <= opt.c_steps; ++s) {
    const double c = opt.c_max * s / opt.c_steps;
    std::vector<int> ks(J);
    double mean = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      ks[j] = argmin_ic(log_v[j], c, penalties[j]);
      mean += ks[j];
    }
    mean /= static_cast<double>(J);
    double var = 0.0;
    for (int k : ks) var += (k - mean) * (k - mean);
    scan.c_grid.push_back(c);
    scan.k_hat.push_back(ks.back());  // last subsample is the full panel
    scan.stability.push_back(var / static_cast<double>(J));
  }

  // Stable intervals: maximal runs with zero variance across subsamples.
  struct Run { std::size_t begin, end; };
  std::vector<Run> runs;
  for (std::size_t s = 0; s < scan.c_grid.size();) {
    if (scan.stability[s] != 0.0) { ++s; continue; }
    std::size_t e = s;
    while (e + 1 < scan.c_grid.size() && scan.stability[e + 1] == 0.0 && scan.k_hat[e + 1] == scan.k_hat[s]) ++e;
    runs.push_back({s, e});
    s = e + 1;
  }
  for (const Run& run : runs) {
    if (scan.k_hat[run.begin] < kmax && run.end > run.begin) {
      scan.chosen = scan.k_hat[run.begin];
      return scan;
    }
  }
  // No stable plateau below kmax: most stable c wins.
  std::size_t best = 0;
  for (std::size_t s = 1; s < scan.c_grid.size(); ++s) {
    if (scan.stability[s] < scan.stability[best] && scan.k_hat[s] < kmax) best = s;
  }
  scan.chosen = scan.k_hat[best];
  scan.warnings.emplace_back("no stable plateau below kmax; using the most stable penalty");
  return scan;
}

}  // namespace

QSelection select_q(const Matrix& dx, int q_max, const HallinLiskaOptions& opt, Exec exec) {
  const Eigen::Index n = dx.rows();
  const Eigen::Index T = dx.cols();
  if (q_max >= n) throw SelectionError("select_q: q_max must be below n");
  const int kmax = std::max<int>(q_max, static_cast<int>(std::min<Eigen::Index>(n - 1, 10)));

  std::vector<Vector> log_v;
  std::vector<double> penalties;
  const int J = std::max(1, opt.subsamples);
  for (int j = 1; j <= J; ++j) {
    const double frac = opt.min_fraction + (1.0 - opt.min_fraction) * (J == 1 ? 1.0 : (j - 1.0) / (J - 1.0));
    const Eigen::Index nj = std::max<Eigen::Index>(kmax + 1, static_cast<Eigen::Index>(std::floor(frac * n)));
    const Eigen::Index tj = static_cast<Eigen::Index>(std::floor(frac * T));
    const int M = default_spectral_bandwidth(tj);
    const SpectralEstimate est = spectral_density_eigs(dx.topLeftCorner(nj, tj), M, static_cast<int>(nj), exec);
    const Vector avg = frequency_average(est.eigenvalues);
    Vector lv(kmax + 1);
    double tail = avg.sum();
    for (int k = 0; k <= kmax; ++k) {
      lv(k) = std::log(std::max(tail, 1e-300) / static_cast<double>(nj));
      tail -= avg(k);
    }
    log_v.push_back(lv);
    penalties.push_back(hl_penalty(nj, tj, M));
  }

  QSelection out;
  out.scan = stability_scan(log_v, penalties, kmax, opt);
  out.q_hat = out.scan.chosen;
  std::size_t idx = 0;
  for (std::size_t s = 0; s < out.scan.k_hat.size(); ++s) {
    if (out.scan.k_hat[s] == out.q_hat && out.scan.stability[s] == 0.0) { idx = s; break; }
  }
  const double c = out.scan.c_grid[idx];
  for (int k = 0; k <= kmax; ++k) out.criterion.push_back(log_v.back()(k) + k * c * penalties.back());
  if (out.q_hat > q_max) {
    out.scan.warnings.push_back("q estimate " + std::to_string(out.q_hat) + " clamped to q_max = " +
                                std::to_string(q_max));
    out.q_hat = q_max;
  }
  return out;
}

TrendSelection select_trend_count(const Matrix& x, int kmax) {
  const Eigen::Index n = x.rows();
  const Eigen::Index T = x.cols();
  if (T < 3) throw SelectionError("select_trend_count: need T >= 3");
  Matrix z = x.colwise() - x.rowwise().mean();
  const Matrix dz = diff_cols(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd d = dz.row(i).array() - dz.row(i).mean();
    const double sd = std::sqrt(d.squaredNorm() / static_cast<double>(d.size()));
    if (sd > 0.0) z.row(i) /= sd;
  }
  const double nt2 = static_cast<double>(n) * static_cast<double>(T) * static_cast<double>(T);
  TrendSelection out;
  out.eigenvalues = sorted_eigen(z * z.transpose() / nt2).values.cwiseMax(0.0);
  kmax = std::clamp<int>(kmax, 0, static_cast<int>(std::min(n, T)) - 1);

  // V(k) = (nT)^{-1} sum of squared residuals after k levels components
  // = T * sum_{j>k} nu_j. Penalty of the integrated-panel criterion with
  // alpha_T = T / (4 log log T).
  const double dn = static_cast<double>(n), dt = static_cast<double>(T);
  Vector v(kmax + 1);
  double tail = out.eigenvalues.sum();
  for (int k = 0; k <= kmax; ++k) {
    v(k) = dt * tail;
    tail -= out.eigenvalues(k);
  }
  const double alpha = dt / (4.0 * std::log(std::log(std::max(dt, 16.0))));
  const double g = (dn + dt) / (dn * dt) * std::log(dn * dt / (dn + dt));
  const double pen = v(kmax) * alpha * g;
  int best = 0;
  for (int k = 0; k <= kmax; ++k) {
    const double ic = v(k) + k * pen;
    out.criterion.push_back(ic);
    if (ic < v(best) + best * pen) best = k;
  }
  out.trend_count = best;
  if (best == kmax && kmax > 0) out.warnings.emplace_back("trend count reached kmax");
  return out;
}

ShareTable explained_variance_table(const Matrix& dx, int kmax, Exec exec) {
  const Eigen::Index n = dx.rows();
  kmax = std::min<int>(kmax, static_cast<int>(n));
  const int M = default_spectral_bandwidth(dx.cols());
  const SpectralEstimate est = spectral_density_eigs(dx, M, static_cast<int>(n), exec);
  const Vector avg = frequency_average(est.eigenvalues);
  const double spec_total = est.total_variance / (2.0 * std::numbers::pi);
  const Matrix z = standardize_rows(dx);
  const Vector cov_eig = sorted_eigen(z * z.transpose() / static_cast<double>(z.cols())).values.cwiseMax(0.0);
  const double cov_total = cov_eig.sum();
  ShareTable table{Vector(kmax), Vector(kmax)};
  double sq = 0.0, sr = 0.0;
  for (int k = 0; k < kmax; ++k) {
    sq += avg(k);
    sr += cov_eig(k);
    table.q_row(k) = std::min(100.0, 100.0 * sq / spec_total);
    table.r_row(k) = std::min(100.0, 100.0 * sr / cov_total);
  }
  return table;
}

RSelection match_r(const ShareTable& table, int q_hat, int r_max, double tol_share) {
  RSelection out;
  out.table = table;
  const int K = static_cast<int>(table.r_row.size());
  r_max = std::min(r_max, K);
  if (q_hat <= 0) {
    out.r_hat = 0;
    return out;
  }
  if (q_hat > static_cast<int>(table.q_row.size())) throw SelectionError("match_r: q_hat beyond the table");
  const double target = table.q_row(q_hat - 1) - tol_share;
  for (int r = 1; r <= r_max; ++r) {
    if (table.r_row(r - 1) >= target) {
      out.r_hat = std::max(r, q_hat);
      return out;
    }
  }
  out.r_hat = r_max;
  out.warnings.push_back("no r <= r_max matches the spectral share; using r_max = " + std::to_string(r_max));
  return out;
}

RSelection select_r(const Matrix& dx, int q_hat, int r_max, double tol_share, Exec exec) {
  const int kmax = std::max(r_max, q_hat);
  return match_r(explained_variance_table(dx, kmax, exec), q_hat, r_max, tol_share);
}

double adf_critical_5pct(Eigen::Index T) {
  const double t = static_cast<double>(T);
  return -2.86154 - 2.8903 / t - 4.234 / (t * t) - 40.040 / (t * t * t);
}

namespace {

struct OlsFit {
  Vector beta;
  double ssr = 0.0;
  double se_first = 0.0;  // standard error of beta(0)
};

OlsFit ols(const Matrix& design, const Vector& y) {
  OlsFit f;
  const Matrix gram = design.transpose() * design;
  Eigen::LDLT<Matrix> ldlt(gram);
  f.beta = ldlt.solve(design.transpose() * y);
  f.ssr = (y - design * f.beta).squaredNorm();
  const double dof = static_cast<double>(design.rows() - design.cols());
  const Matrix inv = ldlt.solve(Matrix::Identity(gram.rows(), gram.cols()));
  f.se_first = std::sqrt(f.ssr / dof * inv(0, 0));
  return f;
}

// Rows: dy_t for t = start..end-1 regressed on y_{t-1}, 1, dy_{t-1..t-p}.
void adf_design(const Vector& y, int p, Eigen::Index start, Matrix& design, Vector& lhs) {
  const Eigen::Index T = y.size();
  const Eigen::Index rows = T - start;
  design.resize(rows, 2 + p);
  lhs.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = start + r;
    lhs(r) = y(t) - y(t - 1);
    design(r, 0) = y(t - 1);
    design(r, 1) = 1.0;
    for (int j = 1; j <= p; ++j) design(r, 1 + j) = y(t - j) - y(t - j - 1);
  }
}

}  // namespace

AdfResult adf_test(const Vector& y, int max_lag) {
  const Eigen::Index T = y.size();
  const int pmax = max_lag >= 0 ? max_lag
                                : static_cast<int>(std::floor(12.0 * std::pow(static_cast<double>(T) / 100.0, 0.25)));
  if (T - pmax - 1 < pmax + 2 + 5) throw SelectionError("adf_test: series too short for lag order " + std::to_string(pmax));

  // Lag order by BIC on the common sample.
  int best = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  Matrix design;
  Vector lhs;
  for (int p = 0; p <= pmax; ++p) {
    adf_design(y, p, pmax + 1, design, lhs);
    const OlsFit f = ols(design, lhs);
    const double nobs = static_cast<double>(lhs.size());
    const double bic = std::log(f.ssr / nobs) + static_cast<double>(design.cols()) * std::log(nobs) / nobs;
    if (bic < best_bic) {
      best_bic = bic;
      best = p;
    }
  }
  adf_design(y, best, best + 1, design, lhs);
  const OlsFit f = ols(design, lhs);
  AdfResult res;
  res.lags = best;
  res.statistic = f.se_first > 0.0 ? f.beta(0) / f.se_first : 0.0;
  res.critical_value = adf_critical_5pct(lhs.size());
  res.reject = res.statistic < res.critical_value;
  return res;
}

std::vector<AdfResult> adf_batch(const Matrix& rows, int max_lag, Exec exec) {
  const Eigen::Index n = rows.rows();
  std::vector<AdfResult> out(static_cast<std::size_t>(n));
  if (exec == Exec::serial) {
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = adf_test(rows.row(i).transpose(), max_lag);
    return out;
  }
  // Exceptions cannot escape an OpenMP region; collect and rethrow.
  std::vector<std::string> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = adf_test(rows.row(i).transpose(), max_lag);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw SelectionError(e);
  }
  return out;
}

RhoClassification classify_idiosyncratic(const Matrix& x, const Matrix& chi_hat, const std::vector<RhoMode>& modes,
                                         Exec exec) {
  if (x.rows() != chi_hat.rows() || x.cols() != chi_hat.cols()) {
    throw SelectionError("classify_idiosyncratic: x and chi_hat differ in shape");
  }
  RhoClassification out;
  out.tests = adf_batch(x - chi_hat, -1, exec);
  out.rho.resize(out.tests.size());
  for (std::size_t i = 0; i < out.tests.size(); ++i) {
    out.rho[i] = out.tests[i].reject ? 0 : 1;
    if (i < modes.size()) {
      if (modes[i] == RhoMode::force_0) out.rho[i] = 0;
      if (modes[i] == RhoMode::force_1) out.rho[i] = 1;
    }
  }
  return out;
}

}  // namespace nsdfm
