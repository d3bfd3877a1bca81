#include "nsdfm/trendcycle.hpp"

#include <cmath>
#include <numbers>

namespace nsdfm {

Matrix longrun_cov(const Matrix& f) {
  const double t = static_cast<double>(f.cols());
  return symmetrize(f * f.transpose()) / (t * t);
}

TrendExtraction extract_trends(const Matrix& f, int trend_count) {
  const Eigen::Index r = f.rows();
  if (trend_count < 1 || trend_count >= r) throw TrendCycleError("extract_trends: need 1 <= q-d < r");
  TrendExtraction out;
  const SortedEigen e = sorted_eigen(longrun_cov(f));
  out.eigenvalues = e.values;
  Matrix vecs = e.vectors;
  fix_signs_largest(vecs);
  out.phi1 = vecs.leftCols(trend_count);
  out.phi0 = vecs.rightCols(r - trend_count);
  out.trends = out.phi1.transpose() * f;
  const double gap = e.values(trend_count - 1) - e.values(trend_count);
  if (gap < 1e-12 * std::max(1.0, std::abs(e.values(0)))) {
    out.warnings.emplace_back("eigengap below 1e-12 at the trend count; trend rotation is not determined");
  }
  return out;
}

CycleExtraction extract_cycles(const Matrix& f, const Matrix& phi0, int d, int var_order) {
  const Eigen::Index k = phi0.cols();
  if (d < 1 || d > k) throw TrendCycleError("extract_cycles: need 1 <= d <= r - (q - d)");
  CycleExtraction out;
  out.g = phi0.transpose() * f;
  out.var = fit_var(out.g, var_order);
  if (out.var.companion_radius >= 1.0) {
    out.warnings.push_back("VAR for G has companion spectral radius " + std::to_string(out.var.companion_radius));
  }
  const SortedEigen e = sorted_eigen(out.var.residual_cov);
  out.hmat = e.vectors.leftCols(d);
  fix_signs_largest(out.hmat);
  out.cycles = out.hmat.transpose() * out.g;
  out.residual_cycles = out.g - out.hmat * out.cycles;
  return out;
}

Matrix TCDecomposition::reconstruct() const {
  return phi1 * trends + phi0 * hmat * cycles + phi0 * residual_cycles;
}

TCDecomposition decompose_factors(const Matrix& f, int trend_count, int d, int var_order) {
  TrendExtraction tr = extract_trends(f, trend_count);
  CycleExtraction cy = extract_cycles(f, tr.phi0, d, var_order);
  TCDecomposition tc;
  tc.phi1 = std::move(tr.phi1);
  tc.phi0 = std::move(tr.phi0);
  tc.trends = std::move(tr.trends);
  tc.g = std::move(cy.g);
  tc.hmat = std::move(cy.hmat);
  tc.cycles = std::move(cy.cycles);
  tc.residual_cycles = std::move(cy.residual_cycles);
  tc.var = std::move(cy.var);
  tc.warnings = std::move(tr.warnings);
  tc.warnings.insert(tc.warnings.end(), cy.warnings.begin(), cy.warnings.end());
  return tc;
}

Vector VariableComponents::total() const {
  return deterministic + trend + cycle + residual_cycle + idiosyncratic;
}

VariableComponents decompose_variable(const Eigen::RowVectorXd& lambda_row, const TCDecomposition& tc,
                                      const Eigen::RowVectorXd& xi_row, const DetrendResult& det) {
  VariableComponents out;
  const Eigen::Index T = tc.trends.cols();
  out.deterministic = det.path(T);
  out.trend = ((lambda_row * tc.phi1) * tc.trends).transpose();
  out.cycle = ((lambda_row * tc.phi0 * tc.hmat) * tc.cycles).transpose();
  out.residual_cycle = ((lambda_row * tc.phi0) * tc.residual_cycles).transpose();
  out.idiosyncratic = xi_row.transpose();
  return out;
}

Vector smoothed_spectrum(const Eigen::RowVectorXd& y, const Vector& freqs, int bandwidth) {
  const Eigen::Index T = y.size();
  const int M = bandwidth > 0 ? bandwidth : static_cast<int>(std::floor(std::sqrt(static_cast<double>(T))));
  const Eigen::RowVectorXd c = y.array() - y.mean();
  Vector gamma(M + 1);
  for (int k = 0; k <= M; ++k) {
    gamma(k) = k < T ? c.head(T - k).dot(c.tail(T - k)) / static_cast<double>(T) : 0.0;
  }
  Vector out(freqs.size());
  for (Eigen::Index h = 0; h < freqs.size(); ++h) {
    double s = gamma(0);
    for (int k = 1; k <= M; ++k) s += 2.0 * (1.0 - static_cast<double>(k) / (M + 1)) * gamma(k) * std::cos(k * freqs(h));
    out(h) = s / (2.0 * std::numbers::pi);
  }
  return out;
}

}  // namespace nsdfm
