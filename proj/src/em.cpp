#include "nsdfm/em.hpp"

#include <cmath>
#include <limits>

namespace nsdfm {

namespace {

double row_variance(const Eigen::RowVectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size());
}

Matrix scaled_eigvecs(const Matrix& sym, int k) {
  const SortedEigen e = sorted_eigen(sym);
  Matrix v = e.vectors.leftCols(k);
  fix_signs_largest(v);
  return v * e.values.head(k).cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Inverse of a symmetric PSD moment matrix; adds a ridge when it is
// numerically singular and reports the size of the perturbation.
Matrix robust_inverse(const Matrix& a, double* ridge) {
  double rcond = 0.0;
  pinv_psd(a, 1e-14, &rcond);
  Matrix b = symmetrize(a);
  double added = 0.0;
  if (!(rcond > 1e-12)) {
    added = 1e-10 * std::max(b.trace() / static_cast<double>(b.rows()), 1e-300);
    b.diagonal().array() += added;
  }
  if (ridge != nullptr) *ridge = std::max(*ridge, added);
  return b.ldlt().solve(Matrix::Identity(b.rows(), b.cols()));
}

}  // namespace

Params init_pca(const Matrix& x, const ModelSpec& spec, const std::vector<int>& rho) {
  const Eigen::Index n = x.rows();
  const Eigen::Index T = x.cols();
  const int r = spec.r;
  if (!x.allFinite()) throw EMError("init_pca: data contain non-finite values");
  if (T <= r + spec.var_order + 1) throw EMError("init_pca: T too small for r and the VAR order");
  if (static_cast<Eigen::Index>(rho.size()) != n) throw ModelError("rho", "length differs from n");

  const Matrix dx = diff_cols(x);
  const SortedEigen e = sorted_eigen(row_covariance(dx));
  Matrix v = e.vectors.leftCols(r);
  fix_signs_row(v, 0);
  const double sqn = std::sqrt(static_cast<double>(n));

  Params p;
  p.lambda = sqn * v;
  const Matrix f = v.transpose() * x / sqn;  // integrated PC scores, x_0 = 0

  const VarFit var = fit_var(f, 2);
  p.a1 = var.coefficients[0];
  p.a2 = var.coefficients[1];
  p.h = scaled_eigvecs(var.residual_cov, spec.q);
  p.rho = rho;

  const Matrix resid = x - p.lambda * f;
  p.r_diag.resize(n);
  p.i1_noise.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dvar = row_variance(dx.row(i));
    p.i1_noise(i) = spec.i1_floor_frac * std::max(dvar, 1e-300);
    const double var_i = rho[static_cast<std::size_t>(i)] == 1 ? row_variance(diff_cols(resid.row(i)).row(0))
                                                              : row_variance(resid.row(i));
    p.r_diag(i) = std::max(var_i, 1e-8 * std::max(dvar, 1e-300));
  }
  return p;
}

InitialState em_initial_state(const StateSpace& ss, double kappa) {
  return {Vector::Zero(ss.dim()), kappa * Matrix::Identity(ss.dim(), ss.dim())};
}

EStepResult e_step(const Params& params, const Matrix& x, const ModelSpec& spec) {
  const StateSpace ss = build_state_space(params, spec);
  EStepResult out;
  out.filter = kf_forward(ss, x, em_initial_state(ss, spec.diffuse_scale));
  out.smoother = ks_backward(out.filter, ss, SmootherVariant::dk_no_inverse);
  out.loglik = out.filter.loglik;

  const Eigen::Index n = x.rows();
  const Eigen::Index T = x.cols();
  const Eigen::Index r = spec.r;
  const Matrix& a = out.smoother.mean;

  SufficientStats& st = out.stats;
  st.T = static_cast<int>(T);
  st.rho = params.rho;
  st.i1_noise = params.i1_noise;
  st.obs_var = ss.obs_var;

  // x minus the expected I(1) idiosyncratic states.
  Matrix xc = x;
  for (std::size_t k = 0; k < ss.i1_series.size(); ++k) {
    xc.row(ss.i1_series[k]) -= a.row(2 * r + static_cast<Eigen::Index>(k));
  }
  const Matrix fhat = a.topRows(r);
  st.sxf = xc * fhat.transpose();
  st.sxx = xc.rowwise().squaredNorm();
  st.sff = fhat * fhat.transpose();
  st.srw = Vector::Zero(n);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix& p = out.smoother.cov[static_cast<std::size_t>(t)];
    st.sff += p.topLeftCorner(r, r);
    for (std::size_t k = 0; k < ss.i1_series.size(); ++k) {
      const Eigen::Index s = 2 * r + static_cast<Eigen::Index>(k);
      const int i = ss.i1_series[k];
      st.sxf.row(i) -= p.block(s, 0, 1, r);
      st.sxx(i) += p(s, s);
    }
  }

  // VAR moments start at the third period: the first state carries the
  // presample lag, whose smoothed moments are dominated by the prior.
  st.s11 = Matrix::Zero(r, r);
  st.s10 = Matrix::Zero(r, 2 * r);
  st.s00 = Matrix::Zero(2 * r, 2 * r);
  st.transitions = static_cast<int>(std::max<Eigen::Index>(T - 2, 0));
  for (Eigen::Index t = 1; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& p = out.smoother.cov[ts];
    const Matrix& pp = out.smoother.cov[ts - 1];
    const Matrix& lag = out.smoother.lag1[ts];
    if (t >= 2) {
      const Vector ft = a.col(t).head(r);
      const Vector prev = a.col(t - 1).head(2 * r);
      st.s11 += ft * ft.transpose() + p.topLeftCorner(r, r);
      st.s10 += ft * prev.transpose() + lag.topLeftCorner(r, 2 * r);
      st.s00 += prev * prev.transpose() + pp.topLeftCorner(2 * r, 2 * r);
    }
    for (std::size_t k = 0; k < ss.i1_series.size(); ++k) {
      const Eigen::Index s = 2 * r + static_cast<Eigen::Index>(k);
      const double dm = a(s, t) - a(s, t - 1);
      st.srw(ss.i1_series[k]) += dm * dm + p(s, s) + pp(s, s) - 2.0 * lag(s, s);
    }
  }
  return out;
}

Params m_step(const SufficientStats& st, const TieGroups& ties, const ModelSpec& spec, MStepInfo* info, Exec exec) {
  const Eigen::Index n = st.sxf.rows();
  const Eigen::Index r = spec.r;
  const double T = static_cast<double>(st.T);
  double ridge = 0.0;

  Params p;
  p.rho = st.rho;
  p.i1_noise = st.i1_noise;

  const Matrix sff_inv = robust_inverse(st.sff, &ridge);
  RowSolve rows = solve_rows(st.sxf, st.sxx, sff_inv, T, exec);

  // Tied rows: inverse-variance weighted pooled normal equations, solved
  // once and copied so members are bitwise identical.
  for (const auto& group : ties.groups) {
    if (group.size() < 2) continue;
    Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(r);
    double wsum = 0.0;
    for (int i : group) {
      const double w = 1.0 / st.obs_var(i);
      pooled += w * st.sxf.row(i);
      wsum += w;
    }
    const Eigen::RowVectorXd shared = (pooled / wsum) * sff_inv;
    for (int i : group) {
      rows.beta.row(i) = shared;
      const double quad = shared * st.sff * shared.transpose();
      rows.resid(i) = (st.sxx(i) - 2.0 * shared.dot(st.sxf.row(i)) + quad) / T;
    }
  }
  p.lambda = rows.beta;

  p.r_diag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double floor = 1e-10 * std::max(st.sxx(i) / T, 1e-300);
    const double value = st.rho[static_cast<std::size_t>(i)] == 1 ? st.srw(i) / (T - 1.0) : rows.resid(i);
    p.r_diag(i) = std::max(value, floor);
  }

  const Matrix s00_inv = robust_inverse(st.s00, &ridge);
  const Matrix a = st.s10 * s00_inv;
  p.a1 = a.leftCols(r);
  p.a2 = a.rightCols(r);
  const Matrix sigma = symmetrize(st.s11 - a * st.s10.transpose()) / static_cast<double>(st.transitions);
  p.h = scaled_eigvecs(sigma, spec.q);

  if (info != nullptr) {
    info->ridge = ridge;
    if (ridge > 0.0) info->notes.push_back("ridge " + std::to_string(ridge) + " added to a singular moment matrix");
  }
  return p;
}

Params blend_params(const Params& from, const Params& to, double step, int q) {
  Params out = to;
  out.lambda = from.lambda + step * (to.lambda - from.lambda);
  out.a1 = from.a1 + step * (to.a1 - from.a1);
  out.a2 = from.a2 + step * (to.a2 - from.a2);
  out.r_diag = from.r_diag + step * (to.r_diag - from.r_diag);
  const Matrix sigma = (1.0 - step) * from.h * from.h.transpose() + step * to.h * to.h.transpose();
  out.h = scaled_eigvecs(sigma, q);
  return out;
}

Params rotate_params(const Params& p, const Matrix& k) {
  const Matrix k_inv = k.inverse();
  Params out = p;
  out.lambda = p.lambda * k_inv;
  out.a1 = k * p.a1 * k_inv;
  out.a2 = k * p.a2 * k_inv;
  out.h = k * p.h;
  return out;
}

Matrix normalization_rotation(const Matrix& lambda, const Matrix& factors) {
  const Eigen::Index n = lambda.rows();
  const Eigen::Index r = lambda.cols();
  Eigen::HouseholderQR<Matrix> qr(lambda);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  const Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix c = row_covariance(diff_cols(factors));
  const SortedEigen e = sorted_eigen(rr * c * rr.transpose());
  Matrix v = q * e.vectors;  // leading r eigenvectors of cov(d chi)
  fix_signs_row(v, 0);
  const Matrix u = q.transpose() * v;  // r x r orthogonal
  return u.transpose() * rr / std::sqrt(static_cast<double>(n));
}

FactorEstimates make_estimates(const Params& p, const StateSpace&, const Matrix& x, const FilterOutput& f,
                               const SmootherOutput& s) {
  FactorEstimates est;
  est.states = s.mean;
  est.state_cov = s.cov;
  est.lag1_cov = s.lag1;
  est.factors = s.mean.topRows(p.factors());
  est.chi = p.lambda * est.factors;
  est.xi = x - est.chi;
  est.loglik = f.loglik;
  return est;
}

EMResult run_em_from(const Matrix& x, const ModelSpec& spec, Params start, const EMOptions& opt) {
  for (const auto& v : spec.violations()) throw ModelError("spec", v);
  EMResult res;
  EMState& st = res.state;
  st.params = std::move(start);

  EStepResult e = e_step(st.params, x, spec);
  st.loglik_path.push_back(e.loglik);
  for (int k = 1; k <= spec.em_max_iter; ++k) {
    MStepInfo info;
    Params next = m_step(e.stats, opt.ties, spec, &info, opt.exec);
    st.ridge_max = std::max(st.ridge_max, info.ridge);
    EStepResult e_next = e_step(next, x, spec);
    const double prev = st.loglik_path.back();
    if (!std::isfinite(e_next.loglik)) throw EMError("EM: non-finite log-likelihood at iteration " + std::to_string(k));
    // The rank-q truncation of Sigma makes the closed-form update inexact;
    // fall back to the segment between the current and the updated values.
    bool stalled = false;
    if (e_next.loglik < prev - spec.loglik_slack * std::abs(prev)) {
      stalled = true;
      double step = 1.0;
      for (int h = 0; h < opt.max_halvings && stalled; ++h) {
        step *= 0.5;
        Params trial = blend_params(st.params, next, step, spec.q);
        EStepResult e_trial = e_step(trial, x, spec);
        ++st.backtracks;
        if (e_trial.loglik >= prev) {
          next = std::move(trial);
          e_next = std::move(e_trial);
          stalled = false;
        }
      }
      if (stalled) {
        st.warnings.push_back("no ascent step found at iteration " + std::to_string(k) + "; stopping");
      }
    }
    if (stalled) {
      st.k = k;
      st.delta_l = 0.0;
      st.converged = k >= spec.em_min_iter;
      break;
    }
    const double cur = e_next.loglik;
    if (cur < prev - spec.loglik_slack * std::abs(prev)) {
      throw EMError("EM: log-likelihood decreased at iteration " + std::to_string(k) + " (" + std::to_string(prev) +
                    " -> " + std::to_string(cur) + ")");
    }
    st.loglik_path.push_back(cur);
    st.params = std::move(next);
    e = std::move(e_next);
    st.k = k;
    st.delta_l = std::abs(cur - prev) / (std::abs(cur) + std::abs(prev));
    if (st.delta_l < spec.em_tol && k >= spec.em_min_iter) {
      st.converged = true;
      break;
    }
  }
  if (!st.converged) st.warnings.push_back("EM stopped at em_max_iter without meeting the tolerance");

  if (opt.normalize) {
    const Matrix k = normalization_rotation(st.params.lambda, e.smoother.mean.topRows(spec.r));
    st.params = rotate_params(st.params, k);
    e = e_step(st.params, x, spec);
  }
  res.state_space = build_state_space(st.params, spec);
  res.estimates = make_estimates(st.params, res.state_space, x, e.filter, e.smoother);
  res.filter = std::move(e.filter);
  res.smoother = std::move(e.smoother);
  return res;
}

EMResult run_em(const Matrix& x, const ModelSpec& spec, const std::vector<int>& rho, const EMOptions& opt) {
  return run_em_from(x, spec, init_pca(x, spec, rho), opt);
}

}  // namespace nsdfm
