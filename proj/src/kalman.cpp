#include "nsdfm/kalman.hpp"

#include <cmath>
#include <numbers>

namespace nsdfm {

Matrix stationary_covariance(const Matrix& a, const Matrix& q) {
  Matrix p = q;
  Matrix power = a;
  for (int k = 0; k < 200; ++k) {
    const Matrix next = p + power * p * power.transpose();
    const double change = (next - p).norm();
    p = symmetrize(next);
    power = power * power;
    if (change <= 1e-15 * std::max(1.0, p.norm())) break;
  }
  return p;
}

InitialState diffuse_initial_state(const StateSpace& ss, double kappa) {
  const Eigen::Index m = ss.dim();
  const Eigen::Index f = 2 * ss.factors;
  InitialState init;
  init.mean = Vector::Zero(m);
  init.cov = kappa * Matrix::Identity(m, m);
  const Matrix block = ss.transition.topLeftCorner(f, f);
  if (spectral_radius(block) < 1.0 - 1e-6) {
    init.cov.topLeftCorner(f, f) = stationary_covariance(block, ss.state_cov.topLeftCorner(f, f));
  }
  return init;
}

namespace {

// Measurement update shared by the filter and the Riccati iteration.
struct Update {
  Matrix filt_cov;
  Eigen::LLT<Matrix> inner;  // of I + L' M L
  bool ok = false;
};

Update measurement_update(const Matrix& pred_cov, const Matrix& info) {
  Update up;
  const Eigen::Index m = pred_cov.rows();
  const Matrix root = psd_sqrt(pred_cov);
  Matrix w = Matrix::Identity(m, m) + root.transpose() * info * root;
  up.inner.compute(symmetrize(w));
  up.ok = up.inner.info() == Eigen::Success && w.allFinite();
  if (!up.ok) return up;
  up.filt_cov = symmetrize(root * up.inner.solve(root.transpose()));
  return up;
}

}  // namespace

FilterOutput kf_forward(const StateSpace& ss, const Matrix& x, const InitialState& init) {
  const Eigen::Index m = ss.dim();
  const Eigen::Index n = ss.n();
  const Eigen::Index T = x.cols();
  if (x.rows() != n) throw ModelError("X", "row count differs from the observation dimension");
  if (!x.allFinite()) throw ModelError("X", "data contain non-finite values");
  if ((ss.obs_var.array() <= 0.0).any()) throw ModelError("obs_var", "must be strictly positive");

  const Vector inv_d = ss.obs_var.cwiseInverse();
  const Matrix zt_dinv = ss.design.transpose() * inv_d.asDiagonal();
  const double logdet_d = ss.obs_var.array().log().sum();

  FilterOutput out;
  out.info = symmetrize(zt_dinv * ss.design);
  out.pred_mean.resize(m, T);
  out.filt_mean.resize(m, T);
  out.innovations.resize(n, T);
  out.scores.resize(m, T);
  out.innovation_logdet.resize(T);
  out.pred_cov.reserve(static_cast<std::size_t>(T));
  out.filt_cov.reserve(static_cast<std::size_t>(T));

  Vector a = ss.transition * init.mean;
  Matrix p = symmetrize(ss.transition * init.cov * ss.transition.transpose() + ss.state_cov);
  const double log2pi = std::log(2.0 * std::numbers::pi);

  for (Eigen::Index t = 0; t < T; ++t) {
    out.pred_mean.col(t) = a;
    out.pred_cov.push_back(p);

    const Vector v = x.col(t) - ss.design * a;
    const Vector b = zt_dinv * v;
    Update up = measurement_update(p, out.info);
    if (!up.ok) throw KalmanError(t, "innovation covariance is not finite positive definite");

    const Vector correction = up.filt_cov * b;
    const Vector af = a + correction;
    const double logdet = logdet_d + 2.0 * up.inner.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double quad = v.dot(inv_d.asDiagonal() * v) - b.dot(correction);
    if (!std::isfinite(logdet) || !std::isfinite(quad)) {
      throw KalmanError(t, "innovation covariance is not finite");
    }

    out.innovations.col(t) = v;
    out.scores.col(t) = b - out.info * correction;
    out.innovation_logdet(t) = logdet;
    out.filt_mean.col(t) = af;
    out.loglik += -0.5 * (static_cast<double>(n) * log2pi + logdet + quad);

    a = ss.transition * af;
    p = symmetrize(ss.transition * up.filt_cov * ss.transition.transpose() + ss.state_cov);
    out.filt_cov.push_back(std::move(up.filt_cov));
  }
  return out;
}

namespace {

// Inversion-free backward pass. With L_t = T (I - P_{t|t} M) and the
// accumulated r_t, N_t of the future observations:
//   alpha_{t|T} = alpha_{t|t} + P_{t|t} T' r_t
//   P_{t|T}     = P_{t|t} - P_{t|t} T' N_t T P_{t|t}
//   r_{t-1} = Z'S^{-1}v_t + L_t' r_t,  N_{t-1} = Z'S^{-1}Z + L_t' N_t L_t
// which is the standard r/N recursion rewritten through P_{t|t}.
SmootherOutput smooth_dk(const FilterOutput& f, const StateSpace& ss) {
  const Eigen::Index m = ss.dim();
  const Eigen::Index T = f.filt_mean.cols();
  const Matrix& tr = ss.transition;
  const Matrix& info = f.info;
  const Matrix eye = Matrix::Identity(m, m);

  SmootherOutput out;
  out.mean.resize(m, T);
  out.cov.assign(static_cast<std::size_t>(T), Matrix());
  out.lag1.assign(static_cast<std::size_t>(T), Matrix::Zero(m, m));

  Vector r = Vector::Zero(m);
  Matrix nmat = Matrix::Zero(m, m);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& pf = f.filt_cov[ts];
    const Matrix pft = pf * tr.transpose();
    out.mean.col(t) = f.filt_mean.col(t) + pft * r;
    out.cov[ts] = symmetrize(pf - pft * nmat * pft.transpose());
    if (t + 1 < T) {
      const Matrix& pnext = f.pred_cov[ts + 1];
      out.lag1[ts + 1] = (eye - pnext * nmat) * pft.transpose();
    }
    const Matrix lt = tr * (eye - pf * info);
    r = f.scores.col(t) + lt.transpose() * r;
    nmat = symmetrize(info - info * pf * info + lt.transpose() * nmat * lt);
  }
  return out;
}

SmootherOutput smooth_classic(const FilterOutput& f, const StateSpace& ss) {
  const Eigen::Index m = ss.dim();
  const Eigen::Index T = f.filt_mean.cols();
  const Matrix& tr = ss.transition;

  SmootherOutput out;
  out.mean.resize(m, T);
  out.cov.assign(static_cast<std::size_t>(T), Matrix());
  out.lag1.assign(static_cast<std::size_t>(T), Matrix::Zero(m, m));
  out.mean.col(T - 1) = f.filt_mean.col(T - 1);
  out.cov[static_cast<std::size_t>(T - 1)] = f.filt_cov.back();

  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& pnext = f.pred_cov[ts + 1];
    double rcond = 0.0;
    Matrix inv = pinv_psd(pnext, 1e-12, &rcond);
    if (rcond >= 1e-10) {
      inv = pnext.ldlt().solve(Matrix::Identity(m, m));
    } else {
      out.warnings.push_back("t=" + std::to_string(t + 1) +
                             ": near-singular P_{t|t-1}, pseudo-inverse used (rcond=" +
                             std::to_string(rcond) + ")");
    }
    const Matrix gain = f.filt_cov[ts] * tr.transpose() * inv;
    out.mean.col(t) = f.filt_mean.col(t) + gain * (out.mean.col(t + 1) - f.pred_mean.col(t + 1));
    out.cov[ts] = symmetrize(f.filt_cov[ts] + gain * (out.cov[ts + 1] - pnext) * gain.transpose());
    out.lag1[ts + 1] = out.cov[ts + 1] * gain.transpose();
  }
  return out;
}

}  // namespace

SmootherOutput ks_backward(const FilterOutput& filter, const StateSpace& ss, SmootherVariant variant) {
  if (filter.filt_mean.cols() == 0) return {};
  return variant == SmootherVariant::dk_no_inverse ? smooth_dk(filter, ss) : smooth_classic(filter, ss);
}

RiccatiResult riccati_steady_state(const StateSpace& ss, double tol, int max_iter, const Matrix* start) {
  const Vector inv_d = ss.obs_var.cwiseInverse();
  const Matrix info = symmetrize(ss.design.transpose() * inv_d.asDiagonal() * ss.design);
  const Eigen::Index r = ss.factors;

  RiccatiResult res;
  Matrix p = start != nullptr ? *start : ss.state_cov;
  double residual = 0.0;
  for (int k = 1; k <= max_iter; ++k) {
    Update up = measurement_update(p, info);
    if (!up.ok) throw RiccatiError(residual, "riccati: inner factorization failed");
    Matrix next = symmetrize(ss.transition * up.filt_cov * ss.transition.transpose() + ss.state_cov);
    residual = (next - p).norm();
    res.trace_path.push_back(next.topLeftCorner(r, r).trace());
    const bool done = residual < tol * std::max(1.0, p.norm());
    p = std::move(next);
    if (done) {
      res.pred_cov = p;
      res.filt_cov = measurement_update(p, info).filt_cov;
      res.iterations = k;
      res.residual = residual;
      return res;
    }
  }
  throw RiccatiError(residual, "riccati: max_iter exceeded, last residual " + std::to_string(residual));
}

MseTrace mse_traces(const FilterOutput& filter, const SmootherOutput& smoother, int factors) {
  const auto T = static_cast<Eigen::Index>(filter.pred_cov.size());
  MseTrace tr{Vector(T), Vector(T), Vector(T)};
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    tr.predicted(t) = filter.pred_cov[ts].topLeftCorner(factors, factors).trace();
    tr.filtered(t) = filter.filt_cov[ts].topLeftCorner(factors, factors).trace();
    tr.smoothed(t) = smoother.cov[ts].topLeftCorner(factors, factors).trace();
  }
  return tr;
}

Eigen::Index burn_in_index(const FilterOutput& filter, const Matrix& p_star, double rel_tol) {
  const auto T = static_cast<Eigen::Index>(filter.pred_cov.size());
  const double scale = std::max(p_star.norm(), 1e-300);
  Eigen::Index first = T;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const double dev = (filter.pred_cov[static_cast<std::size_t>(t)] - p_star).norm() / scale;
    if (dev >= rel_tol) break;
    first = t;
  }
  return first;
}

}  // namespace nsdfm
