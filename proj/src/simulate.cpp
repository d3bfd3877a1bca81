#include "nsdfm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/KroneckerProduct>

namespace nsdfm {

void DGPConfig::validate() const {
  if (n <= 0 || T <= 1) throw std::invalid_argument("DGPConfig: n and T must be positive, T > 1");
  if (q <= 0 || r < q || r % q != 0) throw std::invalid_argument("DGPConfig: r must be a multiple of q");
  if (!(0 < d && d < q)) throw std::invalid_argument("DGPConfig: need 0 < d < q");
  if (r > n) throw std::invalid_argument("DGPConfig: r must not exceed n");
  if (!(snr > 0.0)) throw std::invalid_argument("DGPConfig: snr must be positive");
  if (!(std::abs(cycle_radius) < 1.0)) throw std::invalid_argument("DGPConfig: |cycle_radius| must be < 1");
  if (!(std::abs(idio_ar) < 1.0)) throw std::invalid_argument("DGPConfig: |idio_ar| must be < 1");
  if (!(i1_share >= 0.0 && i1_share <= 1.0)) throw std::invalid_argument("DGPConfig: i1_share in [0,1]");
}

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Matrix out(rows, cols);
  // Fill column by column so results do not depend on Eigen's evaluation order.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = z(rng);
  }
  return out;
}

Matrix random_orthogonal(Eigen::Index k, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(k, k, rng));
  Matrix qm = qr.householderQ() * Matrix::Identity(k, k);
  const Vector diag = Matrix(qr.matrixQR().triangularView<Eigen::Upper>()).diagonal();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (diag(j) < 0.0) qm.col(j) *= -1.0;
  }
  return qm;
}

double variance(const Eigen::RowVectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size());
}

}  // namespace

SimulatedPanel gen_dfm(const DGPConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.n, T = cfg.T, r = cfg.r, q = cfg.q, d = cfg.d;
  const int ntr = q - d;
  const int lags = r / q - 1;
  const int total = T + lags;

  SimulatedPanel out;
  GroundTruth& g = out.truth;

  const Matrix rot = random_orthogonal(q, rng);
  g.psi = rot.leftCols(ntr);
  g.psi_perp = rot.rightCols(d);
  const Matrix phi = cfg.cycle_radius * Matrix::Identity(d, d);

  // Shocks and dynamic factors over total periods plus the cycle burn-in.
  const Matrix u = gaussian(q, total + cfg.burn, rng);
  Matrix tau = Matrix::Zero(ntr, total);
  Matrix cyc = Matrix::Zero(d, total);
  Vector c = Vector::Zero(d);
  Vector level = Vector::Zero(ntr);
  for (int t = 0; t < total + cfg.burn; ++t) {
    c = phi * c + u.col(t).tail(d);
    if (t < cfg.burn) continue;
    level += u.col(t).head(ntr);
    tau.col(t - cfg.burn) = level;
    cyc.col(t - cfg.burn) = c;
  }
  const Matrix f_all = g.psi * tau + g.psi_perp * cyc;  // q x total

  Matrix stacked(r, T);
  for (int l = 0; l <= lags; ++l) stacked.middleRows(l * q, q) = f_all.middleCols(lags - l, T);

  Matrix lam_raw = gaussian(n, r, rng, cfg.loading_scale);
  if (lags > 0) lam_raw.rightCols(r - q) *= cfg.lag_loading_scale;

  g.k = Matrix::Identity(r, r);
  if (cfg.random_k) {
    do {
      g.k = gaussian(r, r, rng);
    } while (std::abs(g.k.determinant()) < 0.1);
  }
  const Matrix k_inv = g.k.inverse();
  g.factors = g.k * stacked;
  g.lambda = lam_raw * k_inv;
  g.dynamic = f_all.rightCols(T);
  g.trends = tau.rightCols(T);
  g.cycle_states = cyc.rightCols(T);
  g.shocks = u.rightCols(T);
  g.chi = lam_raw * stacked;

  // Long-run loading b_i(1) times the trend path.
  Matrix b1 = Matrix::Zero(n, q);
  for (int l = 0; l <= lags; ++l) b1 += lam_raw.middleCols(l * q, q);
  g.cycles = g.chi - b1 * g.psi * g.trends;

  // Idiosyncratic components.
  const int n1 = static_cast<int>(std::lround(cfg.i1_share * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  g.rho.assign(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < n1; ++k) g.rho[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;

  const Matrix e = gaussian(n, T, rng);
  g.xi.resize(n, T);
  Vector innov_var(n);
  for (int i = 0; i < n; ++i) {
    const double dchi = variance(diff_cols(g.chi.row(i)).row(0));
    const double target = dchi / cfg.snr;  // var of d xi
    const bool rw = g.rho[static_cast<std::size_t>(i)] == 1;
    const double a = rw ? 1.0 : cfg.idio_ar;
    const double s2 = rw ? target : target * (1.0 + a) / 2.0;
    innov_var(i) = s2;
    const double sd = std::sqrt(s2);
    double prev = rw ? 0.0 : e(i, 0) * sd / std::sqrt(1.0 - a * a);
    g.xi(i, 0) = prev;
    for (int t = 1; t < T; ++t) {
      prev = a * prev + sd * e(i, t);
      g.xi(i, t) = prev;
    }
  }
  out.x = g.chi + g.xi;

  // Exact state-space parameters of F.
  Params& p = g.params;
  Matrix a1 = Matrix::Zero(r, r);
  a1.topLeftCorner(q, q) = g.psi * g.psi.transpose() + g.psi_perp * phi * g.psi_perp.transpose();
  if (lags > 0) a1.bottomLeftCorner(r - q, r - q).setIdentity();
  Matrix h = Matrix::Zero(r, q);
  h.topRows(q) = rot;
  p.lambda = g.lambda;
  p.a1 = g.k * a1 * k_inv;
  p.a2 = Matrix::Zero(r, r);
  p.h = g.k * h;
  p.rho = g.rho;
  p.r_diag.resize(n);
  p.i1_noise = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    const bool rw = g.rho[static_cast<std::size_t>(i)] == 1;
    const double a = cfg.idio_ar;
    p.r_diag(i) = rw ? innov_var(i) : innov_var(i) / (1.0 - a * a);
    p.i1_noise(i) = 1e-4 * variance(diff_cols(out.x.row(i)).row(0));
  }
  return out;
}

namespace {

struct Joint {
  Vector mu_a;   // Tm
  Matrix s_aa;   // Tm x Tm
  Vector mu_x;   // Tn
  Matrix s_ax;   // Tm x Tn
  Matrix s_xx;   // Tn x Tn
};

Joint assemble(const StateSpace& ss, Eigen::Index T, const InitialState& init) {
  const Eigen::Index m = ss.dim();
  const Eigen::Index n = ss.n();
  if (T * m > 2000) throw OracleError("oracle: T*m exceeds 2000");
  Joint j;
  j.mu_a.resize(T * m);
  j.s_aa.resize(T * m, T * m);

  std::vector<Matrix> var(static_cast<std::size_t>(T));
  Vector mean = init.mean;
  Matrix v = init.cov;
  for (Eigen::Index t = 0; t < T; ++t) {
    mean = ss.transition * mean;
    v = ss.transition * v * ss.transition.transpose() + ss.state_cov;
    j.mu_a.segment(t * m, m) = mean;
    var[static_cast<std::size_t>(t)] = v;
  }
  // Cov(alpha_t, alpha_s) = T^{t-s} V_s for s <= t.
  for (Eigen::Index s = 0; s < T; ++s) {
    Matrix block = var[static_cast<std::size_t>(s)];
    for (Eigen::Index t = s; t < T; ++t) {
      j.s_aa.block(t * m, s * m, m, m) = block;
      j.s_aa.block(s * m, t * m, m, m) = block.transpose();
      block = ss.transition * block;
    }
  }
  const Matrix big_z = Eigen::kroneckerProduct(Matrix::Identity(T, T), ss.design).eval();
  j.mu_x = big_z * j.mu_a;
  j.s_ax = j.s_aa * big_z.transpose();
  j.s_xx = big_z * j.s_ax;
  for (Eigen::Index t = 0; t < T; ++t) {
    j.s_xx.block(t * n, t * n, n, n).diagonal() += ss.obs_var;
  }
  j.s_xx = symmetrize(j.s_xx);
  return j;
}

Vector stack(const Matrix& x, Eigen::Index T) {
  Vector out(x.rows() * T);
  for (Eigen::Index t = 0; t < T; ++t) out.segment(t * x.rows(), x.rows()) = x.col(t);
  return out;
}

}  // namespace

OracleMoments oracle_conditional_moments(const StateSpace& ss, const Matrix& x, const InitialState& init) {
  const Eigen::Index T = x.cols();
  const Eigen::Index m = ss.dim();
  const Joint j = assemble(ss, T, init);
  Eigen::LLT<Matrix> llt(j.s_xx);
  if (llt.info() != Eigen::Success) throw OracleError("oracle: joint covariance is not positive definite");

  const Vector dev = stack(x, T) - j.mu_x;
  const Vector w = llt.solve(dev);
  const Vector post_mean = j.mu_a + j.s_ax * w;
  const Matrix post_cov = symmetrize(j.s_aa - j.s_ax * llt.solve(j.s_ax.transpose()));

  OracleMoments out;
  out.mean.resize(m, T);
  out.cov.resize(static_cast<std::size_t>(T));
  out.lag1.assign(static_cast<std::size_t>(T), Matrix::Zero(m, m));
  for (Eigen::Index t = 0; t < T; ++t) {
    out.mean.col(t) = post_mean.segment(t * m, m);
    out.cov[static_cast<std::size_t>(t)] = post_cov.block(t * m, t * m, m, m);
    if (t > 0) out.lag1[static_cast<std::size_t>(t)] = post_cov.block(t * m, (t - 1) * m, m, m);
  }
  const Matrix lower = llt.matrixL();
  const double logdet = 2.0 * lower.diagonal().array().log().sum();
  const double nt = static_cast<double>(dev.size());
  out.loglik = -0.5 * (nt * std::log(2.0 * std::numbers::pi) + logdet + dev.dot(w));
  return out;
}

OracleFiltered oracle_filtered_moments(const StateSpace& ss, const Matrix& x, const InitialState& init) {
  const Eigen::Index T = x.cols();
  const Eigen::Index m = ss.dim();
  const Eigen::Index n = ss.n();
  const Joint j = assemble(ss, T, init);
  const Vector xs = stack(x, T);

  OracleFiltered out;
  out.mean.resize(m, T);
  out.cov.resize(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index k = (t + 1) * n;
    Eigen::LLT<Matrix> llt(j.s_xx.topLeftCorner(k, k));
    if (llt.info() != Eigen::Success) throw OracleError("oracle: prefix covariance is not positive definite");
    const Matrix cross = j.s_ax.block(t * m, 0, m, k);
    out.mean.col(t) = j.mu_a.segment(t * m, m) + cross * llt.solve(xs.head(k) - j.mu_x.head(k));
    out.cov[static_cast<std::size_t>(t)] =
        symmetrize(j.s_aa.block(t * m, t * m, m, m) - cross * llt.solve(cross.transpose()));
  }
  return out;
}

StateSpace random_state_space(int n, int m, std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  StateSpace ss;
  Matrix t = gaussian(m, m, rng);
  const double rho = spectral_radius(t);
  ss.transition = t * (radius * 0.5 * unif(rng) / std::max(rho, 1e-12));
  ss.design = gaussian(n, m, rng);
  const Matrix b = gaussian(m, m, rng, 0.7);
  ss.state_cov = symmetrize(b * b.transpose() + 0.1 * Matrix::Identity(m, m));
  ss.obs_var.resize(n);
  for (int i = 0; i < n; ++i) ss.obs_var(i) = unif(rng);
  ss.factors = m / 2;
  return ss;
}

}  // namespace nsdfm
