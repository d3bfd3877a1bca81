#include <gtest/gtest.h>

#include "nsdfm/modelselect.hpp"
#include "nsdfm/simulate.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numbers>

using namespace nsdfm;
using testutil::randn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix ar1_rows(Eigen::Index n, Eigen::Index T, double phi, std::mt19937_64& rng) {
  Matrix x = randn(n, T, rng);
  for (Eigen::Index t = 1; t < T; ++t) x.col(t) += phi * x.col(t - 1);
  return x;
}

}  // namespace

TEST(SpectralEigs, WhiteNoiseIsFlat) {
  std::mt19937_64 rng(1);
  const int n = 10;
  const Matrix dx = randn(n, 2000, rng);
  const SpectralEstimate est = spectral_density_eigs(dx, 20, n);
  const double target = 1.0 / (2.0 * std::numbers::pi);
  for (Eigen::Index h = 0; h < est.eigenvalues.cols(); ++h) {
    EXPECT_NEAR(est.eigenvalues.col(h).mean(), target, 0.1 * target) << "h=" << h;
  }
  EXPECT_EQ(est.frequencies.size(), 21);
  EXPECT_NEAR(est.frequencies(20), 2.0 * std::numbers::pi * 20 / 41.0, 1e-15);
}

TEST(SpectralEigs, SortedAndNonnegative) {
  std::mt19937_64 rng(2);
  const SpectralEstimate est = spectral_density_eigs(randn(8, 120, rng), 8, 8);
  for (Eigen::Index h = 0; h < est.eigenvalues.cols(); ++h) {
    for (Eigen::Index k = 0; k + 1 < 8; ++k) EXPECT_GE(est.eigenvalues(k, h), est.eigenvalues(k + 1, h));
    EXPECT_GE(est.eigenvalues(7, h), -1e-12);
  }
}

TEST(SpectralEigs, CommonFactorGap) {
  std::mt19937_64 rng(3);
  const Matrix f = ar1_rows(1, 300, 0.7, rng);
  const Matrix dx = randn(50, 1, rng) * f + randn(50, 300, rng);
  const SpectralEstimate est = spectral_density_eigs(dx, 12, 2);
  EXPECT_GT(est.eigenvalues(0, 0), 10.0 * est.eigenvalues(1, 0));
}

TEST(SpectralEigs, ZeroPanelAndBandwidthError) {
  const SpectralEstimate est = spectral_density_eigs(Matrix::Zero(5, 40), 5, 3);
  EXPECT_EQ(est.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(spectral_density_eigs(Matrix::Zero(5, 40), 40, 3), SelectionError);
}

TEST(SelectQ, PureIdiosyncraticGivesZero) {
  std::mt19937_64 rng(4);
  EXPECT_EQ(select_q(randn(60, 200, rng), 8).q_hat, 0);
}

TEST(SelectQ, ClampedToQmaxWithWarning) {
  DGPConfig c;
  c.n = 100;
  c.T = 230;
  c.q = 3;
  c.r = 6;
  c.d = 2;
  c.seed = 5;
  const SimulatedPanel sim = gen_dfm(c);
  const QSelection full = select_q(diff_cols(sim.x), 8);
  EXPECT_EQ(full.q_hat, 3);
  const QSelection clamped = select_q(diff_cols(sim.x), 1);
  EXPECT_EQ(clamped.q_hat, 1);
  EXPECT_FALSE(clamped.scan.warnings.empty());
}

TEST(SelectQ, InvariantToSeriesScale) {
  DGPConfig c;
  c.n = 60;
  c.T = 200;
  c.seed = 6;
  const SimulatedPanel sim = gen_dfm(c);
  const Matrix dx = diff_cols(sim.x);
  std::mt19937_64 rng(6);
  Vector scale = randn(60, rng).cwiseAbs().array() * 10.0 + 0.01;
  const Matrix scaled = scale.asDiagonal() * dx;
  const QSelection a = select_q(dx, 8), b = select_q(scaled, 8);
  EXPECT_EQ(a.q_hat, b.q_hat);
  ASSERT_EQ(a.criterion.size(), b.criterion.size());
  for (std::size_t k = 0; k < a.criterion.size(); ++k) EXPECT_NEAR(a.criterion[k], b.criterion[k], 1e-9);
}

TEST(SelectQ, QmaxMustBeBelowN) {
  EXPECT_THROW(select_q(Matrix::Ones(4, 50), 4), SelectionError);
}

TEST(TrendCount, OneCommonWalk) {
  std::mt19937_64 rng(7);
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix tau = testutil::random_walks(1, 200, rng);
    const Matrix x = randn(50, 1, rng) * tau + ar1_rows(50, 200, 0.5, rng);
    hits += select_trend_count(x, 5).trend_count == 1;
  }
  EXPECT_GE(hits, 18);
}

TEST(TrendCount, StationaryPanelHasNone) {
  std::mt19937_64 rng(8);
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix f = ar1_rows(2, 200, 0.6, rng);
    const Matrix x = randn(50, 2, rng) * f + ar1_rows(50, 200, 0.3, rng);
    hits += select_trend_count(x, 5).trend_count == 0;
  }
  EXPECT_GE(hits, 18);
}

TEST(TrendCount, TwoIndependentWalks) {
  std::mt19937_64 rng(9);
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix tau = testutil::random_walks(2, 200, rng);
    const Matrix x = randn(50, 2, rng) * tau + ar1_rows(50, 200, 0.5, rng);
    hits += select_trend_count(x, 5).trend_count == 2;
  }
  EXPECT_GE(hits, 18);
}

TEST(MatchR, PublishedSharesGiveSix) {
  ShareTable t;
  t.q_row = vec({33.4, 45.8, 53.3, 58.9, 63.6, 67.4, 70.6, 73.4, 75.8, 77.9});
  t.r_row = vec({23.4, 33.9, 42.1, 47.9, 51.8, 55.3, 58.2, 60.6, 62.7, 64.9});
  const RSelection sel = match_r(t, 3, 10, 1.0);
  EXPECT_EQ(sel.r_hat, 6);
  EXPECT_TRUE(sel.warnings.empty());
}

TEST(MatchR, NoMatchUsesRmaxWithWarning) {
  ShareTable t;
  t.q_row = vec({80.0, 90.0, 95.0});
  t.r_row = vec({10.0, 20.0, 30.0});
  const RSelection sel = match_r(t, 2, 3, 1.0);
  EXPECT_EQ(sel.r_hat, 3);
  EXPECT_FALSE(sel.warnings.empty());
}

TEST(SelectR, DynamicLoadingsGiveTwoQ) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DGPConfig c;
    c.n = 100;
    c.T = 230;
    c.q = 2;
    c.r = 4;
    c.d = 1;
    c.seed = 100 + seed;
    hits += select_r(diff_cols(gen_dfm(c).x), 2, 8).r_hat == 4;
  }
  EXPECT_GE(hits, 7);
}

// The lag-window eigenvalues are biased up by roughly 6pp times the idiosyncratic
// share at n=100, T=230, so r = q is only matched within 1pp for strong factors.
TEST(SelectR, StaticLoadingsGiveQ) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DGPConfig c;
    c.n = 100;
    c.T = 230;
    c.q = 2;
    c.r = 2;
    c.d = 1;
    c.snr = 9.0;
    c.seed = 100 + seed;
    hits += select_r(diff_cols(gen_dfm(c).x), 2, 8).r_hat == 2;
  }
  EXPECT_GE(hits, 7);
}

TEST(ShareTableRows, NondecreasingAndBounded) {
  DGPConfig c;
  c.n = 40;
  c.T = 150;
  c.seed = 10;
  const ShareTable t = explained_variance_table(diff_cols(gen_dfm(c).x), 12);
  for (Eigen::Index k = 0; k < t.q_row.size(); ++k) {
    EXPECT_LE(t.q_row(k), 100.0);
    EXPECT_LE(t.r_row(k), 100.0);
    if (k > 0) {
      EXPECT_GE(t.q_row(k), t.q_row(k - 1));
      EXPECT_GE(t.r_row(k), t.r_row(k - 1));
    }
  }
  EXPECT_NEAR(explained_variance_table(diff_cols(gen_dfm(c).x), 40).r_row(39), 100.0, 1e-9);
}

TEST(Adf, RandomWalkMostlyNotRejected) {
  std::mt19937_64 rng(11);
  const Matrix x = testutil::random_walks(200, 300, rng);
  const RhoClassification cls = classify_idiosyncratic(x, Matrix::Zero(200, 300));
  int ones = 0;
  for (int f : cls.rho) ones += f;
  EXPECT_GE(ones, 180);
}

TEST(Adf, WhiteNoiseMostlyRejected) {
  std::mt19937_64 rng(12);
  const Matrix x = randn(200, 300, rng);
  const RhoClassification cls = classify_idiosyncratic(x, Matrix::Zero(200, 300));
  int zeros = 0;
  for (int f : cls.rho) zeros += 1 - f;
  EXPECT_GE(zeros, 190);
}

TEST(Adf, OverridesAppliedLast) {
  std::mt19937_64 rng(13);
  const Matrix x = testutil::random_walks(3, 300, rng);
  Matrix y = x;
  y.row(2) = randn(1, 300, rng);
  const std::vector<RhoMode> modes = {RhoMode::force_0, RhoMode::auto_select, RhoMode::force_1};
  const RhoClassification cls = classify_idiosyncratic(y, Matrix::Zero(3, 300), modes);
  EXPECT_EQ(cls.rho[0], 0);
  EXPECT_EQ(cls.rho[2], 1);
  EXPECT_FALSE(cls.tests[0].reject && cls.rho[0] == 1);
}

TEST(Adf, CriticalValueResponseSurface) {
  EXPECT_NEAR(adf_critical_5pct(100), -2.86154 - 2.8903 / 100 - 4.234e-4 - 40.04e-6, 1e-12);
  // Large-sample limit of the constant case.
  EXPECT_NEAR(adf_critical_5pct(1000000), -2.8615, 1e-3);
  EXPECT_LT(adf_critical_5pct(50), adf_critical_5pct(500));
}

TEST(Adf, StatisticMatchesHandRegressionWithoutLags) {
  std::mt19937_64 rng(14);
  const Vector y = testutil::random_walks(1, 120, rng).row(0).transpose();
  const AdfResult res = adf_test(y, 0);
  // dy_t = a + b y_{t-1} + e_t, t-ratio of b
  const Eigen::Index T = y.size() - 1;
  Matrix design(T, 2);
  design.col(0).setOnes();
  design.col(1) = y.head(T);
  const Vector dy = y.tail(T) - y.head(T);
  const Vector beta = design.colPivHouseholderQr().solve(dy);
  const Vector e = dy - design * beta;
  const double s2 = e.squaredNorm() / static_cast<double>(T - 2);
  const Matrix cov = s2 * (design.transpose() * design).inverse();
  EXPECT_EQ(res.lags, 0);
  EXPECT_NEAR(res.statistic, beta(1) / std::sqrt(cov(1, 1)), 1e-9);
}

TEST(Adf, TooShortIsError) {
  EXPECT_THROW(adf_test(Vector::LinSpaced(10, 0.0, 1.0), 4), SelectionError);
}
