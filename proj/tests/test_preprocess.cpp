#include <gtest/gtest.h>

#include "nsdfm/preprocess.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace nsdfm;
using testutil::randn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Plain least squares of y on (1, t), t = 1..T, via the closed form.
std::pair<double, double> ols_line(const Vector& y) {
  const double T = static_cast<double>(y.size());
  double st = 0, stt = 0, sy = 0, sty = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double t = static_cast<double>(i + 1);
    st += t;
    stt += t * t;
    sy += y(i);
    sty += t * y(i);
  }
  const double b = (T * sty - st * sy) / (T * stt - st * st);
  return {(sy - b * st) / T, b};
}

}  // namespace

TEST(Aggregate, MonthlyBlocks) {
  const Vector q = aggregate_to_quarterly(vec({1, 2, 3, 4, 5, 6}), Frequency::monthly);
  ASSERT_EQ(q.size(), 2);
  EXPECT_DOUBLE_EQ(q(0), 2.0);
  EXPECT_DOUBLE_EQ(q(1), 5.0);
}

TEST(Aggregate, MonthlyRampAndPartialQuarter) {
  Vector ramp(14);
  for (int t = 0; t < 14; ++t) ramp(t) = t + 1;
  const Vector q = aggregate_to_quarterly(ramp, Frequency::monthly);
  ASSERT_EQ(q.size(), 4);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(q(k), (3.0 * k + 1 + 3.0 * k + 2 + 3.0 * k + 3) / 3.0);
}

TEST(Aggregate, ConstantDaily) {
  std::vector<int> keys;
  for (int k = 0; k < 3; ++k)
    for (int d = 0; d < 60 + k; ++d) keys.push_back(8000 + k);
  const Vector q = aggregate_to_quarterly(Vector::Constant(static_cast<Eigen::Index>(keys.size()), 4.5),
                                          Frequency::daily, keys);
  ASSERT_EQ(q.size(), 3);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(q(k), 4.5);
}

TEST(Aggregate, EmptyDailyQuarterIsError) {
  const std::vector<int> keys = {10, 10, 12, 12};
  EXPECT_THROW(aggregate_to_quarterly(vec({1, 2, 3, 4}), Frequency::daily, keys), PreprocessError);
}

TEST(Aggregate, QuarterlyIsIdentity) {
  std::mt19937_64 rng(1);
  const Vector y = randn(17, rng);
  EXPECT_EQ(aggregate_to_quarterly(y, Frequency::quarterly), y);
}

TEST(Transform, LogDlog) {
  const Vector l = apply_transform(vec({1.0, std::exp(1.0), std::exp(2.0)}), Transform::log);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(l(i), i, 1e-15);
  const Vector c = apply_transform(Vector::Constant(5, 3.0), Transform::dlog);
  ASSERT_EQ(c.size(), 4);
  EXPECT_LT(c.cwiseAbs().maxCoeff(), 1e-15);
  const Vector g = apply_transform(vec({100.0, 110.0}), Transform::dlog);
  ASSERT_EQ(g.size(), 1);
  EXPECT_NEAR(g(0), std::log(110.0) - std::log(100.0), 1e-15);
}

TEST(Transform, NonPositiveNamesIndex) {
  try {
    apply_transform(vec({1.0, 2.0, -1.0}), Transform::log);
    FAIL();
  } catch (const PreprocessError& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(Detrend, LinearTrendRecovered) {
  std::mt19937_64 rng(42);
  const int T = 200;
  Vector y(T);
  const Vector e = randn(T, rng, 0.5);
  for (int t = 0; t < T; ++t) y(t) = 3.0 * (t + 1) + e(t);
  const Detrended d = detrend(y, DetrendMode::auto_select);
  EXPECT_EQ(d.result.mode_used, TrendKind::trend);
  const auto [a, b] = ols_line(y);
  EXPECT_NEAR(d.result.b_hat, b, 1e-10);
  EXPECT_NEAR(d.result.a_hat, a, 1e-8);
  // Standard error of the slope under iid noise.
  const double se = 0.5 * std::sqrt(12.0 / (static_cast<double>(T) * T * T));
  EXPECT_LT(std::abs(d.result.b_hat - 3.0), 2.0 * se * 1.5);
}

TEST(Detrend, DriftlessWalkMostlyMeanMode) {
  std::mt19937_64 rng(7);
  int mean_mode = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Vector y = testutil::random_walks(1, 200, rng).row(0).transpose();
    const Detrended d = detrend(y, DetrendMode::auto_select);
    if (d.result.mode_used == TrendKind::mean) {
      ++mean_mode;
      EXPECT_EQ(d.result.b_hat, 0.0);
    }
  }
  // Nominal size 5%; allow sampling error.
  EXPECT_GE(mean_mode, 180);
}

TEST(Detrend, ConstantSeries) {
  const Detrended d = detrend(Vector::Constant(20, 5.0), DetrendMode::auto_select);
  EXPECT_EQ(d.result.statistic, 0.0);
  EXPECT_EQ(d.result.mode_used, TrendKind::mean);
  EXPECT_LT(d.residual.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Detrend, TooShort) { EXPECT_THROW(detrend(Vector::Ones(7), DetrendMode::auto_select), PreprocessError); }

TEST(Detrend, ModeMatchesThreshold) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    Vector y = testutil::random_walks(1, 120, rng).row(0).transpose();
    for (Eigen::Index t = 0; t < y.size(); ++t) y(t) += 0.1 * rep / 10.0 * t;
    const Detrended d = detrend(y, DetrendMode::auto_select);
    EXPECT_EQ(d.result.mode_used == TrendKind::trend, d.result.statistic >= 1.96);
  }
}

TEST(AddBack, RoundTripBothModes) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector y = testutil::random_walks(1, 80, rng).row(0).transpose();
    for (DetrendMode m : {DetrendMode::force_mean, DetrendMode::force_trend, DetrendMode::auto_select}) {
      const Detrended d = detrend(y, m);
      EXPECT_LT((add_back_deterministic(d.residual, d.result) - y).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(AddBack, ZeroResidualGivesLine) {
  DetrendResult r;
  r.mode_used = TrendKind::trend;
  r.a_hat = 1.0;
  r.b_hat = 2.0;
  r.level = 1.0;
  const Vector y = add_back_deterministic(Vector::Zero(5), r);
  for (int t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(y(t), 1.0 + 2.0 * (t + 1));
}

TEST(Detrend, MeanModeResidualHasZeroMean) {
  std::mt19937_64 rng(10);
  const Vector y = (testutil::random_walks(1, 100, rng).row(0).transpose().array() + 7.0).matrix();
  const Detrended d = detrend(y, DetrendMode::force_mean);
  EXPECT_NEAR(d.residual.mean(), 0.0, 1e-12);
  EXPECT_NEAR(d.result.a_hat, (y(99) - y(0)) / 99.0, 1e-14);
}

TEST(Detrend, StatisticScaleCovariant) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    Vector y = testutil::random_walks(1, 90, rng).row(0).transpose();
    y += Vector::LinSpaced(90, 0.0, 9.0);
    const double s = drift_statistic(y, -1);
    EXPECT_NEAR(drift_statistic(37.5 * y, -1), s, 1e-10 * std::max(1.0, s));
  }
}

TEST(Winsorize, ClampsOutlier) {
  Vector y = Vector::LinSpaced(21, -1.0, 1.0);
  y(10) = 100.0;
  const Vector w = winsorize(y, 3.0);
  EXPECT_LT(w(10), 5.0);
  EXPECT_EQ(w(0), y(0));
}

TEST(Parse, CodesAndNames) {
  EXPECT_EQ(parse_transform("0"), Transform::none);
  EXPECT_EQ(parse_transform("1"), Transform::log);
  EXPECT_EQ(parse_transform("2"), Transform::dlog);
  EXPECT_THROW(parse_transform("3"), PreprocessError);
  EXPECT_EQ(parse_detrend_mode("force_trend"), DetrendMode::force_trend);
  EXPECT_EQ(parse_rho_mode("force_1"), RhoMode::force_1);
  EXPECT_EQ(parse_frequency("monthly"), Frequency::monthly);
}
