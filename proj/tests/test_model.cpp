#include <gtest/gtest.h>

#include "nsdfm/model.hpp"
#include "nsdfm/simulate.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <complex>

using namespace nsdfm;
using testutil::randn;

namespace {

ModelSpec small_spec(int n, int r, int q, int d) {
  ModelSpec s;
  s.n = n;
  s.T = 50;
  s.r = r;
  s.q = q;
  s.d = d;
  return s;
}

Params random_params(int n, int r, int q, std::vector<int> rho, std::mt19937_64& rng) {
  Params p;
  p.lambda = randn(n, r, rng);
  p.a1 = 0.4 * randn(r, r, rng) / std::sqrt(static_cast<double>(r));
  p.a2 = 0.2 * randn(r, r, rng) / std::sqrt(static_cast<double>(r));
  p.h = randn(r, q, rng);
  p.r_diag = randn(n, rng).cwiseAbs().array() + 0.1;
  p.rho = std::move(rho);
  p.i1_noise = Vector::Constant(n, 1e-3);
  return p;
}

std::vector<std::complex<double>> sorted_eigs(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  std::vector<std::complex<double>> v(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
  std::sort(v.begin(), v.end(), [](auto x, auto y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  });
  return v;
}

}  // namespace

TEST(BuildStateSpace, ZeroDynamicsLayout) {
  Params p;
  p.lambda = Matrix::Ones(3, 2);
  p.a1 = Matrix::Zero(2, 2);
  p.a2 = Matrix::Zero(2, 2);
  p.h = Matrix(2, 1);
  p.h << 1.0, 0.0;
  p.r_diag = Vector::Ones(3);
  p.rho = {0, 0, 0};
  ModelSpec s = small_spec(3, 2, 1, 0);
  const StateSpace ss = build_state_space(p, s);
  ASSERT_EQ(ss.dim(), 4);
  Matrix expect = Matrix::Zero(4, 4);
  expect.block(2, 0, 2, 2).setIdentity();
  EXPECT_EQ(ss.transition, expect);
  EXPECT_EQ(numerical_rank(ss.state_cov), 1);
}

TEST(BuildStateSpace, I1StateAppended) {
  std::mt19937_64 rng(3);
  std::vector<int> rho(5, 0);
  rho[0] = 1;
  const Params p = random_params(5, 2, 1, rho, rng);
  const StateSpace ss = build_state_space(p, small_spec(5, 2, 1, 0));
  ASSERT_EQ(ss.dim(), 2 * 2 + 1);
  EXPECT_EQ(ss.design(0, 4), 1.0);
  for (Eigen::Index i = 1; i < 5; ++i) EXPECT_EQ(ss.design(i, 4), 0.0);
  EXPECT_EQ(ss.transition(4, 4), 1.0);
  EXPECT_DOUBLE_EQ(ss.state_cov(4, 4), p.r_diag(0));
  EXPECT_DOUBLE_EQ(ss.obs_var(0), p.i1_noise(0));
  EXPECT_DOUBLE_EQ(ss.obs_var(1), p.r_diag(1));
}

TEST(BuildStateSpace, EigenvaluesAreCompanionPlusOnes) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<int> rho = {1, 0, 1, 0, 0, 1};
    const Params p = random_params(6, 3, 2, rho, rng);
    const StateSpace ss = build_state_space(p, small_spec(6, 3, 2, 1));
    // Independent assembly of the companion block.
    Matrix comp = Matrix::Zero(6, 6);
    comp.topLeftCorner(3, 3) = p.a1;
    comp.topRightCorner(3, 3) = p.a2;
    comp.bottomLeftCorner(3, 3).setIdentity();
    auto expected = sorted_eigs(comp);
    for (int k = 0; k < 3; ++k) expected.emplace_back(1.0, 0.0);
    std::sort(expected.begin(), expected.end(), [](auto x, auto y) {
      return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    const auto got = sorted_eigs(ss.transition);
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_LT(std::abs(got[k] - expected[k]), 1e-8);
  }
}

TEST(BuildStateSpace, DimensionMismatchNamesField) {
  std::mt19937_64 rng(1);
  Params p = random_params(4, 2, 1, {0, 0, 0, 0}, rng);
  p.a2 = Matrix::Zero(3, 3);
  try {
    build_state_space(p, small_spec(4, 2, 1, 0));
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_EQ(e.field(), "A2");
  }
}

TEST(BuildStateSpace, ReconstructsObservationEquation) {
  std::mt19937_64 rng(5);
  std::vector<int> rho = {0, 1, 0, 0};
  const Params p = random_params(4, 2, 1, rho, rng);
  const StateSpace ss = build_state_space(p, small_spec(4, 2, 1, 0));
  const int T = 30;
  const Matrix u = randn(1, T, rng), w = randn(1, T, rng), e = randn(4, T, rng);
  // Direct recursion of the model equations.
  Matrix f = Matrix::Zero(2, T);
  Vector xi1 = Vector::Zero(T);
  Matrix x(4, T);
  Vector alpha = Vector::Zero(ss.dim());
  const double rw_sd = std::sqrt(p.r_diag(1));
  for (int t = 0; t < T; ++t) {
    const Vector f1 = t >= 1 ? Vector(f.col(t - 1)) : Vector::Zero(2);
    const Vector f2 = t >= 2 ? Vector(f.col(t - 2)) : Vector::Zero(2);
    f.col(t) = p.a1 * f1 + p.a2 * f2 + p.h * u(0, t);
    xi1(t) = (t >= 1 ? xi1(t - 1) : 0.0) + rw_sd * w(0, t);
    Vector obs = p.lambda * f.col(t);
    for (int i = 0; i < 4; ++i) obs(i) += i == 1 ? xi1(t) : std::sqrt(p.r_diag(i)) * e(i, t);
    x.col(t) = obs;

    Vector shock = Vector::Zero(ss.dim());
    shock.head(2) = p.h * u(0, t);
    shock(4) = rw_sd * w(0, t);
    alpha = ss.transition * alpha + shock;
    Vector noise = ss.obs_var.cwiseSqrt().cwiseProduct(e.col(t));
    noise(1) = 0.0;
    const Vector via_ss = ss.design * alpha + noise;
    EXPECT_LT((via_ss - x.col(t)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BuildStateSpace, UnitRootCountFromCointegratedDgp) {
  DGPConfig c;
  c.n = 30;
  c.q = 3;
  c.r = 6;
  c.d = 2;
  c.i1_share = 0.1;
  c.seed = 9;
  const SimulatedPanel sim = gen_dfm(c);
  ModelSpec s = small_spec(30, 6, 3, 2);
  const Params& p = sim.truth.params;
  Params q = p;
  for (Eigen::Index i = 0; i < q.i1_noise.size(); ++i) q.i1_noise(i) = 1e-3;
  const StateSpace ss = build_state_space(q, s);
  Eigen::EigenSolver<Matrix> es(ss.transition, false);
  int unit = 0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) unit += std::abs(es.eigenvalues()(k) - 1.0) < 1e-6;
  EXPECT_EQ(unit, (c.q - c.d) + p.n_i1());
}

TEST(ValidateParams, ZeroVarianceFlagged) {
  std::mt19937_64 rng(2);
  Params p = random_params(4, 2, 1, {0, 0, 0, 0}, rng);
  p.r_diag(2) = 0.0;
  const ValidationReport rep = validate_params(p, small_spec(4, 2, 1, 0));
  ASSERT_FALSE(rep.ok());
  bool found = false;
  for (const auto& v : rep.violations) found = found || v.find("[R]_{ii}>0") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(ValidateParams, DuplicatedColumnsRankViolation) {
  std::mt19937_64 rng(2);
  ModelSpec s = small_spec(4, 3, 2, 1);
  Params p = random_params(4, 3, 2, {0, 0, 0, 0}, rng);
  p.h.col(1) = p.h.col(0);
  const ValidationReport rep = validate_params(p, s);
  bool found = false;
  for (const auto& v : rep.violations) found = found || v.find("rank") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(ValidateParams, WellFormedIsEmpty) {
  std::mt19937_64 rng(2);
  ModelSpec s = small_spec(5, 4, 2, 1);
  const Params p = random_params(5, 4, 2, {0, 1, 0, 0, 0}, rng);
  EXPECT_TRUE(validate_params(p, s).ok());
}

TEST(ModelSpecChecks, DegenerateDeficitRejected) {
  ModelSpec s = small_spec(10, 4, 2, 0);
  EXPECT_FALSE(s.violations().empty());
  s.d = 2;
  EXPECT_FALSE(s.violations().empty());
  s.d = 1;
  EXPECT_TRUE(s.violations().empty());
  EXPECT_TRUE(s.warnings().empty());
  s.r = 3;
  EXPECT_EQ(s.warnings().size(), 1u);
}
