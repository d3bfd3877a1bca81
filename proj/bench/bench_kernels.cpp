// Serial reference vs OpenMP kernels. Arg 0 selects the policy.
#include <benchmark/benchmark.h>

#include "nsdfm/kernels.hpp"
#include "nsdfm/modelselect.hpp"

#include <random>

using namespace nsdfm;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

Exec policy(const benchmark::State& st) { return st.range(0) == 0 ? Exec::serial : Exec::parallel; }

void BM_Autocovariances(benchmark::State& st) {
  const Matrix x = gaussian(st.range(1), 230, 1);
  for (auto _ : st) benchmark::DoNotOptimize(autocovariances(x, 15, policy(st)));
}

void BM_SpectralEigenvalues(benchmark::State& st) {
  const auto g = autocovariances(gaussian(st.range(1), 230, 2), 15, Exec::serial);
  for (auto _ : st) benchmark::DoNotOptimize(spectral_eigenvalues(g, 10, policy(st)));
}

void BM_SolveRows(benchmark::State& st) {
  const Matrix f = gaussian(8, 230, 3);
  const Matrix x = gaussian(st.range(1), 230, 4);
  const Matrix cross = x * f.transpose();
  const Vector sq = x.rowwise().squaredNorm();
  const Matrix gram_inv = (f * f.transpose()).inverse();
  for (auto _ : st) benchmark::DoNotOptimize(solve_rows(cross, sq, gram_inv, 230.0, policy(st)));
}

void BM_AdfBatch(benchmark::State& st) {
  Matrix x = gaussian(st.range(1), 230, 5);
  for (Eigen::Index t = 1; t < x.cols(); ++t) x.col(t) += x.col(t - 1);
  for (auto _ : st) benchmark::DoNotOptimize(adf_batch(x, -1, policy(st)));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int exec : {0, 1})
    for (int n : {50, 200}) b->Args({exec, n});
  b->ArgNames({"parallel", "n"})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_Autocovariances)->Apply(sizes);
BENCHMARK(BM_SpectralEigenvalues)->Apply(sizes);
BENCHMARK(BM_SolveRows)->Apply(sizes);
BENCHMARK(BM_AdfBatch)->Apply(sizes);

BENCHMARK_MAIN();
