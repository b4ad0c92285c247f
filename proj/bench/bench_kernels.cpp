// Serial reference vs OpenMP path for the heavy kernels. Arg 0 = serial, 1 = parallel.

#include "bnndp/certify.hpp"
#include "bnndp/dp_engine.hpp"
#include "bnndp/layerprop.hpp"
#include "bnndp/mc_oracle.hpp"
#include "bnndp/model.hpp"

#include <benchmark/benchmark.h>

using namespace bnndp;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

BnnModel model(Index width, int hidden, CovKind cov = CovKind::diagonal) {
  GenOptions go;
  go.widths = {2};
  for (int k = 0; k < hidden; ++k) go.widths.push_back(width);
  go.widths.push_back(1);
  go.seed = 3;
  go.covariance = cov;
  go.var_ratio = 0.1;
  return gen_model(go);
}

void BM_prop_affine_value(benchmark::State& st) {
  const BnnModel m = model(st.range(1), 1, CovKind::full);
  const Mat A = Mat::Constant(4, st.range(1), 0.1);
  const Box U = Box::ball(Vec::Constant(2, 0.1), 0.2);
  for (auto _ : st) benchmark::DoNotOptimize(prop_affine_value(A, Vec::Zero(4), m.layer(0), U, exec_of(st)));
}

void BM_certify(benchmark::State& st) {
  const BnnModel m = model(st.range(1), 2);
  Query q;
  q.center = Vec::Constant(2, 0.1);
  q.radius = 0.05;
  DpConfig cfg;
  cfg.exec = exec_of(st);
  cfg.regions = {4, 4};
  for (auto _ : st) benchmark::DoNotOptimize(bound_expectation(m, query_box(q), cfg));
}

// third arg: 0 = full weight draws, 1 = local pre-activation draws
void BM_mc_expectation(benchmark::State& st) {
  const BnnModel m = model(st.range(1), 2);
  const Vec x = Vec::Constant(2, 0.1);
  const McMode mode = st.range(2) ? McMode::local : McMode::weights;
  for (auto _ : st)
    benchmark::DoNotOptimize(mc_expectation(m, x, OutputMap::identity, 2000, 1, exec_of(st), mode));
}

}  // namespace

BENCHMARK(BM_prop_affine_value)->ArgsProduct({{0, 1}, {64, 256}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_certify)->ArgsProduct({{0, 1}, {64, 128}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mc_expectation)->ArgsProduct({{0, 1}, {32, 128}, {0, 1}})->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  configure_threads();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
