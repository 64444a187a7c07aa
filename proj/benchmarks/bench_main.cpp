#include <benchmark/benchmark.h>

#include "gradcritic/envs.hpp"
#include "gradcritic/estimators.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/online_td.hpp"
#include "gradcritic/oracle.hpp"

using namespace gradcritic;

namespace {

void BM_TrueGamma(benchmark::State& state) {
  RandomSuiteOptions o;
  o.mdp.n_states = static_cast<int>(state.range(0));
  const BenchEnv env = random_env(1, 0, o);
  for (auto _ : state) benchmark::DoNotOptimize(true_gamma(env.mdp, env.init_policy));
}
BENCHMARK(BM_TrueGamma)->Arg(10)->Arg(30)->Arg(100);

void BM_PopulationFixedPoint(benchmark::State& state) {
  const BenchEnv env = random_env(1, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        population_fixed_point(env.mdp, env.behavior, env.init_policy, env.features, env.features).g_matrix);
}
BENCHMARK(BM_PopulationFixedPoint);

void BM_LstdFit(benchmark::State& state) {
  const BenchEnv env = random_env(1, 0);
  Rng data_rng(2, 0);
  const Dataset data = collect_dataset(env.mdp, env.behavior, static_cast<std::size_t>(state.range(0)), env.episode_len, data_rng);
  Rng rng(3, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(lstd_fit(env.mdp, data, env.features, env.features, env.init_policy, rng).g_matrix);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LstdFit)->Arg(500)->Arg(5000);

void BM_TdrcTrainStep(benchmark::State& state) {
  const BenchEnv env = random_env(1, 0);
  TdrcTrainOptions o;
  o.lambda = 0.5;
  o.alpha = 1.0 / 60;
  o.actor_lr = 1e-2 / 60;
  o.total_steps = 10000;
  o.eval_every = 0;
  o.episode_len = env.episode_len;
  for (auto _ : state) {
    Rng rng(4, 0);
    benchmark::DoNotOptimize(
        tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, o, rng).curve);
  }
  state.SetItemsProcessed(state.iterations() * o.total_steps);
}
BENCHMARK(BM_TdrcTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
