#include <benchmark/benchmark.h>

#include "cmil/adam.hpp"
#include "cmil/agent.hpp"
#include "cmil/theory.hpp"
#include "cmil/world_model.hpp"

namespace {

using namespace cmil;

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const int batch = static_cast<int>(state.range(0));
  MLP net({16, 128, 128, 16}, rng);
  Tensor input = Tensor::randn({batch, 16}, rng);
  for (auto _ : state) {
    Tape t;
    Value out = t.mean_all(t.square(net.forward(t, t.constant(input))));
    t.backward(out);
    benchmark::DoNotOptimize(t.val(out).item());
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(256);

void BM_ElboStep(benchmark::State& state) {
  Rng rng(2);
  WorldModelConfig cfg;
  cfg.obs_dim = 2;
  cfg.act_dim = 2;
  cfg.latent_dim = 16;
  cfg.ensemble_size = 5;
  WorldModel model(cfg, rng);
  Adam opt(3e-4);
  const int batch = 8, t_len = 16;
  std::vector<Tensor> obs(t_len), act(t_len);
  for (int i = 0; i < t_len; ++i) {
    obs[i] = Tensor::randn({batch, 2}, rng);
    act[i] = Tensor::randn({batch, 2}, rng);
  }
  for (auto _ : state) {
    Tape t;
    ElboResult elbo = model.elbo_loss(t, obs, act, rng);
    t.backward(elbo.loss);
    opt.step(model.params(), t);
    benchmark::DoNotOptimize(t.val(elbo.loss).item());
  }
}
BENCHMARK(BM_ElboStep);

void BM_Imagine(benchmark::State& state) {
  Rng rng(3);
  WorldModelConfig cfg;
  cfg.obs_dim = 2;
  cfg.act_dim = 2;
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {128, 128}, rng);
  Tensor starts = Tensor::randn({static_cast<int>(state.range(0)), cfg.latent_dim}, rng);
  for (auto _ : state) {
    Tape t;
    PolicyFn pf = [&](Tape& tape, Value s) { return policy.rsample(tape, s, rng); };
    ImaginedRollout roll = model.imagine(t, pf, t.constant(starts), 15, rng, true);
    benchmark::DoNotOptimize(t.val(roll.latents.back()).all_finite());
  }
}
BENCHMARK(BM_Imagine)->Arg(16)->Arg(64);

void BM_OccupancySolve(benchmark::State& state) {
  const int s_count = static_cast<int>(state.range(0));
  const TabularMDP mdp = random_tabular(7, s_count, 4);
  Rng rng(8);
  const TabularPolicy pi = random_policy(rng, s_count, 4);
  for (auto _ : state) {
    OccupancyMeasure m = occupancy(mdp, pi);
    benchmark::DoNotOptimize(m.total());
  }
}
BENCHMARK(BM_OccupancySolve)->Arg(8)->Arg(64);

void BM_TdLambda(benchmark::State& state) {
  Rng rng(9);
  const int h = 15;
  std::vector<double> rewards(h), v0(h + 1);
  for (double& r : rewards) r = rng.normal();
  for (double& v : v0) v = rng.normal();
  for (auto _ : state) {
    double acc = 0.0;
    for (int t = 0; t < h; ++t) acc += td_lambda(rewards, v0, 0.99, 0.95, t);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_TdLambda);

}  // namespace

BENCHMARK_MAIN();
