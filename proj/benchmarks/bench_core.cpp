// Microbenchmarks for the training hot path: autodiff matmul, encoder and
// decoder passes, score evaluation, the two score-matching losses, the
// distance-distortion cost, and one full alternation step.

#include <benchmark/benchmark.h>

#include "dmatch/datasets.hpp"
#include "dmatch/objectives.hpp"
#include "dmatch/trainer.hpp"

using namespace dmatch;

namespace {

Rng make_rng(uint64_t salt) { return Rng(hash_mix(0xbe4c4, salt)); }

void BM_MatmulForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng = make_rng(1);
  Tensor a = rng.normal_tensor(n, n);
  Tensor b = rng.normal_tensor(n, n);
  for (auto _ : state) {
    Tape tape;
    Var va = tape.leaf(a, true);
    Var vb = tape.leaf(b, true);
    Var loss = mean(matmul(va, vb));
    tape.backward(loss);
    benchmark::DoNotOptimize(va.grad());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_EncodeDecode(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(2);
  GaussianEncoder enc(1, make_mlp_spec(2, 64, 4, 3, Activation::softplus), 2, false, rng);
  GaussianDecoder dec(1, make_mlp_spec(2, 64, 2, 3, Activation::softplus), rng);
  Tensor x = rng.normal_tensor(batch, 2);
  for (auto _ : state) {
    auto [mu, logvar] = enc.encode_value(x, 0);
    Tensor xhat = dec.decode_value(mu, 0);
    benchmark::DoNotOptimize(xhat);
    benchmark::DoNotOptimize(logvar);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_EncodeDecode)->Arg(32)->Arg(128)->Arg(512);

void BM_ScoreEval(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(3);
  ScoreNet net(2, make_mlp_spec(3, 64, 2, 3, Activation::softplus), 0.01, 1.0, rng);
  Tensor z = rng.normal_tensor(batch, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.score_value(z, 0.1));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ScoreEval)->Arg(32)->Arg(128)->Arg(512);

void BM_DsmLossBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(4);
  ScoreNet net(2, make_mlp_spec(3, 64, 2, 3, Activation::softplus), 0.01, 1.0, rng);
  NoiseSchedule sched;
  Tensor z = rng.normal_tensor(batch, 2);
  DsmNoise noise = sample_dsm_noise(sched, batch, 2, rng);
  for (auto _ : state) {
    Tape tape;
    BoundScoreNet bound = net.bind(tape, true);
    ScoreVarFn fn = [&bound](Var zt, const std::vector<double>& s) { return bound.score(zt, s); };
    Var loss = dsm_loss(tape, fn, z, noise);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DsmLossBackward)->Arg(32)->Arg(128);

void BM_GwCostBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(5);
  Tensor z = rng.normal_tensor(batch, 2);
  Tensor dist_x = pairwise_distances(rng.normal_tensor(batch, 2));
  for (auto _ : state) {
    Tape tape;
    Var vz = tape.leaf(z, true);
    Var cost = gw_cost(vz, dist_x);
    tape.backward(cost);
    benchmark::DoNotOptimize(vz.grad());
  }
  state.SetItemsProcessed(state.iterations() * batch * (batch - 1));
}
BENCHMARK(BM_GwCostBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_AlternateTrainStep(benchmark::State& state) {
  MogTargetSpec mspec;
  mspec.n = 512;
  MogTarget target = gen_mog_target(mspec);
  LabeledDomainDataset data = single_domain_dataset(target.samples);

  ModelSpec spec;
  spec.x_dim = 2;
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = 128;
  cfg.score_loops = 2;
  Model model = build_model(spec, cfg.schedule, 7);
  for (auto _ : state) {
    RunTrace trace = alternate_train(model, data, cfg);
    benchmark::DoNotOptimize(trace.rows.size());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AlternateTrainStep);

}  // namespace

BENCHMARK_MAIN();
