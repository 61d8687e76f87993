// Microbenchmarks for the hot paths: the conv kernels that dominate training
// time, the temporal block in each ablation, and the support pieces (MAC
// audit, dataset synthesis). Run with --benchmark_filter=... to narrow.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "m2a/backbone.hpp"
#include "m2a/complexity.hpp"
#include "m2a/dataset.hpp"
#include "m2a/mechanisms.hpp"
#include "m2a/train.hpp"

namespace {

using namespace m2a;

template <class S>
TensorT<S> rand_t(Rng& rng, Shape shape) {
  auto t = TensorT<S>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-1, 1));
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Rng rng(1);
  auto x = rand_t<float>(rng, {8, side, side, 16});
  auto w = rand_t<float>(rng, {3, 3, 16, 16});
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 1, 1).data());
  state.SetItemsProcessed(state.iterations() * 8ll * side * side * 16 * 9 * 16);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(2);
  auto a = rand_t<float>(rng, {n, n});
  auto b = rand_t<float>(rng, {n, n});
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data());
  state.SetItemsProcessed(state.iterations() * std::int64_t(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_TemporalAttention(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  Rng rng(3);
  auto z = rand_t<float>(rng, {2, T, 8, 8, 4});
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(temporal_self_attention(z).data());
}
BENCHMARK(BM_TemporalAttention)->Arg(8)->Arg(16);

void BM_MechanismForward(benchmark::State& state) {
  const auto v = static_cast<MechanismVariant>(state.range(0));
  Rng rng(4);
  auto x = rand_t<float>(rng, {8, 16, 16, 32});
  auto params = M2AParamsT<float>::init(32, 8, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    if (v == MechanismVariant::TSM)
      benchmark::DoNotOptimize(tsm_shift(x).data());
    else
      benchmark::DoNotOptimize(m2a_forward(x, params, v).data());
  }
  state.SetLabel(variant_name(v));
}
BENCHMARK(BM_MechanismForward)
    ->Arg(static_cast<int>(MechanismVariant::M2AFull))
    ->Arg(static_cast<int>(MechanismVariant::M2AAttention))
    ->Arg(static_cast<int>(MechanismVariant::M2AMotion))
    ->Arg(static_cast<int>(MechanismVariant::TSM));

void BM_TrainStep(benchmark::State& state) {
  DatasetOptions opt;
  opt.frames = 8;
  opt.side = 32;
  Rng drng(5);
  auto data = generate_dataset(4, opt, drng);
  BackboneConfig arch;
  Rng mrng(6);
  auto model = build_backbone<float>(arch, mrng);
  insert_mechanism(model, MechanismVariant::M2AFull, mrng, 8);
  std::vector<TensorT<float>*> ps;
  model.visit_params([&](const std::string&, TensorT<float>& t) { ps.push_back(&t); });
  Optimizer<float> optim(ps, OptimizerKind::Adam, 1e-3);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels(16);
  for (int i = 0; i < 16; ++i) labels[i] = data.labels[std::size_t(order[i])];
  for (auto _ : state) {
    auto batch = detail::make_batch<float>(data, order, 0, 16);
    auto loss = cross_entropy(forward(model, batch), labels);
    loss.backward();
    optim.step();
    model.zero_grads();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_MacsAudit(benchmark::State& state) {
  for (auto _ : state) {
    auto report = count_macs(describe_resnet18(8, 224));
    benchmark::DoNotOptimize(report.total);
  }
}
BENCHMARK(BM_MacsAudit);

void BM_GenerateDataset(benchmark::State& state) {
  DatasetOptions opt;
  for (auto _ : state) {
    Rng rng(7);
    auto d = generate_dataset(4, opt, rng);
    benchmark::DoNotOptimize(d.values.data());
  }
}
BENCHMARK(BM_GenerateDataset)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
