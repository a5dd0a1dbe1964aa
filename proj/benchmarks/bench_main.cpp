#include <benchmark/benchmark.h>

#include "ecn/blocks.hpp"
#include "ecn/kernels.hpp"
#include "ecn/model.hpp"
#include "ecn/optim.hpp"
#include "ecn/synthetic.hpp"
#include "ecn/trainer.hpp"

using namespace ecn;

namespace {

Tensor4 filled(Shape4 s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4 t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Tensor4 x = filled({1, c, hw, hw}, 1), w = filled({c, c, 3, 3}, 2), b = filled({1, c, 1, 1}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, &b, {1, 1, 1}));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * hw * hw * (c * 9 + 1) * c));
}
BENCHMARK(BM_Conv3x3)->Args({16, 64})->Args({32, 64})->Args({64, 32});

void BM_DepthwiseConv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Tensor4 x = filled({1, c, 64, 64}, 1), w = filled({c, 1, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, nullptr, {1, 1, c}));
}
BENCHMARK(BM_DepthwiseConv)->Arg(16)->Arg(64);

void BM_DscForward(benchmark::State& state) {
  ParamStore<float> params;
  BufferStore<float> buffers;
  Rng rng(4);
  DscBlock block("d", 32, 48, 1);
  block.allocate(params, buffers, rng);
  Tensor4 x = filled({1, 32, 64, 64}, 5);
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_recording(false);
    Context<float> ctx{tape, params, buffers, ops::Mode::infer};
    benchmark::DoNotOptimize(block.forward(ctx, tape.constant(x)).value());
  }
}
BENCHMARK(BM_DscForward)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  ArchSpec spec = default_arch_spec();
  spec.input.height = spec.input.width = size;
  Model<float> model(spec, 1);
  Tensor4 x = filled({1, 3, size, size}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
}
BENCHMARK(BM_ModelForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ArchSpec spec = default_arch_spec();
  spec.input.height = spec.input.width = 64;
  Model<float> model(spec, 1);
  OptimState<float> optim = OptimState<float>::init(model.params());
  const auto data = make_synthetic_dataset(4, 64, 7);
  Tensor4 images, masks;
  stack_batch(data, {0, 1, 2, 3}, images, masks);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, optim, images, masks, ++step));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
