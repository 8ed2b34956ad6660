#include <benchmark/benchmark.h>

#include <vector>

#include "botledger/lstm.hpp"
#include "botledger/random.hpp"

using namespace botledger;

namespace {

struct Fixture {
  ModelConfig cfg;
  ModelParams params;
  std::vector<Matrix> inputs;
  std::vector<const Matrix*> batch;
  std::vector<Label> labels;

  Fixture(std::size_t n, std::size_t window) {
    cfg.dropout_p = 0.0;
    params = init_params(cfg);
    Rng rng(42);
    for (std::size_t i = 0; i < n; ++i) {
      Matrix m(window, cfg.input_dim);
      for (auto& v : m.data()) v = rng.uniform();
      inputs.push_back(std::move(m));
      labels.push_back(i % 2 ? Label::Bot : Label::Normal);
    }
    for (const auto& m : inputs) batch.push_back(&m);
  }
};

void BM_Forward(benchmark::State& state, Execution exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 24);
  for (auto _ : state) {
    auto r = forward(f.params, f.batch, f.cfg, {Mode::Inference, 0, exec});
    benchmark::DoNotOptimize(r.probabilities.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TrainStep(benchmark::State& state, Execution exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 24);
  for (auto _ : state) {
    auto r = forward(f.params, f.batch, f.cfg, {Mode::Training, 1, exec});
    auto g = backward(r.trace, f.batch, f.labels, f.params, f.cfg, exec);
    benchmark::DoNotOptimize(g.w_x.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, serial, Execution::Serial)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Forward, parallel, Execution::Parallel)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_TrainStep, serial, Execution::Serial)->Arg(64);
BENCHMARK_CAPTURE(BM_TrainStep, parallel, Execution::Parallel)->Arg(64);

BENCHMARK_MAIN();
