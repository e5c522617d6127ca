#include <benchmark/benchmark.h>

#include <filesystem>

#include "concad/arch_config.hpp"
#include "concad/losses.hpp"
#include "concad/model.hpp"
#include "concad/ops.hpp"
#include "concad/qrs_detector.hpp"
#include "concad/synthetic.hpp"

using namespace concad;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

ModelInputs random_inputs(const InputDims& dims, std::size_t batch, RngStream& rng) {
  ModelInputs in;
  in.x[kEcg] = random_tensor({batch, dims.ecg, 1}, rng);
  in.x[kRri] = random_tensor({batch, dims.rri, 1}, rng);
  in.x[kRpe] = random_tensor({batch, dims.rpe, 1}, rng);
  for (std::size_t b = 0; b < batch; ++b) in.labels.push_back(static_cast<int>(b % 2));
  return in;
}

ArchConfig arch_named(const char* file) { return ArchConfig::load(std::filesystem::path(CONCAD_CONFIG_DIR) / file); }

}  // namespace

// First ECG block of the Apnea-ECG extractor on one 60 s epoch.
static void BM_Conv1dForward(benchmark::State& state) {
  RngStream rng(1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({batch, 6000, 1}, rng);
  const auto k = random_tensor({100, 1, 64}, rng);
  const Tensor b({64});
  for (auto _ : state) benchmark::DoNotOptimize(conv1d(x, k, b, 20));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(32);

static void BM_Conv1dBackward(benchmark::State& state) {
  RngStream rng(2);
  const auto x = random_tensor({32, 6000, 1}, rng);
  const auto k = random_tensor({100, 1, 64}, rng);
  const auto g = random_tensor({32, conv1d_output_length(6000, 100, 20), 64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv1d_backward(x, k, 20, g));
}
BENCHMARK(BM_Conv1dBackward);

static void BM_ModelTrainStep(benchmark::State& state) {
  const auto arch = arch_named(state.range(0) ? "apnea_ecg.arch" : "toy.arch");
  const InputDims dims{6000, 180, 180};
  RngStream rng(3);
  ConcadModel model(arch, dims, rng);
  const auto batch = static_cast<std::size_t>(state.range(1));
  const auto in = random_inputs(dims, batch, rng);
  RngStream drop(4);
  for (auto _ : state) {
    model.zero_grad();
    const auto out = model.forward(in, ForwardOptions::train(drop));
    const auto ce = cross_entropy_with_logits(out.logits, in.labels);
    const auto sc = supervised_contrastive(out.z, in.labels, 0.1);
    const auto h = hybrid(ce, sc, 0.5);
    model.backward(h.grad_sc_input, h.grad_ce_input);
    benchmark::DoNotOptimize(h.value);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ModelTrainStep)->Args({0, 64})->Args({1, 16})->Unit(benchmark::kMillisecond);

static void BM_ModelPredict(benchmark::State& state) {
  const auto arch = arch_named("apnea_ecg.arch");
  const InputDims dims{6000, 180, 180};
  RngStream rng(5);
  ConcadModel model(arch, dims, rng);
  const auto in = random_inputs(dims, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(in, ForwardOptions::predict()).probs);
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ModelPredict)->Unit(benchmark::kMillisecond);

// One hour of 100 Hz ECG.
static void BM_QrsDetector(benchmark::State& state) {
  RngStream rng(6);
  PulseTrainSpec spec;
  spec.duration_s = 3600.0;
  spec.bpm = 70.0;
  spec.snr_db = 15.0;
  const auto train = make_pulse_train(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(detect_r_peaks(train.record));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(train.record.samples.size() * sizeof(double)));
}
BENCHMARK(BM_QrsDetector)->Unit(benchmark::kMillisecond);

static void BM_SupervisedContrastive(benchmark::State& state) {
  RngStream rng(7);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto z = random_tensor({n, 32}, rng);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(supervised_contrastive(z, y, 0.1).value);
}
BENCHMARK(BM_SupervisedContrastive)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
