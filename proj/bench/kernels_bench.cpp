// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to vary the thread count.

#include <benchmark/benchmark.h>

#include <random>

#include "curate/audio.hpp"
#include "curate/kernels.hpp"

namespace {

using namespace curate;

std::vector<float> noise(std::size_t n) {
  std::mt19937 rng(7);
  std::normal_distribution<float> d(0.0f, 0.1f);
  std::vector<float> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

const std::vector<float>& minute_of_audio() {
  static const auto x = noise(48000 * 60);
  return x;
}

template <auto Fn>
void frame_rms(benchmark::State& state) {
  const auto& x = minute_of_audio();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, 1200, 480));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(x.size()));
}

template <auto Fn>
void resample(benchmark::State& state) {
  const auto& x = minute_of_audio();
  const auto f = PolyphaseFilter::design(48000, 44100);
  std::vector<float> out(f.output_length(x.size()));
  for (auto _ : state) {
    Fn(f, x, out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(x.size()));
}

template <auto Fn>
void power_spectrum(benchmark::State& state) {
  const auto& x = minute_of_audio();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, 2048, 512));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(x.size()));
}

template <auto Fn>
void levenshtein(benchmark::State& state) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> len(20, 200), ch('a', 'z');
  std::vector<std::u32string> refs(2000), hyps(2000);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (int k = len(rng); k > 0; --k) refs[i] += static_cast<char32_t>(ch(rng));
    hyps[i] = refs[i];
    for (auto& c : hyps[i])
      if (rng() % 10 == 0) c = static_cast<char32_t>(ch(rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(Fn(refs, hyps));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(refs.size()));
}

BENCHMARK(frame_rms<kernels::serial::frame_rms>)->Name("frame_rms/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(frame_rms<kernels::frame_rms>)->Name("frame_rms/openmp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(resample<kernels::serial::polyphase_resample>)->Name("resample/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(resample<kernels::polyphase_resample>)->Name("resample/openmp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(power_spectrum<kernels::serial::mean_power_spectrum>)->Name("power_spectrum/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(power_spectrum<kernels::mean_power_spectrum>)->Name("power_spectrum/openmp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(levenshtein<kernels::serial::batch_levenshtein>)->Name("levenshtein/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(levenshtein<kernels::batch_levenshtein>)->Name("levenshtein/openmp")->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
