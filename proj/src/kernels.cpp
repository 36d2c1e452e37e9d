#include "curate/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "curate/audio.hpp"
#include "fft.hpp"
#include "levenshtein.hpp"

namespace curate::kernels {

namespace {

std::size_t frame_count(std::size_t n, std::size_t hop) { return n == 0 ? 0 : (n + hop - 1) / hop; }

double rms_at(std::span<const float> x, std::size_t begin, std::size_t window) {
  const std::size_t end = std::min(x.size(), begin + window);
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

float resample_at(const PolyphaseFilter& f, std::span<const float> in, std::size_t n) {
  const std::int64_t t = static_cast<std::int64_t>(n) * f.down;
  const std::int64_t base = t / f.up;
  const std::int64_t phase = t % f.up;
  const std::int64_t k_count = f.taps_per_phase;
  const std::int64_t first = base - k_count / 2 + 1;
  const float* h = f.coeffs.data() + phase * k_count;
  const std::int64_t len = static_cast<std::int64_t>(in.size());
  const std::int64_t k_lo = std::max<std::int64_t>(0, -first);
  const std::int64_t k_hi = std::min<std::int64_t>(k_count, len - first);
  double acc = 0.0;
  for (std::int64_t k = k_lo; k < k_hi; ++k) acc += static_cast<double>(h[k]) * in[first + k];
  return static_cast<float>(acc);
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

void frame_power(detail::RealFft& fft, std::span<const float> x, std::size_t begin,
                 std::span<const double> window, double* out) {
  auto in = fft.input();
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = window[i] * x[begin + i];
  auto spec = fft.forward();
  for (std::size_t b = 0; b < spec.size(); ++b) out[b] = std::norm(spec[b]);
}

constexpr std::size_t kSpectrumChunk = 128;

void check_spectrum_args(std::span<const float> x, std::size_t fft_size, std::size_t hop) {
  if (fft_size < 2 || hop == 0) throw std::invalid_argument("mean_power_spectrum: bad framing");
  if (x.size() < fft_size) throw std::invalid_argument("mean_power_spectrum: input shorter than one window");
}

void check_levenshtein_args(std::span<const std::u32string> refs, std::span<const std::u32string> hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("batch_levenshtein: size mismatch");
}

}  // namespace

std::vector<double> frame_rms(std::span<const float> x, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw std::invalid_argument("frame_rms: zero window or hop");
  const std::size_t frames = frame_count(x.size(), hop);
  std::vector<double> out(frames);
  const long count = static_cast<long>(frames);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) out[i] = rms_at(x, static_cast<std::size_t>(i) * hop, window);
  return out;
}

void polyphase_resample(const PolyphaseFilter& f, std::span<const float> in, std::span<float> out) {
  const long count = static_cast<long>(out.size());
#pragma omp parallel for schedule(static)
  for (long n = 0; n < count; ++n) out[n] = resample_at(f, in, static_cast<std::size_t>(n));
}

std::vector<double> mean_power_spectrum(std::span<const float> x, std::size_t fft_size, std::size_t hop) {
  check_spectrum_args(x, fft_size, hop);
  const std::size_t bins = fft_size / 2 + 1;
  const std::size_t frames = 1 + (x.size() - fft_size) / hop;
  const auto window = hann(fft_size);
  std::vector<double> acc(bins, 0.0);
  std::vector<double> chunk(kSpectrumChunk * bins);
  for (std::size_t f0 = 0; f0 < frames; f0 += kSpectrumChunk) {
    const std::size_t nf = std::min(kSpectrumChunk, frames - f0);
#pragma omp parallel
    {
      detail::RealFft fft(fft_size);
#pragma omp for schedule(static)
      for (long j = 0; j < static_cast<long>(nf); ++j)
        frame_power(fft, x, (f0 + j) * hop, window, chunk.data() + j * bins);
    }
    // Frame-ordered accumulation per bin keeps the sum independent of thread count.
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(bins); ++b)
      for (std::size_t j = 0; j < nf; ++j) acc[b] += chunk[j * bins + b];
  }
  double wsum = 0.0;
  for (double w : window) wsum += w * w;
  const double norm = 1.0 / (static_cast<double>(frames) * wsum);
  for (auto& v : acc) v *= norm;
  return acc;
}

std::vector<std::size_t> batch_levenshtein(std::span<const std::u32string> refs,
                                           std::span<const std::u32string> hyps) {
  check_levenshtein_args(refs, hyps);
  std::vector<std::size_t> out(refs.size());
#pragma omp parallel
  {
    std::vector<std::size_t> a, b;
#pragma omp for schedule(dynamic, 64)
    for (long i = 0; i < static_cast<long>(refs.size()); ++i)
      out[i] = detail::levenshtein<char32_t>(refs[i], hyps[i], a, b);
  }
  return out;
}

namespace serial {

std::vector<double> frame_rms(std::span<const float> x, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw std::invalid_argument("frame_rms: zero window or hop");
  std::vector<double> out(frame_count(x.size(), hop));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rms_at(x, i * hop, window);
  return out;
}

void polyphase_resample(const PolyphaseFilter& f, std::span<const float> in, std::span<float> out) {
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = resample_at(f, in, n);
}

std::vector<double> mean_power_spectrum(std::span<const float> x, std::size_t fft_size, std::size_t hop) {
  check_spectrum_args(x, fft_size, hop);
  const std::size_t bins = fft_size / 2 + 1;
  const std::size_t frames = 1 + (x.size() - fft_size) / hop;
  const auto window = hann(fft_size);
  detail::RealFft fft(fft_size);
  std::vector<double> acc(bins, 0.0), power(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    frame_power(fft, x, f * hop, window, power.data());
    for (std::size_t b = 0; b < bins; ++b) acc[b] += power[b];
  }
  double wsum = 0.0;
  for (double w : window) wsum += w * w;
  const double norm = 1.0 / (static_cast<double>(frames) * wsum);
  for (auto& v : acc) v *= norm;
  return acc;
}

std::vector<std::size_t> batch_levenshtein(std::span<const std::u32string> refs,
                                           std::span<const std::u32string> hyps) {
  check_levenshtein_args(refs, hyps);
  std::vector<std::size_t> out(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i)
    out[i] = detail::levenshtein<char32_t>(refs[i], hyps[i]);
  return out;
}

}  // namespace serial

}  // namespace curate::kernels
