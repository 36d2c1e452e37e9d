#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version and a serial
// reference in `kernels::serial`; both produce bit-identical results for any
// thread count, so the serial form doubles as the test oracle for scheduling.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace curate {
struct PolyphaseFilter;
}

namespace curate::kernels {

/// RMS of frames starting at multiples of `hop`; the trailing frames may be partial.
std::vector<double> frame_rms(std::span<const float> x, std::size_t window, std::size_t hop);

/// Output sample n is the filter applied at input position n * down / up.
void polyphase_resample(const PolyphaseFilter& f, std::span<const float> in, std::span<float> out);

/// Mean of Hann-windowed |FFT|^2 over frames of `fft_size` samples spaced by `hop`.
/// Returns fft_size / 2 + 1 bins. Requires x.size() >= fft_size.
std::vector<double> mean_power_spectrum(std::span<const float> x, std::size_t fft_size,
                                        std::size_t hop);

/// Unit-cost Levenshtein distance for every (ref, hyp) pair.
std::vector<std::size_t> batch_levenshtein(std::span<const std::u32string> refs,
                                           std::span<const std::u32string> hyps);

namespace serial {
std::vector<double> frame_rms(std::span<const float> x, std::size_t window, std::size_t hop);
void polyphase_resample(const PolyphaseFilter& f, std::span<const float> in, std::span<float> out);
std::vector<double> mean_power_spectrum(std::span<const float> x, std::size_t fft_size,
                                        std::size_t hop);
std::vector<std::size_t> batch_levenshtein(std::span<const std::u32string> refs,
                                           std::span<const std::u32string> hyps);
}  // namespace serial

}  // namespace curate::kernels
