#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace curate::detail {

/// FFTW-backed real forward transform of a fixed size. Plans are created once
/// per size behind a mutex; `forward` may be called concurrently on distinct
/// scratch buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return size_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  std::span<double> input() { return {in_, size_}; }
  /// Transforms `input()` and returns the half spectrum.
  std::span<const std::complex<double>> forward();

 private:
  std::size_t size_;
  fftw_plan plan_;
  double* in_;
  fftw_complex* out_;
};

/// Inverse real transform (unnormalized, as FFTW): half spectrum -> `size` samples.
void inverse_real_fft(std::span<const std::complex<double>> half, std::span<double> out);

}  // namespace curate::detail
