#include "fft.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace curate::detail {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanCache {
  std::map<std::size_t, fftw_plan> forward;
  std::map<std::size_t, fftw_plan> inverse;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

// Plans are built on scratch arrays from fftw_malloc; execution on other
// fftw_malloc'd arrays of the same size meets FFTW's alignment rule.
fftw_plan forward_plan(std::size_t n) {
  std::lock_guard lock(planner_mutex());
  auto& plans = cache().forward;
  if (auto it = plans.find(n); it != plans.end()) return it->second;
  auto* in = fftw_alloc_real(n);
  auto* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  if (!p) throw std::runtime_error("fftw planning failed");
  plans.emplace(n, p);
  return p;
}

fftw_plan inverse_plan(std::size_t n) {
  std::lock_guard lock(planner_mutex());
  auto& plans = cache().inverse;
  if (auto it = plans.find(n); it != plans.end()) return it->second;
  auto* in = fftw_alloc_complex(n / 2 + 1);
  auto* out = fftw_alloc_real(n);
  fftw_plan p = fftw_plan_dft_c2r_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  if (!p) throw std::runtime_error("fftw planning failed");
  plans.emplace(n, p);
  return p;
}

}  // namespace

RealFft::RealFft(std::size_t size)
    : size_(size),
      plan_(forward_plan(size)),
      in_(fftw_alloc_real(size)),
      out_(fftw_alloc_complex(size / 2 + 1)) {}

RealFft::~RealFft() {
  fftw_free(in_);
  fftw_free(out_);
}

std::span<const std::complex<double>> RealFft::forward() {
  fftw_execute_dft_r2c(plan_, in_, out_);
  return {reinterpret_cast<const std::complex<double>*>(out_), bins()};
}

void inverse_real_fft(std::span<const std::complex<double>> half, std::span<double> out) {
  const std::size_t n = out.size();
  if (half.size() != n / 2 + 1) throw std::invalid_argument("inverse_real_fft: size mismatch");
  fftw_plan p = inverse_plan(n);
  auto* in = fftw_alloc_complex(n / 2 + 1);
  auto* res = fftw_alloc_real(n);
  for (std::size_t i = 0; i < half.size(); ++i) {
    in[i][0] = half[i].real();
    in[i][1] = half[i].imag();
  }
  fftw_execute_dft_c2r(p, in, res);
  for (std::size_t i = 0; i < n; ++i) out[i] = res[i];
  fftw_free(in);
  fftw_free(res);
}

}  // namespace curate::detail
