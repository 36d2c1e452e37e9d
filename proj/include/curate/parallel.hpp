#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace curate {

/// Runs `fn(i)` for i in [0, n) on up to `workers` OpenMP threads.
/// The first exception (lowest index) is rethrown after the loop completes.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : 1)
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace curate
