#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace curate::detail {

// Two-row unit-cost DP; `prev`/`cur` are caller-owned scratch rows.
template <typename T>
std::size_t levenshtein(std::span<const T> ref, std::span<const T> hyp, std::vector<std::size_t>& prev,
                        std::vector<std::size_t>& cur) {
  const std::size_t n = hyp.size();
  prev.resize(n + 1);
  cur.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

template <typename T>
std::size_t levenshtein(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<std::size_t> a, b;
  return levenshtein(ref, hyp, a, b);
}

}  // namespace curate::detail
