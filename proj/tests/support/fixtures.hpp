#pragma once

// Signal builders, temp directories and brute-force oracles shared by the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "curate/audio.hpp"
#include "fft.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(std::string_view tag = "curate") {
    static int counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (std::string(tag) + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, std::string_view contents) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << contents;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline curate::AudioBuffer mono(std::vector<float> samples, int rate) {
  curate::AudioBuffer b;
  b.samples = std::move(samples);
  b.sample_rate_hz = rate;
  b.channels = 1;
  return b;
}

inline std::vector<float> sine(int rate, double seconds, double freq, double amp = 1.0, double phase = 0.0) {
  const auto n = static_cast<std::size_t>(std::llround(rate * seconds));
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase));
  return x;
}

inline std::vector<float> white_noise(std::size_t n, std::uint64_t seed, double rms = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, rms);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(g(rng));
  return x;
}

/// Gaussian noise whose spectrum is zeroed above `cutoff_hz`: random half
/// spectrum, bins above the cutoff set to zero, inverse transform, RMS scaled.
inline std::vector<float> lowpassed_noise(int rate, double seconds, double cutoff_hz, std::uint64_t seed,
                                          double rms = 0.1) {
  const auto n = static_cast<std::size_t>(std::llround(rate * seconds));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::complex<double>> half(n / 2 + 1);
  for (std::size_t k = 1; k < half.size(); ++k)
    if (static_cast<double>(k) * rate / static_cast<double>(n) <= cutoff_hz) half[k] = {g(rng), g(rng)};
  std::vector<double> x(n);
  curate::detail::inverse_real_fft(half, x);
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double scale = ss > 0 ? rms / std::sqrt(ss / static_cast<double>(n)) : 0.0;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i] * scale);
  return out;
}

inline double rms(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  return std::sqrt(ss / static_cast<double>(x.size()));
}

/// Full (n+1) x (m+1) Levenshtein matrix with unit costs.
template <typename Seq>
std::size_t full_matrix_levenshtein(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[n][m];
}

/// Direct O(N^2) DFT power of a Hann-windowed frame averaged over frames.
inline std::vector<double> naive_mean_power_spectrum(std::span<const float> x, std::size_t n, std::size_t hop) {
  std::vector<double> w(n);
  double wss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    wss += w[i] * w[i];
  }
  std::vector<double> psd(n / 2 + 1, 0.0);
  std::size_t frames = 0;
  for (std::size_t start = 0; start + n <= x.size(); start += hop, ++frames) {
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += w[i] * x[start + i] *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
      psd[k] += std::norm(acc);
    }
  }
  for (auto& p : psd) p /= static_cast<double>(frames) * wss;
  return psd;
}

}  // namespace fixtures
