#pragma once

#include <functional>
#include <vector>

#include "curate/audio.hpp"
#include "curate/manifest.hpp"

namespace curate {

/// Mean power spectrum over [0, nyquist_hz]; psd[k] is the power at k * bin_hz.
struct PowerSpectrum {
  std::vector<double> psd;
  double bin_hz = 0.0;
  double nyquist_hz = 0.0;
};

struct BandwidthEstimate {
  double f_max_hz = 0.0;
  double peak_power = 0.0;
  double threshold_db = -50.0;
  double analyzed_s = 0.0;
  double nyquist_hz = 0.0;
  /// All-zero spectrum: f_max_hz is 0 and carries no information.
  bool degenerate = false;

  int rounded_hz() const;
};

struct BandwidthOptions {
  double window_s = 2048.0 / 44100.0;
  double hop_s = 1024.0 / 44100.0;
  double threshold_db = -50.0;
  double analyzed_s = 30.0;
};

/// Hann-windowed, frame-averaged |FFT|^2. Window and hop are rounded to whole samples.
PowerSpectrum mean_power_spectrum(const AudioBuffer& buf, double window_s = 2048.0 / 44100.0,
                                  double hop_s = 1024.0 / 44100.0);

/// Highest bin whose power is within `threshold_db` of the spectral peak (inclusive).
BandwidthEstimate estimate_bandwidth(const PowerSpectrum& spec, double threshold_db = -50.0);

/// Bandwidth of an already-loaded chapter: first `analyzed_s` seconds after mixdown.
BandwidthEstimate estimate_head_bandwidth(const AudioBuffer& audio, const BandwidthOptions& opts = {});

using AudioLoader = std::function<AudioBuffer(const ChapterRecord&)>;

/// Loads the chapter audio, estimates bandwidth on its head and stamps
/// `chapter.bandwidth_hz`.
BandwidthEstimate chapter_bandwidth(ChapterRecord& chapter, const AudioLoader& load,
                                    const BandwidthOptions& opts = {});

/// True iff rec.bandwidth_hz >= spec.min_bandwidth_hz. Throws StageOrderError when absent.
bool passes_bandwidth_gate(const UtteranceRecord& rec, const SubsetSpec& spec);

}  // namespace curate
