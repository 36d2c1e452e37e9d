#include "curate/bandwidth.hpp"

#include <algorithm>
#include <cmath>

#include "curate/error.hpp"
#include "curate/kernels.hpp"

namespace curate {

int BandwidthEstimate::rounded_hz() const { return static_cast<int>(std::lround(f_max_hz)); }

PowerSpectrum mean_power_spectrum(const AudioBuffer& buf, double window_s, double hop_s) {
  if (buf.channels != 1) throw AudioError("mean_power_spectrum requires mono input");
  const double sr = buf.sample_rate_hz;
  const auto window = static_cast<std::size_t>(std::lround(window_s * sr));
  const auto hop = static_cast<std::size_t>(std::lround(hop_s * sr));
  if (window < 2 || hop == 0) throw AudioError("analysis window or hop too small");
  if (buf.samples.size() < window) throw AudioError("audio shorter than one analysis window");
  PowerSpectrum spec;
  spec.psd = kernels::mean_power_spectrum(buf.samples, window, hop);
  spec.bin_hz = sr / static_cast<double>(window);
  spec.nyquist_hz = sr / 2.0;
  return spec;
}

BandwidthEstimate estimate_bandwidth(const PowerSpectrum& spec, double threshold_db) {
  BandwidthEstimate est;
  est.threshold_db = threshold_db;
  est.nyquist_hz = spec.nyquist_hz;
  if (spec.psd.empty()) {
    est.degenerate = true;
    return est;
  }
  est.peak_power = *std::max_element(spec.psd.begin(), spec.psd.end());
  if (!(est.peak_power > 0.0)) {
    est.degenerate = true;
    return est;
  }
  for (std::size_t k = spec.psd.size(); k-- > 0;) {
    const double p = spec.psd[k];
    if (p > 0.0 && 10.0 * std::log10(p / est.peak_power) >= threshold_db) {
      est.f_max_hz = std::min(static_cast<double>(k) * spec.bin_hz, spec.nyquist_hz);
      break;
    }
  }
  return est;
}

BandwidthEstimate estimate_head_bandwidth(const AudioBuffer& audio, const BandwidthOptions& opts) {
  AudioBuffer mono = mixdown(audio);
  const auto head = static_cast<std::size_t>(std::llround(opts.analyzed_s * mono.sample_rate_hz));
  if (mono.samples.size() > head) mono.samples.resize(head);
  auto est = estimate_bandwidth(mean_power_spectrum(mono, opts.window_s, opts.hop_s), opts.threshold_db);
  est.analyzed_s = mono.duration_s();
  return est;
}

BandwidthEstimate chapter_bandwidth(ChapterRecord& chapter, const AudioLoader& load,
                                    const BandwidthOptions& opts) {
  AudioBuffer audio = load(chapter);
  auto est = estimate_head_bandwidth(audio, opts);
  chapter.sample_rate_hz = audio.sample_rate_hz;
  chapter.bandwidth_hz = est.degenerate || est.rounded_hz() <= 0 ? std::nullopt : std::optional<int>(est.rounded_hz());
  return est;
}

bool passes_bandwidth_gate(const UtteranceRecord& rec, const SubsetSpec& spec) {
  if (!rec.bandwidth_hz)
    throw StageOrderError("utterance " + rec.utterance_id + " has no bandwidth_hz; run the bandwidth stage first");
  return static_cast<double>(*rec.bandwidth_hz) >= spec.min_bandwidth_hz;
}

}  // namespace curate
