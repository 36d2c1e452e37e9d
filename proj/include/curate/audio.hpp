#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace curate {

/// Interleaved PCM samples in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = 0;
  int channels = 1;

  std::size_t frames() const { return channels > 0 ? samples.size() / channels : 0; }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(frames()) / sample_rate_hz : 0.0;
  }
};

enum class SampleFormat { Int16, Int24, Int32, Float32 };

AudioBuffer load_pcm(const std::filesystem::path& path);
/// Parses a complete WAV byte stream. Streams with a zero or 0xFFFFFFFF data size
/// (as produced by decoders writing to a pipe) are read to the end.
AudioBuffer decode_wav(std::span<const unsigned char> bytes);
void save_pcm(const AudioBuffer& buf, const std::filesystem::path& path,
              SampleFormat format = SampleFormat::Int16);

/// Replaces `{input}` and `{output}` in `command_template` with shell-quoted paths.
std::string expand_command(std::string command_template, const std::filesystem::path& input,
                           const std::filesystem::path& output = {});
/// Runs an external decoder that writes WAV to stdout, e.g. `ffmpeg -v quiet -i {input} -f wav -`.
AudioBuffer decode_with_command(const std::string& command_template,
                                const std::filesystem::path& input);
/// Runs an external encoder, e.g. `flac -s -f -o {output} {input}`.
void encode_with_command(const std::string& command_template, const std::filesystem::path& input,
                         const std::filesystem::path& output);

/// Loads WAV directly; any other extension goes through `decoder_template` when set.
AudioBuffer load_audio(const std::filesystem::path& path, const std::string& decoder_template = {});

/// Per-frame mean across channels.
AudioBuffer mixdown(const AudioBuffer& buf);

/// Frames [begin, end) of a mono or multichannel buffer, clamped to the buffer.
AudioBuffer slice_frames(const AudioBuffer& buf, std::size_t begin, std::size_t end);
AudioBuffer slice_seconds(const AudioBuffer& buf, double offset_s, double duration_s);

/// Rational polyphase filter bank: Kaiser-windowed sinc, `taps_per_phase`
/// input samples contribute to every output sample.
struct PolyphaseFilter {
  int source_hz = 0;
  int target_hz = 0;
  int up = 1;    // interpolation factor L
  int down = 1;  // decimation factor M
  int taps_per_phase = 64;
  double cutoff_hz = 0.0;
  /// coeffs[phase * taps_per_phase + k]
  std::vector<float> coeffs;

  static PolyphaseFilter design(int source_hz, int target_hz, int taps_per_phase = 64,
                                double stopband_db = 65.0, double cutoff_ratio = 0.9714);
  std::size_t output_length(std::size_t input_length) const;
};

/// Mono sample-rate conversion. Same source and target rate returns the input unchanged.
AudioBuffer resample(const AudioBuffer& buf, int target_hz);
AudioBuffer resample(const AudioBuffer& buf, const PolyphaseFilter& filter);

struct TrimOptions {
  double threshold_db = 50.0;
  double max_edge_silence_s = 0.5;
  double window_s = 0.025;
  double hop_s = 0.010;
};

struct TrimResult {
  AudioBuffer trimmed;
  double leading_removed_s = 0.0;
  double trailing_removed_s = 0.0;
  std::size_t leading_removed_frames = 0;
  std::size_t trailing_removed_frames = 0;
  /// Set when every analysis frame is silent; `trimmed` is then empty.
  bool empty = false;
};

/// Energy-based edge trimming: frames more than `threshold_db` below the loudest
/// frame are silent, and at most `max_edge_silence_s` of edge silence is kept.
TrimResult trim_silence(const AudioBuffer& buf, const TrimOptions& opts = {});

}  // namespace curate
