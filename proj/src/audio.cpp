#include "curate/audio.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <numbers>

#include "curate/error.hpp"
#include "curate/kernels.hpp"

namespace curate {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'')
      q += "'\\''";
    else
      q += c;
  }
  return q + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

}  // namespace

AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw AudioError("not a RIFF/WAVE stream");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw AudioError("truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw AudioError("truncated extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw AudioError("data chunk before fmt chunk");
      const std::size_t available = bytes.size() - body;
      std::size_t data_size = size;
      if (size == 0 || size == 0xFFFFFFFFu)
        data_size = available;
      else if (data_size > available)
        throw AudioError("truncated data chunk");
      if (channels == 0 || rate == 0) throw AudioError("invalid channel count or sample rate");
      const bool is_float = format == kFormatFloat && bits == 32;
      const bool is_int = format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32);
      if (!is_float && !is_int)
        throw AudioError("unsupported encoding: format " + std::to_string(format) + ", " +
                         std::to_string(bits) + " bits");
      const std::size_t width = bits / 8;
      const std::size_t frame = width * channels;
      data_size -= data_size % frame;
      AudioBuffer buf;
      buf.sample_rate_hz = static_cast<int>(rate);
      buf.channels = channels;
      buf.samples.resize(data_size / width);
      const unsigned char* p = bytes.data() + body;
      for (std::size_t i = 0; i < buf.samples.size(); ++i, p += width) {
        float v;
        if (is_float) {
          std::uint32_t u = read_u32(p);
          std::memcpy(&v, &u, 4);
        } else if (bits == 16) {
          v = static_cast<float>(static_cast<std::int16_t>(read_u16(p)) / 32768.0);
        } else if (bits == 24) {
          std::int32_t s = (p[0] << 8) | (p[1] << 16) | (static_cast<std::int32_t>(p[2]) << 24);
          v = static_cast<float>((s >> 8) / 8388608.0);
        } else {
          v = static_cast<float>(static_cast<std::int32_t>(read_u32(p)) / 2147483648.0);
        }
        buf.samples[i] = v;
      }
      return buf;
    }
    if (size == 0xFFFFFFFFu) break;
    pos = body + size + (size & 1);
  }
  throw AudioError(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

AudioBuffer load_pcm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

void save_pcm(const AudioBuffer& buf, const std::filesystem::path& path, SampleFormat format) {
  const std::uint16_t bits = format == SampleFormat::Int16 ? 16 : format == SampleFormat::Int24 ? 24 : 32;
  const std::uint16_t width = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(buf.samples.size() * width);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format == SampleFormat::Float32 ? kFormatFloat : kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(buf.channels));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz * buf.channels * width));
  put_u16(out, static_cast<std::uint16_t>(buf.channels * width));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);
  for (float s : buf.samples) {
    const double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
    switch (format) {
      case SampleFormat::Int16:
        put_u16(out, static_cast<std::uint16_t>(
                         static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L))));
        break;
      case SampleFormat::Int24: {
        const auto q = static_cast<std::int32_t>(std::clamp(std::lround(v * 8388608.0), -8388608L, 8388607L));
        out.push_back(static_cast<char>(q & 0xFF));
        out.push_back(static_cast<char>((q >> 8) & 0xFF));
        out.push_back(static_cast<char>((q >> 16) & 0xFF));
        break;
      }
      case SampleFormat::Int32:
        put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(
                         std::clamp(std::llround(v * 2147483648.0), -2147483648LL, 2147483647LL))));
        break;
      case SampleFormat::Float32: {
        std::uint32_t u;
        std::memcpy(&u, &s, 4);
        put_u32(out, u);
        break;
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw AudioError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw AudioError("write failed for " + path.string());
}

std::string expand_command(std::string command_template, const std::filesystem::path& input,
                           const std::filesystem::path& output) {
  replace_all(command_template, "{input}", shell_quote(input.string()));
  replace_all(command_template, "{output}", shell_quote(output.string()));
  return command_template;
}

AudioBuffer decode_with_command(const std::string& command_template, const std::filesystem::path& input) {
  const std::string cmd = expand_command(command_template, input);
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw AudioError("cannot start decoder: " + cmd);
  std::vector<unsigned char> bytes;
  unsigned char block[65536];
  std::size_t got;
  while ((got = std::fread(block, 1, sizeof block, pipe)) > 0) bytes.insert(bytes.end(), block, block + got);
  const int status = ::pclose(pipe);
  if (status != 0) throw AudioError("decoder failed (status " + std::to_string(status) + "): " + cmd);
  try {
    return decode_wav(bytes);
  } catch (const AudioError& e) {
    throw AudioError(input.string() + " (decoded): " + e.what());
  }
}

void encode_with_command(const std::string& command_template, const std::filesystem::path& input,
                         const std::filesystem::path& output) {
  const std::string cmd = expand_command(command_template, input, output);
  if (const int status = std::system(cmd.c_str()); status != 0)
    throw AudioError("encoder failed (status " + std::to_string(status) + "): " + cmd);
}

AudioBuffer load_audio(const std::filesystem::path& path, const std::string& decoder_template) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".wav" || decoder_template.empty()) return load_pcm(path);
  return decode_with_command(decoder_template, path);
}

AudioBuffer mixdown(const AudioBuffer& buf) {
  if (buf.channels <= 1) return buf;
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.channels = 1;
  const std::size_t frames = buf.frames();
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < buf.channels; ++c) acc += buf.samples[i * buf.channels + c];
    out.samples[i] = static_cast<float>(acc / buf.channels);
  }
  return out;
}

AudioBuffer slice_frames(const AudioBuffer& buf, std::size_t begin, std::size_t end) {
  end = std::min(end, buf.frames());
  begin = std::min(begin, end);
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.channels = buf.channels;
  out.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(begin * buf.channels),
                     buf.samples.begin() + static_cast<std::ptrdiff_t>(end * buf.channels));
  return out;
}

AudioBuffer slice_seconds(const AudioBuffer& buf, double offset_s, double duration_s) {
  const auto begin = static_cast<std::size_t>(std::llround(offset_s * buf.sample_rate_hz));
  const auto len = static_cast<std::size_t>(std::llround(duration_s * buf.sample_rate_hz));
  return slice_frames(buf, begin, begin + len);
}

PolyphaseFilter PolyphaseFilter::design(int source_hz, int target_hz, int taps_per_phase,
                                        double stopband_db, double cutoff_ratio) {
  if (source_hz <= 0 || target_hz <= 0) throw AudioError("sample rates must be positive");
  if (taps_per_phase < 2 || taps_per_phase % 2) throw AudioError("taps_per_phase must be even and >= 2");
  PolyphaseFilter f;
  f.source_hz = source_hz;
  f.target_hz = target_hz;
  f.taps_per_phase = taps_per_phase;
  const int g = std::gcd(source_hz, target_hz);
  f.up = target_hz / g;
  f.down = source_hz / g;
  if (f.up > 8192) throw AudioError("unsupported resampling ratio " + std::to_string(source_hz) + " -> " +
                                    std::to_string(target_hz));
  f.cutoff_hz = 0.5 * std::min(source_hz, target_hz) * cutoff_ratio;

  const double fc = f.cutoff_hz / source_hz;  // cycles per input sample
  const double beta = stopband_db > 50.0 ? 0.1102 * (stopband_db - 8.7)
                                         : 0.5842 * std::pow(stopband_db - 21.0, 0.4) + 0.07886 * (stopband_db - 21.0);
  const double half = taps_per_phase / 2.0;
  const double i0_beta = bessel_i0(beta);
  f.coeffs.resize(static_cast<std::size_t>(f.up) * taps_per_phase);
  for (int phase = 0; phase < f.up; ++phase) {
    float* row = f.coeffs.data() + static_cast<std::size_t>(phase) * taps_per_phase;
    double sum = 0.0;
    std::vector<double> h(taps_per_phase);
    for (int k = 0; k < taps_per_phase; ++k) {
      // Distance (in input samples) from the output instant to input tap k.
      const double tau = half - 1.0 - k + static_cast<double>(phase) / f.up;
      const double r = tau / half;
      const double w = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0_beta;
      const double x = 2.0 * fc * tau;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      h[k] = 2.0 * fc * sinc * w;
      sum += h[k];
    }
    // Unit DC gain in every phase.
    for (int k = 0; k < taps_per_phase; ++k) row[k] = static_cast<float>(h[k] / sum);
  }
  return f;
}

std::size_t PolyphaseFilter::output_length(std::size_t input_length) const {
  const auto num = static_cast<unsigned long long>(input_length) * up;
  return static_cast<std::size_t>((num + down - 1) / down);
}

AudioBuffer resample(const AudioBuffer& buf, int target_hz) {
  if (target_hz <= 0) throw AudioError("target sample rate must be positive");
  if (buf.channels != 1) throw AudioError("resample requires mono input");
  if (target_hz == buf.sample_rate_hz) return buf;
  return resample(buf, PolyphaseFilter::design(buf.sample_rate_hz, target_hz));
}

AudioBuffer resample(const AudioBuffer& buf, const PolyphaseFilter& filter) {
  if (buf.channels != 1) throw AudioError("resample requires mono input");
  if (filter.source_hz != buf.sample_rate_hz) throw AudioError("filter designed for a different source rate");
  AudioBuffer out;
  out.sample_rate_hz = filter.target_hz;
  out.channels = 1;
  out.samples.resize(filter.output_length(buf.samples.size()));
  kernels::polyphase_resample(filter, buf.samples, out.samples);
  return out;
}

TrimResult trim_silence(const AudioBuffer& buf, const TrimOptions& opts) {
  if (buf.channels != 1) throw AudioError("trim_silence requires mono input");
  const double sr = buf.sample_rate_hz;
  const auto window = static_cast<std::size_t>(std::max(1L, std::lround(opts.window_s * sr)));
  const auto hop = static_cast<std::size_t>(std::max(1L, std::lround(opts.hop_s * sr)));
  const auto keep = static_cast<std::size_t>(std::max(0L, std::lround(opts.max_edge_silence_s * sr)));
  const std::size_t n = buf.samples.size();

  TrimResult res;
  const auto rms = kernels::frame_rms(buf.samples, window, hop);
  const double peak = rms.empty() ? 0.0 : *std::max_element(rms.begin(), rms.end());
  auto voiced = [&](double r) { return peak > 0.0 && r > 0.0 && 20.0 * std::log10(r / peak) >= -opts.threshold_db; };

  std::size_t first = rms.size(), last = 0;
  for (std::size_t i = 0; i < rms.size(); ++i) {
    if (voiced(rms[i])) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == rms.size()) {
    res.empty = true;
    res.trimmed.sample_rate_hz = buf.sample_rate_hz;
    res.trimmed.channels = 1;
    res.leading_removed_frames = n;
    res.leading_removed_s = buf.duration_s();
    return res;
  }

  // Bound the voiced region with the neighbouring silent frames: the onset lies
  // after the end of frame first-1 and the offset before the start of frame last+1.
  const std::size_t voice_begin = first == 0 ? 0 : std::min(n, first * hop + window - std::min(window, hop));
  const std::size_t voice_end = last + 1 >= rms.size() ? n : std::min(n, (last + 1) * hop);
  // Never cut into a voiced frame's window.
  std::size_t begin = voice_begin > keep ? voice_begin - keep : 0;
  begin = std::min(begin, first * hop);
  std::size_t end = std::min(n, voice_end + keep);
  end = std::max(end, std::min(n, last * hop + window));

  res.trimmed = slice_frames(buf, begin, end);
  res.leading_removed_frames = begin;
  res.trailing_removed_frames = n - end;
  res.leading_removed_s = begin / sr;
  res.trailing_removed_s = (n - end) / sr;
  return res;
}

}  // namespace curate
