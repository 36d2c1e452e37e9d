#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace curate {

using Json = nlohmann::ordered_json;

enum class TextSource { BookMatch, PredictedPc };
enum class Gender { Male, Female, Unknown };

std::string_view to_string(TextSource s);
std::string_view to_string(Gender g);
TextSource parse_text_source(std::string_view s);
Gender parse_gender(std::string_view s);

/// Durations and offsets are stored with at most four fractional digits.
/// Tick arithmetic (1 tick = 100 us) keeps sums exact.
constexpr double kTicksPerSecond = 10000.0;
std::int64_t to_ticks(double seconds);
double from_ticks(std::int64_t ticks);
double round_seconds(double seconds);

/// One manifest row.
struct UtteranceRecord {
  std::string utterance_id;
  std::string book_id;
  std::string chapter_id;
  std::string speaker_id;
  std::string audio_path;
  double offset_s = 0.0;
  double duration_s = 0.0;
  std::string text;
  TextSource text_source = TextSource::PredictedPc;
  std::string raw_text;
  std::optional<int> bandwidth_hz;
  std::optional<double> wer_pct;
  std::optional<double> cer_pct;
  std::optional<int> num_speakers;
  Gender gender = Gender::Unknown;
  /// Fields not in the schema, kept in their original order.
  Json extra = Json::object();

  bool operator==(const UtteranceRecord&) const = default;
};

struct ChapterRecord {
  std::string chapter_id;
  std::string book_id;
  std::string speaker_id;
  std::string audio_path;
  int sample_rate_hz = 0;
  std::optional<int> bandwidth_hz;
  std::optional<std::string> book_text_path;
  Json extra = Json::object();

  bool operator==(const ChapterRecord&) const = default;
};

/// Declarative subset gates. An infinite `max_cer_pct` or the default
/// `max_num_speakers` disables that gate.
struct SubsetSpec {
  double min_bandwidth_hz = 0.0;
  double max_cer_pct = std::numeric_limits<double>::infinity();
  int max_num_speakers = std::numeric_limits<int>::max();
  int target_sample_rate_hz = 44100;

  bool cer_gated() const { return max_cer_pct != std::numeric_limits<double>::infinity(); }
  bool speaker_gated() const { return max_num_speakers != std::numeric_limits<int>::max(); }

  static SubsetSpec full_band_22k();
  static SubsetSpec high_band_44k();
};

SubsetSpec subset_spec_from_json(const Json& j);
Json to_json(const SubsetSpec& spec);
SubsetSpec read_subset_spec(const std::filesystem::path& path);

/// Throws ManifestError naming the first violated field.
void validate(const UtteranceRecord& rec);
void validate(const ChapterRecord& rec);

Json to_json(const UtteranceRecord& rec);
UtteranceRecord utterance_from_json(const Json& j);
Json to_json(const ChapterRecord& rec);
ChapterRecord chapter_from_json(const Json& j);

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const UtteranceRecord> records, const std::filesystem::path& path);

std::vector<ChapterRecord> read_chapters(const std::filesystem::path& path);
void write_chapters(std::span<const ChapterRecord> records, const std::filesystem::path& path);

/// Generic JSON-lines helpers. `read_jsonl` reports the offending line on parse failure.
struct JsonLine {
  std::size_t line;
  Json value;
};
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace curate
