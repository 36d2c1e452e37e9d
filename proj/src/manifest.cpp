#include "curate/manifest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "curate/error.hpp"

namespace curate {

namespace {

// Schema keys in output order; anything else is carried in `extra`.
constexpr std::string_view kUtteranceKeys[] = {
    "utterance_id", "book_id",  "chapter_id",   "speaker_id", "audio_path",
    "offset_s",     "duration_s", "text",       "text_source", "raw_text",
    "bandwidth_hz", "wer_pct",  "cer_pct",      "num_speakers", "gender"};

constexpr std::string_view kChapterKeys[] = {"chapter_id",     "book_id",      "speaker_id",
                                             "audio_path",     "sample_rate_hz", "bandwidth_hz",
                                             "book_text_path"};

template <std::size_t N>
bool is_known(const std::string& key, const std::string_view (&keys)[N]) {
  for (auto k : keys)
    if (k == key) return true;
  return false;
}

template <typename T>
T required(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ManifestError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ManifestError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ManifestError(std::string("field '") + key + "' has the wrong type");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(TextSource s) {
  return s == TextSource::BookMatch ? "book_match" : "predicted_pc";
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::Male: return "m";
    case Gender::Female: return "f";
    default: return "unknown";
  }
}

TextSource parse_text_source(std::string_view s) {
  if (s == "book_match") return TextSource::BookMatch;
  if (s == "predicted_pc") return TextSource::PredictedPc;
  throw ManifestError("invalid text_source '" + std::string(s) + "'");
}

Gender parse_gender(std::string_view s) {
  if (s == "m") return Gender::Male;
  if (s == "f") return Gender::Female;
  if (s == "unknown") return Gender::Unknown;
  throw ManifestError("invalid gender '" + std::string(s) + "'");
}

std::int64_t to_ticks(double seconds) { return std::llround(seconds * kTicksPerSecond); }
double from_ticks(std::int64_t ticks) { return static_cast<double>(ticks) / kTicksPerSecond; }
double round_seconds(double seconds) { return from_ticks(to_ticks(seconds)); }

SubsetSpec SubsetSpec::full_band_22k() {
  SubsetSpec s;
  s.min_bandwidth_hz = 11000.0;
  s.max_cer_pct = 100.0;
  s.target_sample_rate_hz = 22050;
  return s;
}

SubsetSpec SubsetSpec::high_band_44k() {
  SubsetSpec s;
  s.min_bandwidth_hz = 13000.0;
  s.max_cer_pct = 100.0;
  s.target_sample_rate_hz = 44100;
  return s;
}

SubsetSpec subset_spec_from_json(const Json& j) {
  SubsetSpec s;
  if (auto v = optional_field<double>(j, "min_bandwidth_hz")) s.min_bandwidth_hz = *v;
  if (auto v = optional_field<double>(j, "max_cer_pct")) s.max_cer_pct = *v;
  if (auto v = optional_field<int>(j, "max_num_speakers")) s.max_num_speakers = *v;
  if (auto v = optional_field<int>(j, "target_sample_rate_hz")) s.target_sample_rate_hz = *v;
  if (!(s.min_bandwidth_hz >= 0.0) || !std::isfinite(s.min_bandwidth_hz))
    throw ManifestError("min_bandwidth_hz must be finite and >= 0");
  if (!(s.max_cer_pct >= 0.0)) throw ManifestError("max_cer_pct must be >= 0");
  if (s.max_num_speakers < 0) throw ManifestError("max_num_speakers must be >= 0");
  if (s.target_sample_rate_hz <= 0) throw ManifestError("target_sample_rate_hz must be > 0");
  return s;
}

Json to_json(const SubsetSpec& spec) {
  Json j = Json::object();
  j["min_bandwidth_hz"] = spec.min_bandwidth_hz;
  if (spec.cer_gated()) j["max_cer_pct"] = spec.max_cer_pct;
  if (spec.speaker_gated()) j["max_num_speakers"] = spec.max_num_speakers;
  j["target_sample_rate_hz"] = spec.target_sample_rate_hz;
  return j;
}

SubsetSpec read_subset_spec(const std::filesystem::path& path) {
  try {
    return subset_spec_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
}

void validate(const UtteranceRecord& r) {
  if (r.utterance_id.empty()) throw ManifestError("utterance_id must be non-empty");
  if (!(r.offset_s >= 0.0) || !std::isfinite(r.offset_s))
    throw ManifestError("offset_s must be >= 0 (got " + std::to_string(r.offset_s) + ")");
  if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s))
    throw ManifestError("duration_s must be > 0 (got " + std::to_string(r.duration_s) + ")");
  if (r.bandwidth_hz && *r.bandwidth_hz < 0) throw ManifestError("bandwidth_hz must be >= 0");
  if (r.wer_pct && !(*r.wer_pct >= 0.0)) throw ManifestError("wer_pct must be >= 0");
  if (r.cer_pct && !(*r.cer_pct >= 0.0)) throw ManifestError("cer_pct must be >= 0");
  if (r.num_speakers && *r.num_speakers < 0) throw ManifestError("num_speakers must be >= 0");
}

void validate(const ChapterRecord& c) {
  if (c.chapter_id.empty()) throw ManifestError("chapter_id must be non-empty");
  if (c.sample_rate_hz < 0) throw ManifestError("sample_rate_hz must be >= 0");
  if (c.bandwidth_hz) {
    if (*c.bandwidth_hz <= 0) throw ManifestError("bandwidth_hz must be > 0");
    if (c.sample_rate_hz > 0 && 2 * *c.bandwidth_hz > c.sample_rate_hz)
      throw ManifestError("bandwidth_hz exceeds the Nyquist frequency");
  }
}

Json to_json(const UtteranceRecord& r) {
  Json j = Json::object();
  j["utterance_id"] = r.utterance_id;
  j["book_id"] = r.book_id;
  j["chapter_id"] = r.chapter_id;
  j["speaker_id"] = r.speaker_id;
  j["audio_path"] = r.audio_path;
  j["offset_s"] = round_seconds(r.offset_s);
  j["duration_s"] = round_seconds(r.duration_s);
  j["text"] = r.text;
  j["text_source"] = to_string(r.text_source);
  j["raw_text"] = r.raw_text;
  if (r.bandwidth_hz) j["bandwidth_hz"] = *r.bandwidth_hz;
  if (r.wer_pct) j["wer_pct"] = *r.wer_pct;
  if (r.cer_pct) j["cer_pct"] = *r.cer_pct;
  if (r.num_speakers) j["num_speakers"] = *r.num_speakers;
  j["gender"] = to_string(r.gender);
  for (const auto& [k, v] : r.extra.items())
    if (!is_known(k, kUtteranceKeys)) j[k] = v;
  return j;
}

UtteranceRecord utterance_from_json(const Json& j) {
  if (!j.is_object()) throw ManifestError("record is not a JSON object");
  UtteranceRecord r;
  r.utterance_id = required<std::string>(j, "utterance_id");
  r.book_id = required<std::string>(j, "book_id");
  r.chapter_id = required<std::string>(j, "chapter_id");
  r.speaker_id = required<std::string>(j, "speaker_id");
  r.audio_path = required<std::string>(j, "audio_path");
  r.offset_s = required<double>(j, "offset_s");
  r.duration_s = required<double>(j, "duration_s");
  r.raw_text = required<std::string>(j, "raw_text");
  r.text = optional_field<std::string>(j, "text").value_or(r.raw_text);
  if (auto s = optional_field<std::string>(j, "text_source")) r.text_source = parse_text_source(*s);
  r.bandwidth_hz = optional_field<int>(j, "bandwidth_hz");
  r.wer_pct = optional_field<double>(j, "wer_pct");
  r.cer_pct = optional_field<double>(j, "cer_pct");
  r.num_speakers = optional_field<int>(j, "num_speakers");
  if (auto g = optional_field<std::string>(j, "gender")) r.gender = parse_gender(*g);
  for (const auto& [k, v] : j.items())
    if (!is_known(k, kUtteranceKeys)) r.extra[k] = v;
  validate(r);
  return r;
}

Json to_json(const ChapterRecord& c) {
  Json j = Json::object();
  j["chapter_id"] = c.chapter_id;
  j["book_id"] = c.book_id;
  j["speaker_id"] = c.speaker_id;
  j["audio_path"] = c.audio_path;
  j["sample_rate_hz"] = c.sample_rate_hz;
  if (c.bandwidth_hz) j["bandwidth_hz"] = *c.bandwidth_hz;
  if (c.book_text_path) j["book_text_path"] = *c.book_text_path;
  for (const auto& [k, v] : c.extra.items())
    if (!is_known(k, kChapterKeys)) j[k] = v;
  return j;
}

ChapterRecord chapter_from_json(const Json& j) {
  if (!j.is_object()) throw ManifestError("record is not a JSON object");
  ChapterRecord c;
  c.chapter_id = required<std::string>(j, "chapter_id");
  c.book_id = optional_field<std::string>(j, "book_id").value_or("");
  c.speaker_id = optional_field<std::string>(j, "speaker_id").value_or("");
  c.audio_path = required<std::string>(j, "audio_path");
  c.sample_rate_hz = optional_field<int>(j, "sample_rate_hz").value_or(0);
  c.bandwidth_hz = optional_field<int>(j, "bandwidth_hz");
  c.book_text_path = optional_field<std::string>(j, "book_text_path");
  for (const auto& [k, v] : j.items())
    if (!is_known(k, kChapterKeys)) c.extra[k] = v;
  validate(c);
  return c;
}

std::vector<JsonLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<JsonLine> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      rows.push_back({line_no, Json::parse(line)});
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(std::string("malformed JSON: ") + e.what(), line_no);
    }
  }
  return rows;
}

namespace {

template <typename Record, typename FromJson>
std::vector<Record> read_records(const std::filesystem::path& path, FromJson from_json,
                                 std::string (*key)(const Record&), const char* key_name) {
  std::vector<Record> out;
  std::unordered_set<std::string> seen;
  for (const auto& [line, row] : read_jsonl(path)) {
    try {
      out.push_back(from_json(row));
    } catch (const ManifestError& e) {
      throw ManifestError(e.what(), line);
    }
    if (!seen.insert(key(out.back())).second)
      throw ManifestError(std::string("duplicate ") + key_name + " '" + key(out.back()) + "'", line);
  }
  return out;
}

template <typename Record>
std::string render(std::span<const Record> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
    out += '\n';
  }
  return out;
}

}  // namespace

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  return read_records<UtteranceRecord>(
      path, utterance_from_json, +[](const UtteranceRecord& r) { return r.utterance_id; },
      "utterance_id");
}

void write_manifest(std::span<const UtteranceRecord> records, const std::filesystem::path& path) {
  write_text_atomic(path, render(records));
}

std::vector<ChapterRecord> read_chapters(const std::filesystem::path& path) {
  return read_records<ChapterRecord>(
      path, chapter_from_json, +[](const ChapterRecord& c) { return c.chapter_id; }, "chapter_id");
}

void write_chapters(std::span<const ChapterRecord> records, const std::filesystem::path& path) {
  write_text_atomic(path, render(records));
}

void write_text_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace curate
