#include "curate/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "curate/audio.hpp"
#include "curate/bandwidth.hpp"
#include "curate/curation.hpp"
#include "curate/error.hpp"
#include "curate/parallel.hpp"
#include "curate/segmentation.hpp"
#include "curate/textproc.hpp"

namespace curate {

namespace fs = std::filesystem;

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::Text,         Stage::Audio,      Stage::Bandwidth, Stage::Segmentation,
                                         Stage::Validation,   Stage::Speakers,   Stage::Stats};
  return stages;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Text: return "text";
    case Stage::Audio: return "audio";
    case Stage::Bandwidth: return "bandwidth";
    case Stage::Segmentation: return "segmentation";
    case Stage::Validation: return "validation";
    case Stage::Speakers: return "speakers";
    case Stage::Stats: return "stats";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : all_stages())
    if (to_string(s) == name) return s;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

PipelineConfig::PipelineConfig() {
  for (Stage s : all_stages()) stages[s] = true;
}

// ---------------------------------------------------------------------------
// Config file

namespace {

template <typename T>
void take(const Json& obj, const char* key, T& field) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      field = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + where + key + "'");
}

}  // namespace

Json to_json(const PipelineConfig& c) {
  Json j = Json::object();
  j["input_manifest"] = c.input_manifest;
  j["chapters"] = c.chapters;
  j["alignments"] = c.alignments;
  j["hypotheses"] = c.hypotheses;
  j["speaker_counts"] = c.speaker_counts;
  j["predicted_pc"] = c.predicted_pc;
  j["data_root"] = c.data_root;
  j["output_dir"] = c.output_dir;
  Json stages = Json::object();
  for (Stage s : all_stages()) stages[std::string(to_string(s))] = c.enabled(s);
  j["stages"] = std::move(stages);
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  j["decoder_command"] = c.decoder_command;
  j["encoder_command"] = c.encoder_command;
  j["encoded_extension"] = c.encoded_extension;
  j["rules"] = {{"abbreviations", c.abbreviations_path},
                {"expansions", c.expansions_path},
                {"artifacts", c.artifacts_path}};
  const auto& t = c.thresholds;
  j["thresholds"] = {{"trim_threshold_db", t.trim_threshold_db},
                     {"max_edge_silence_s", t.max_edge_silence_s},
                     {"trim_window_s", t.trim_window_s},
                     {"trim_hop_s", t.trim_hop_s},
                     {"target_sample_rate_hz", t.target_sample_rate_hz},
                     {"bandwidth_threshold_db", t.bandwidth_threshold_db},
                     {"bandwidth_head_s", t.bandwidth_head_s},
                     {"bandwidth_window_s", t.bandwidth_window_s},
                     {"bandwidth_hop_s", t.bandwidth_hop_s},
                     {"min_pause_s", t.min_pause_s},
                     {"split_min_duration_s", t.split_min_duration_s},
                     {"max_duration_s", t.max_duration_s},
                     {"max_cer_pct", t.max_cer_pct},
                     {"subset_22k_min_bandwidth_hz", t.subset_22k_min_bandwidth_hz},
                     {"subset_44k_min_bandwidth_hz", t.subset_44k_min_bandwidth_hz}};
  return j;
}

PipelineConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"input_manifest", "chapters", "alignments", "hypotheses", "speaker_counts", "predicted_pc",
                  "data_root", "output_dir", "stages", "workers", "seed", "decoder_command", "encoder_command",
                  "encoded_extension", "rules", "thresholds"},
                 "");
  PipelineConfig c;
  take(j, "input_manifest", c.input_manifest);
  take(j, "chapters", c.chapters);
  take(j, "alignments", c.alignments);
  take(j, "hypotheses", c.hypotheses);
  take(j, "speaker_counts", c.speaker_counts);
  take(j, "predicted_pc", c.predicted_pc);
  take(j, "data_root", c.data_root);
  take(j, "output_dir", c.output_dir);
  take(j, "workers", c.workers);
  take(j, "seed", c.seed);
  take(j, "decoder_command", c.decoder_command);
  take(j, "encoder_command", c.encoder_command);
  take(j, "encoded_extension", c.encoded_extension);
  if (auto it = j.find("stages"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config key 'stages' must be an object");
    for (const auto& [name, on] : it->items()) {
      if (!on.is_boolean()) throw ConfigError("config key 'stages." + name + "' must be a boolean");
      c.stages[parse_stage(name)] = on.get<bool>();
    }
  }
  if (auto it = j.find("rules"); it != j.end()) {
    reject_unknown(*it, {"abbreviations", "expansions", "artifacts"}, "rules.");
    take(*it, "abbreviations", c.abbreviations_path);
    take(*it, "expansions", c.expansions_path);
    take(*it, "artifacts", c.artifacts_path);
  }
  if (auto it = j.find("thresholds"); it != j.end()) {
    reject_unknown(*it,
                   {"trim_threshold_db", "max_edge_silence_s", "trim_window_s", "trim_hop_s", "target_sample_rate_hz",
                    "bandwidth_threshold_db", "bandwidth_head_s", "bandwidth_window_s", "bandwidth_hop_s",
                    "min_pause_s", "split_min_duration_s", "max_duration_s", "max_cer_pct",
                    "subset_22k_min_bandwidth_hz", "subset_44k_min_bandwidth_hz"},
                   "thresholds.");
    auto& t = c.thresholds;
    take(*it, "trim_threshold_db", t.trim_threshold_db);
    take(*it, "max_edge_silence_s", t.max_edge_silence_s);
    take(*it, "trim_window_s", t.trim_window_s);
    take(*it, "trim_hop_s", t.trim_hop_s);
    take(*it, "target_sample_rate_hz", t.target_sample_rate_hz);
    take(*it, "bandwidth_threshold_db", t.bandwidth_threshold_db);
    take(*it, "bandwidth_head_s", t.bandwidth_head_s);
    take(*it, "bandwidth_window_s", t.bandwidth_window_s);
    take(*it, "bandwidth_hop_s", t.bandwidth_hop_s);
    take(*it, "min_pause_s", t.min_pause_s);
    take(*it, "split_min_duration_s", t.split_min_duration_s);
    take(*it, "max_duration_s", t.max_duration_s);
    take(*it, "max_cer_pct", t.max_cer_pct);
    take(*it, "subset_22k_min_bandwidth_hz", t.subset_22k_min_bandwidth_hz);
    take(*it, "subset_44k_min_bandwidth_hz", t.subset_44k_min_bandwidth_hz);
  }
  return c;
}

PipelineConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config(const PipelineConfig& config, const fs::path& path) {
  write_text_atomic(path, to_json(config).dump(2) + "\n");
}

PipelineConfig resolve_paths(PipelineConfig c, const fs::path& base) {
  auto fix = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto* p : {&c.input_manifest, &c.chapters, &c.alignments, &c.hypotheses, &c.speaker_counts, &c.predicted_pc,
                  &c.data_root, &c.output_dir, &c.abbreviations_path, &c.expansions_path, &c.artifacts_path})
    fix(*p);
  return c;
}

std::vector<std::string> validate_config(const PipelineConfig& c) {
  std::vector<std::string> v;
  const auto& t = c.thresholds;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  auto finite = [](double x) { return std::isfinite(x); };
  need(!c.input_manifest.empty(), "input_manifest must be set");
  need(!c.output_dir.empty(), "output_dir must be set");
  need(c.workers >= 1, "workers must be >= 1");
  need(finite(t.trim_threshold_db) && t.trim_threshold_db > 0, "thresholds.trim_threshold_db must be > 0");
  need(finite(t.max_edge_silence_s) && t.max_edge_silence_s >= 0, "thresholds.max_edge_silence_s must be >= 0");
  need(finite(t.trim_window_s) && t.trim_window_s > 0, "thresholds.trim_window_s must be > 0");
  need(finite(t.trim_hop_s) && t.trim_hop_s > 0 && t.trim_hop_s <= t.trim_window_s,
       "thresholds.trim_hop_s must be in (0, trim_window_s]");
  need(t.target_sample_rate_hz > 0, "thresholds.target_sample_rate_hz must be > 0");
  need(finite(t.bandwidth_threshold_db) && t.bandwidth_threshold_db < 0,
       "thresholds.bandwidth_threshold_db must be < 0");
  need(finite(t.bandwidth_head_s) && t.bandwidth_head_s > 0, "thresholds.bandwidth_head_s must be > 0");
  need(finite(t.bandwidth_window_s) && t.bandwidth_window_s > 0, "thresholds.bandwidth_window_s must be > 0");
  need(finite(t.bandwidth_hop_s) && t.bandwidth_hop_s > 0, "thresholds.bandwidth_hop_s must be > 0");
  need(finite(t.min_pause_s) && t.min_pause_s >= 0, "thresholds.min_pause_s must be >= 0");
  need(finite(t.split_min_duration_s) && t.split_min_duration_s >= 0,
       "thresholds.split_min_duration_s must be >= 0");
  need(finite(t.max_duration_s) && t.max_duration_s > 0, "thresholds.max_duration_s must be > 0");
  need(finite(t.max_cer_pct) && t.max_cer_pct > 0, "thresholds.max_cer_pct must be > 0");
  need(finite(t.subset_22k_min_bandwidth_hz) && t.subset_22k_min_bandwidth_hz >= 0,
       "thresholds.subset_22k_min_bandwidth_hz must be >= 0");
  need(finite(t.subset_44k_min_bandwidth_hz) && t.subset_44k_min_bandwidth_hz >= 0,
       "thresholds.subset_44k_min_bandwidth_hz must be >= 0");
  need(c.decoder_command.empty() || c.decoder_command.find("{input}") != std::string::npos,
       "decoder_command must contain {input}");
  need(c.encoder_command.empty() || (c.encoder_command.find("{input}") != std::string::npos &&
                                     c.encoder_command.find("{output}") != std::string::npos),
       "encoder_command must contain {input} and {output}");
  need(c.encoder_command.empty() || (c.encoded_extension.size() > 1 && c.encoded_extension[0] == '.'),
       "encoded_extension must start with '.'");
  if (!c.input_manifest.empty() && !c.output_dir.empty()) {
    const bool rewrites = std::any_of(all_stages().begin(), all_stages().end(),
                                      [&](Stage s) { return s != Stage::Stats && c.enabled(s); });
    const auto final_manifest = (fs::path(c.output_dir) / "manifest.jsonl").lexically_normal();
    need(!rewrites || fs::path(c.input_manifest).lexically_normal() != final_manifest,
         "input_manifest must not be output_dir/manifest.jsonl");
  }
  return v;
}

Json to_json(const StageReport& r) {
  Json j = Json::object();
  j["stage"] = to_string(r.stage);
  j["output"] = r.output;
  j["records_in"] = r.records_in;
  j["records_dropped"] = r.records_dropped;
  j["records_added"] = r.records_added;
  j["records_out"] = r.records_out;
  j["rejects"] = r.rejects;
  Json reasons = Json::object();
  for (const auto& [k, n] : r.drop_reasons) reasons[k] = n;
  j["drop_reasons"] = std::move(reasons);
  j["warnings"] = r.warnings;
  j["details"] = r.details;
  return j;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct Context {
  const PipelineConfig& config;
  NormalizationRules rules;
  AbbreviationSet abbreviations;
};

/// Outcome of one record in one stage: kept records, or a drop/reject reason.
struct Outcome {
  std::vector<UtteranceRecord> keep;
  std::string drop_reason;
  std::string reject_reason;
};

struct StageOutput {
  std::vector<UtteranceRecord> records;
  std::vector<Json> rejects;
  StageReport report;
};

fs::path resolve(const std::string& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : fs::path(root) / path;
}

std::string stage_stem(Stage s) {
  const auto index = std::find(all_stages().begin(), all_stages().end(), s) - all_stages().begin() + 1;
  std::string n = std::to_string(index);
  if (n.size() < 2) n.insert(0, "0");
  return n + "_" + std::string(to_string(s));
}

/// Gathers per-record outcomes in input order into a stage output.
StageOutput collect(Stage stage, std::span<const UtteranceRecord> in, std::vector<Outcome>& outcomes) {
  StageOutput out;
  out.report.stage = stage;
  out.report.records_in = in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.reject_reason.empty()) {
      Json j = to_json(in[i]);
      j["reject_stage"] = to_string(stage);
      j["reject_reason"] = o.reject_reason;
      out.rejects.push_back(std::move(j));
      ++out.report.rejects;
      ++out.report.records_dropped;
      ++out.report.drop_reasons["rejected"];
      continue;
    }
    if (o.keep.empty()) {
      ++out.report.records_dropped;
      ++out.report.drop_reasons[o.drop_reason.empty() ? "dropped" : o.drop_reason];
      continue;
    }
    out.report.records_added += o.keep.size() - 1;
    for (auto& r : o.keep) out.records.push_back(std::move(r));
  }
  out.report.records_out = out.records.size();
  return out;
}

template <typename Fn>
StageOutput map_records(Stage stage, const Context& ctx, std::span<const UtteranceRecord> in, Fn&& fn) {
  std::vector<Outcome> outcomes(in.size());
  parallel_for(in.size(), ctx.config.workers, [&](std::size_t i) {
    try {
      outcomes[i] = fn(in[i]);
    } catch (const std::exception& e) {
      outcomes[i] = Outcome{{}, {}, e.what()};
    }
  });
  return collect(stage, in, outcomes);
}

Outcome keep(UtteranceRecord r) { return Outcome{{std::move(r)}, {}, {}}; }
Outcome drop(std::string reason) { return Outcome{{}, std::move(reason), {}}; }
Outcome reject(std::string reason) { return Outcome{{}, {}, std::move(reason)}; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, ChapterRecord> chapter_map(const PipelineConfig& c) {
  std::map<std::string, ChapterRecord> out;
  for (auto& ch : read_chapters(c.chapters)) out.emplace(ch.chapter_id, std::move(ch));
  return out;
}

std::map<std::string, std::string> read_text_table(const std::string& path, const char* key) {
  std::map<std::string, std::string> out;
  for (const auto& [line, row] : read_jsonl(path)) {
    try {
      auto id = row.at("utterance_id").get<std::string>();
      if (out.contains(id)) throw ManifestError("duplicate entry for " + id, line);
      out.emplace(std::move(id), row.at(key).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(e.what(), line);
    }
  }
  return out;
}

StageOutput text_stage(const Context& ctx, std::span<const UtteranceRecord> in) {
  const auto& c = ctx.config;
  const auto chapters = chapter_map(c);
  std::map<std::string, std::string> predicted;
  if (!c.predicted_pc.empty()) predicted = read_text_table(c.predicted_pc, "text");

  std::vector<std::string> ids;
  for (const auto& [id, ch] : chapters)
    if (ch.book_text_path) ids.push_back(id);
  std::vector<std::optional<ChapterIndex>> indexes(ids.size());
  std::vector<std::string> failures(ids.size());
  parallel_for(ids.size(), c.workers, [&](std::size_t i) {
    try {
      // Transcripts carry the book's markup residue ("nbsp", "p p"); both sides
      // are cleaned before the search.
      const auto raw = read_file(resolve(c.data_root, *chapters.at(ids[i]).book_text_path));
      indexes[i].emplace(clean_formatting(raw, ctx.rules));
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;

  auto out = map_records(Stage::Text, ctx, in, [&](const UtteranceRecord& rec) {
    if (!chapters.contains(rec.chapter_id)) return reject("unknown chapter " + rec.chapter_id);
    UtteranceRecord r = rec;
    r.extra.erase("match_occurrences");
    r.extra.erase("unverbalized");
    std::string punctuated;
    if (auto s = slot.find(rec.chapter_id); s != slot.end()) {
      if (!failures[s->second].empty()) return reject("book text: " + failures[s->second]);
      const auto m = indexes[s->second]->find(clean_formatting(rec.raw_text, ctx.rules));
      if (m.matched) {
        punctuated = m.restored_text;
        r.text_source = TextSource::BookMatch;
        if (m.ambiguous()) r.extra["match_occurrences"] = m.occurrences;
      }
    }
    if (punctuated.empty()) {
      r.text_source = TextSource::PredictedPc;
      auto p = predicted.find(rec.utterance_id);
      punctuated = p != predicted.end() ? p->second : rec.raw_text;
    }
    auto norm = normalize_spoken(clean_formatting(punctuated, ctx.rules), ctx.rules);
    if (split_whitespace(norm.text).empty()) return drop("empty text");
    r.text = std::move(norm.text);
    if (!norm.unverbalized.empty()) r.extra["unverbalized"] = norm.unverbalized;
    return keep(std::move(r));
  });
  std::size_t matched = 0;
  for (const auto& r : out.records) matched += r.text_source == TextSource::BookMatch;
  out.report.details["book_match"] = matched;
  out.report.details["predicted_pc"] = out.records.size() - matched;
  out.report.details["book_match_ratio"] =
      out.records.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(out.records.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!failures[i].empty()) out.report.warnings.push_back("chapter " + ids[i] + ": " + failures[i]);
  return out;
}

std::string file_stem_for(std::string id) {
  for (auto& ch : id)
    if (ch == '/' || ch == '\\') ch = '_';
  return id;
}

StageOutput audio_stage(const Context& ctx, std::span<const UtteranceRecord> in) {
  const auto& c = ctx.config;
  const auto& t = c.thresholds;
  const fs::path audio_dir = fs::path(c.output_dir) / "audio";
  fs::create_directories(audio_dir);

  // One task per source file so each chapter is decoded once.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < in.size(); ++i) groups[in[i].audio_path].push_back(i);
  std::vector<const std::vector<std::size_t>*> tasks;
  for (const auto& [path, members] : groups) tasks.push_back(&members);

  const TrimOptions trim{t.trim_threshold_db, t.max_edge_silence_s, t.trim_window_s, t.trim_hop_s};
  std::vector<Outcome> outcomes(in.size());
  parallel_for(tasks.size(), c.workers, [&](std::size_t g) {
    const auto& members = *tasks[g];
    AudioBuffer source;
    try {
      source = load_audio(resolve(c.data_root, in[members.front()].audio_path), c.decoder_command);
    } catch (const std::exception& e) {
      for (auto i : members) outcomes[i] = reject(e.what());
      return;
    }
    for (auto i : members) {
      try {
        const auto& rec = in[i];
        if (to_ticks(rec.offset_s + rec.duration_s) > to_ticks(source.duration_s()) + 1) {
          outcomes[i] = reject("span exceeds source audio");
          continue;
        }
        auto mono = mixdown(slice_seconds(source, rec.offset_s, rec.duration_s));
        auto res = trim_silence(resample(mono, t.target_sample_rate_hz), trim);
        if (res.empty) {
          outcomes[i] = drop("empty after trim");
          continue;
        }
        const double duration = round_seconds(res.trimmed.duration_s());
        if (duration <= 0) {
          outcomes[i] = drop("empty after trim");
          continue;
        }
        const auto stem = file_stem_for(rec.utterance_id);
        const auto wav = audio_dir / (stem + ".wav");
        std::string stored = "audio/" + stem + ".wav";
        save_pcm(res.trimmed, wav, SampleFormat::Float32);
        if (!c.encoder_command.empty()) {
          const auto encoded = audio_dir / (stem + c.encoded_extension);
          encode_with_command(c.encoder_command, wav, encoded);
          fs::remove(wav);
          stored = "audio/" + stem + c.encoded_extension;
        }
        UtteranceRecord r = rec;
        r.extra["source_audio_path"] = rec.audio_path;
        r.extra["source_offset_s"] = round_seconds(rec.offset_s);
        r.extra["trim_start_s"] = round_seconds(res.leading_removed_s);
        r.extra["sample_rate_hz"] = t.target_sample_rate_hz;
        r.audio_path = std::move(stored);
        r.offset_s = 0.0;
        r.duration_s = duration;
        outcomes[i] = keep(std::move(r));
      } catch (const std::exception& e) {
        outcomes[i] = reject(e.what());
      }
    }
  });
  return collect(Stage::Audio, in, outcomes);
}

StageOutput bandwidth_stage(const Context& ctx, std::span<const UtteranceRecord> in, const fs::path& chapters_out) {
  const auto& c = ctx.config;
  const auto& t = c.thresholds;
  auto chapters = chapter_map(c);
  std::vector<ChapterRecord*> list;
  for (auto& [id, ch] : chapters) list.push_back(&ch);
  std::vector<std::string> failures(list.size());
  std::vector<BandwidthEstimate> estimates(list.size());
  const BandwidthOptions opts{t.bandwidth_window_s, t.bandwidth_hop_s, t.bandwidth_threshold_db, t.bandwidth_head_s};
  const AudioLoader loader = [&](const ChapterRecord& ch) {
    return load_audio(resolve(c.data_root, ch.audio_path), c.decoder_command);
  };
  parallel_for(list.size(), c.workers, [&](std::size_t i) {
    try {
      estimates[i] = chapter_bandwidth(*list[i], loader, opts);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::vector<ChapterRecord> stamped;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < list.size(); ++i) {
    slot[list[i]->chapter_id] = i;
    stamped.push_back(*list[i]);
  }
  write_chapters(stamped, chapters_out);

  auto out = map_records(Stage::Bandwidth, ctx, in, [&](const UtteranceRecord& rec) {
    auto s = slot.find(rec.chapter_id);
    if (s == slot.end()) return reject("unknown chapter " + rec.chapter_id);
    if (!failures[s->second].empty()) return reject("chapter audio: " + failures[s->second]);
    const auto& ch = *list[s->second];
    if (!ch.bandwidth_hz) return drop("silent chapter head");
    // The stored audio may have a lower Nyquist than the chapter source.
    int nyquist = ch.sample_rate_hz / 2;
    if (auto sr = rec.extra.find("sample_rate_hz"); sr != rec.extra.end() && sr->is_number_integer())
      nyquist = sr->get<int>() / 2;
    UtteranceRecord r = rec;
    r.bandwidth_hz = std::min(*ch.bandwidth_hz, nyquist);
    return keep(std::move(r));
  });
  for (std::size_t i = 0; i < list.size(); ++i)
    if (!failures[i].empty()) out.report.warnings.push_back("chapter " + list[i]->chapter_id + ": " + failures[i]);
  Json per_chapter = Json::object();
  for (std::size_t i = 0; i < list.size(); ++i)
    if (failures[i].empty())
      per_chapter[list[i]->chapter_id] = {{"f_max_hz", estimates[i].f_max_hz}, {"analyzed_s", estimates[i].analyzed_s}};
  out.report.details["chapters"] = std::move(per_chapter);
  out.report.details["chapters_manifest"] = chapters_out.filename().string();
  return out;
}

class AlignmentSource {
 public:
  explicit AlignmentSource(const std::string& path) : path_(path) {
    if (fs::is_directory(path_)) return;
    tracks_ = path_.extension() == ".ctm" ? read_ctm(path_) : read_alignments_jsonl(path_);
  }

  std::optional<AlignmentTrack> find(const std::string& id) const {
    if (fs::is_directory(path_)) {
      const auto file = path_ / (file_stem_for(id) + ".json");
      if (!fs::exists(file)) return std::nullopt;
      return read_alignment_json(file);
    }
    auto it = tracks_.find(id);
    if (it == tracks_.end()) return std::nullopt;
    return it->second;
  }

 private:
  fs::path path_;
  std::map<std::string, AlignmentTrack> tracks_;
};

StageOutput segmentation_stage(const Context& ctx, std::span<const UtteranceRecord> in) {
  const auto& c = ctx.config;
  const auto& t = c.thresholds;
  const AlignmentSource alignments(c.alignments);
  const auto too_long = [&](const UtteranceRecord& r) { return to_ticks(r.duration_s) > to_ticks(t.max_duration_s); };

  std::vector<std::size_t> candidates(in.size(), 0);
  auto out = map_records(Stage::Segmentation, ctx, in, [&](const UtteranceRecord& rec) {
    if (rec.duration_s < t.split_min_duration_s) return too_long(rec) ? drop("longer than max_duration_s") : keep(rec);
    auto track = alignments.find(rec.utterance_id);
    if (!track) return reject("missing alignment");
    // Alignments are timed against the untrimmed utterance.
    double shift = 0.0;
    if (auto it = rec.extra.find("trim_start_s"); it != rec.extra.end() && it->is_number()) shift = it->get<double>();
    for (auto& tok : *track) {
      tok.start_s = std::max(0.0, tok.start_s - shift);
      tok.end_s = std::max(0.0, tok.end_s - shift);
    }
    const auto pauses = find_candidate_pauses(*track, rec.text, t.min_pause_s, ctx.abbreviations);
    const auto decision = choose_split(pauses, utterance_seed(rec.utterance_id, c.seed));
    auto children = apply_split(rec, decision);
    Outcome o;
    for (auto& child : children) {
      if (too_long(child)) continue;
      if (children.size() > 1) {
        child.extra.erase("trim_start_s");
        child.extra["split_from"] = rec.utterance_id;
      }
      o.keep.push_back(std::move(child));
    }
    if (o.keep.empty()) o.drop_reason = "longer than max_duration_s";
    return o;
  });
  std::size_t splits = 0;
  for (const auto& r : out.records) splits += r.extra.contains("split_from") && r.utterance_id.ends_with("_a");
  out.report.details["splits"] = splits;
  return out;
}

StageOutput validation_stage(const Context& ctx, std::span<const UtteranceRecord> in) {
  const auto& t = ctx.config.thresholds;
  const auto hyps = read_text_table(ctx.config.hypotheses, "hyp_text");
  return map_records(Stage::Validation, ctx, in, [&](const UtteranceRecord& rec) {
    auto h = hyps.find(rec.utterance_id);
    if (h == hyps.end()) return reject("missing hypothesis");
    const auto stats = edit_stats(rec.text, h->second);
    UtteranceRecord r = rec;
    r.wer_pct = stats.wer_pct;
    r.cer_pct = stats.cer_pct;
    if (!passes_cer_gate(stats, t.max_cer_pct)) return drop("cer_pct >= max_cer_pct");
    return keep(std::move(r));
  });
}

StageOutput speakers_stage(const Context& ctx, std::span<const UtteranceRecord> in) {
  const auto counts = read_speaker_counts(ctx.config.speaker_counts);
  auto res = apply_speaker_counts({in.begin(), in.end()}, counts);
  StageOutput out;
  out.report.stage = Stage::Speakers;
  out.report.records_in = in.size();
  out.records = std::move(res.records);
  out.report.records_out = out.records.size();
  if (res.counts_empty) out.report.warnings.push_back("speaker count file is empty");
  for (const auto& id : res.missing) out.report.warnings.push_back("no speaker count for " + id);
  out.report.details["missing"] = res.missing.size();
  return out;
}

Json stats_document(const PipelineConfig& c, std::span<const UtteranceRecord> records) {
  Json j = Json::object();
  j["stats"] = to_json(corpus_stats(records, c.workers));
  const bool have_bandwidth =
      std::all_of(records.begin(), records.end(), [](const auto& r) { return r.bandwidth_hz.has_value(); });
  if (have_bandwidth) {
    SubsetSpec s22, s44;
    s22.min_bandwidth_hz = c.thresholds.subset_22k_min_bandwidth_hz;
    s44.min_bandwidth_hz = c.thresholds.subset_44k_min_bandwidth_hz;
    auto hours = [](std::span<const UtteranceRecord> rs) {
      std::int64_t ticks = 0;
      for (const auto& r : rs) ticks += to_ticks(r.duration_s);
      return static_cast<double>(ticks) / kTicksPerSecond / 3600.0;
    };
    const auto a = build_subset(records, s22);
    const auto b = build_subset(records, s44);
    j["subsets"] = {{"full_band_22k", {{"utterances", a.size()}, {"hours", hours(a)}}},
                    {"high_band_44k", {{"utterances", b.size()}, {"hours", hours(b)}}}};
  }
  return j;
}

void write_jsonl(std::span<const Json> rows, const fs::path& path) {
  std::string out;
  for (const auto& r : rows) out += r.dump(-1) + "\n";
  write_text_atomic(path, out);
}

std::optional<std::string> missing_dependency(const PipelineConfig& c) {
  auto file = [](const std::string& p) { return !p.empty() && fs::exists(p); };
  if (!file(c.input_manifest)) return "input manifest '" + c.input_manifest + "' not found";
  if ((c.enabled(Stage::Text) || c.enabled(Stage::Bandwidth)) && !file(c.chapters))
    return std::string(c.enabled(Stage::Text) ? "text" : "bandwidth") + ": chapters file '" + c.chapters +
           "' not found";
  if (c.enabled(Stage::Text) && !c.predicted_pc.empty() && !file(c.predicted_pc))
    return "text: predicted_pc file '" + c.predicted_pc + "' not found";
  if (c.enabled(Stage::Segmentation) && !file(c.alignments))
    return "segmentation: alignments '" + c.alignments + "' not found";
  if (c.enabled(Stage::Validation) && !file(c.hypotheses))
    return "validation: hypotheses '" + c.hypotheses + "' not found";
  if (c.enabled(Stage::Speakers) && !file(c.speaker_counts))
    return "speakers: speaker counts '" + c.speaker_counts + "' not found";
  for (const auto* p : {&c.abbreviations_path, &c.expansions_path, &c.artifacts_path})
    if (!p->empty() && !file(*p)) return "rules file '" + *p + "' not found";
  return std::nullopt;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& c) {
  PipelineResult result;
  if (const auto v = validate_config(c); !v.empty()) {
    result.exit_code = kExitConfig;
    for (const auto& m : v) result.error += (result.error.empty() ? "" : "; ") + m;
    return result;
  }
  if (auto dep = missing_dependency(c)) {
    result.exit_code = kExitStage;
    result.error = *dep;
    return result;
  }

  Context ctx{c, NormalizationRules::defaults(), default_abbreviations()};
  std::vector<UtteranceRecord> records;
  try {
    if (!c.expansions_path.empty()) ctx.rules.load_expansions(c.expansions_path);
    if (!c.artifacts_path.empty()) ctx.rules.load_artifacts(c.artifacts_path);
    if (!c.abbreviations_path.empty()) ctx.abbreviations = read_abbreviations(c.abbreviations_path);
    records = read_manifest(c.input_manifest);
    fs::create_directories(c.output_dir);
  } catch (const std::exception& e) {
    result.exit_code = kExitStage;
    result.error = e.what();
    return result;
  }

  const fs::path out_dir(c.output_dir);
  fs::path last_manifest;
  bool any_rejects = false;
  for (Stage stage : all_stages()) {
    if (stage == Stage::Stats || !c.enabled(stage)) continue;
    const auto started = std::chrono::steady_clock::now();
    const auto stem = stage_stem(stage);
    StageOutput out;
    try {
      switch (stage) {
        case Stage::Text: out = text_stage(ctx, records); break;
        case Stage::Audio: out = audio_stage(ctx, records); break;
        case Stage::Bandwidth: out = bandwidth_stage(ctx, records, out_dir / (stem + ".chapters.jsonl")); break;
        case Stage::Segmentation: out = segmentation_stage(ctx, records); break;
        case Stage::Validation: out = validation_stage(ctx, records); break;
        case Stage::Speakers: out = speakers_stage(ctx, records); break;
        case Stage::Stats: break;
      }
      std::sort(out.records.begin(), out.records.end(),
                [](const auto& a, const auto& b) { return a.utterance_id < b.utterance_id; });
      std::sort(out.rejects.begin(), out.rejects.end(), [](const Json& a, const Json& b) {
        return a["utterance_id"].get<std::string>() < b["utterance_id"].get<std::string>();
      });
      last_manifest = out_dir / (stem + ".jsonl");
      out.report.output = last_manifest.filename().string();
      write_manifest(out.records, last_manifest);
      write_jsonl(out.rejects, out_dir / (stem + ".rejects.jsonl"));
      write_text_atomic(out_dir / (stem + ".report.json"), to_json(out.report).dump(2) + "\n");
    } catch (const std::exception& e) {
      result.exit_code = kExitStage;
      result.error = std::string(to_string(stage)) + ": " + e.what();
      return result;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cerr << "[" << to_string(stage) << "] in=" << out.report.records_in << " out=" << out.report.records_out
              << " dropped=" << out.report.records_dropped << " added=" << out.report.records_added
              << " rejected=" << out.report.rejects << " (" << std::fixed << std::setprecision(2) << secs << " s)\n";
    any_rejects = any_rejects || out.report.rejects > 0;
    records = std::move(out.records);
    result.reports.push_back(std::move(out.report));
  }

  try {
    if (!last_manifest.empty()) write_manifest(records, out_dir / "manifest.jsonl");
    if (c.enabled(Stage::Stats)) {
      const auto doc = stats_document(c, records);
      write_text_atomic(out_dir / "stats.json", doc.dump(2) + "\n");
      const auto report = corpus_stats(records, c.workers);
      write_text_atomic(out_dir / "stats.txt", render_table(report));
      write_text_atomic(out_dir / "histograms.csv", histogram_csv(report));
      std::cerr << "[stats] utterances=" << report.utterances << " hours=" << report.total_hours << "\n";
    }
  } catch (const std::exception& e) {
    result.exit_code = kExitStage;
    result.error = std::string("stats: ") + e.what();
    return result;
  }
  result.exit_code = any_rejects ? kExitPartial : kExitOk;
  return result;
}

}  // namespace curate
