#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "curate/manifest.hpp"

namespace curate {

enum class Stage { Text, Audio, Bandwidth, Segmentation, Validation, Speakers, Stats };

/// Stages in execution order.
const std::vector<Stage>& all_stages();
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

struct PipelineThresholds {
  double trim_threshold_db = 50.0;
  double max_edge_silence_s = 0.5;
  double trim_window_s = 0.025;
  double trim_hop_s = 0.010;
  int target_sample_rate_hz = 44100;
  double bandwidth_threshold_db = -50.0;
  double bandwidth_head_s = 30.0;
  double bandwidth_window_s = 2048.0 / 44100.0;
  double bandwidth_hop_s = 1024.0 / 44100.0;
  double min_pause_s = 0.08;
  /// Only utterances at least this long are considered for splitting.
  double split_min_duration_s = 10.0;
  /// Records longer than this after segmentation are dropped.
  double max_duration_s = 20.0;
  double max_cer_pct = 100.0;
  double subset_22k_min_bandwidth_hz = 11000.0;
  double subset_44k_min_bandwidth_hz = 13000.0;

  bool operator==(const PipelineThresholds&) const = default;
};

struct PipelineConfig {
  /// Relative paths inside manifests resolve against data_root.
  std::string input_manifest;
  std::string chapters;
  std::string alignments;      // .jsonl, .ctm, or a directory of <utterance_id>.json
  std::string hypotheses;      // {utterance_id, hyp_text}
  std::string speaker_counts;  // {utterance_id, num_speakers}
  std::string predicted_pc;    // optional {utterance_id, text}
  std::string data_root = ".";
  std::string output_dir = "out";

  std::map<Stage, bool> stages;  // every stage present; default all enabled
  int workers = 1;
  std::uint64_t seed = 0;
  std::string decoder_command;  // WAV to stdout; empty: WAV inputs only
  std::string encoder_command;  // {input} WAV -> {output}; empty: keep WAV
  std::string encoded_extension = ".flac";

  std::string abbreviations_path;  // empty: built-in list
  std::string expansions_path;     // added to the built-in expansion table
  std::string artifacts_path;      // added to the built-in artifact list

  PipelineThresholds thresholds;

  PipelineConfig();
  bool enabled(Stage s) const { return stages.at(s); }
  bool operator==(const PipelineConfig&) const = default;
};

Json to_json(const PipelineConfig& config);
/// Missing keys take defaults; unknown keys throw ConfigError.
PipelineConfig config_from_json(const Json& j);
PipelineConfig read_config(const std::filesystem::path& path);
void write_config(const PipelineConfig& config, const std::filesystem::path& path);
/// Makes every relative path absolute against `base` (the config file's directory).
PipelineConfig resolve_paths(PipelineConfig config, const std::filesystem::path& base);

/// Empty iff the config is usable. Each message names the field.
std::vector<std::string> validate_config(const PipelineConfig& config);

struct StageReport {
  Stage stage = Stage::Text;
  std::string output;
  std::size_t records_in = 0;
  std::size_t records_out = 0;
  std::size_t records_added = 0;
  std::size_t records_dropped = 0;
  std::size_t rejects = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::vector<std::string> warnings;
  Json details = Json::object();
};

Json to_json(const StageReport& report);

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitStage = 2, kExitPartial = 3 };

struct PipelineResult {
  int exit_code = kExitOk;
  std::vector<StageReport> reports;
  std::string error;
};

/// Runs the enabled stages in order. Each stage reads the previous stage's
/// manifest and writes `NN_<stage>.jsonl`, a report and a rejects file under
/// output_dir; the last manifest is copied to `manifest.jsonl`.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace curate
