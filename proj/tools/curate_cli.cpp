// curate: speech-corpus curation pipeline front end.
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "curate/curation.hpp"
#include "curate/error.hpp"
#include "curate/ingest.hpp"
#include "curate/manifest.hpp"
#include "curate/pipeline.hpp"

namespace fs = std::filesystem;
using namespace curate;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_text_atomic(path, text);
}

int cmd_run(const std::string& config_path, const std::string& stages, std::optional<std::uint64_t> seed,
            std::optional<int> workers) {
  PipelineConfig config;
  try {
    config = resolve_paths(read_config(config_path), fs::absolute(config_path).parent_path());
    if (!stages.empty()) {
      for (auto& [s, on] : config.stages) on = false;
      for (const auto& name : split_csv(stages)) config.stages[parse_stage(name)] = true;
    }
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed) config.seed = *seed;
  if (workers) config.workers = *workers;
  const auto result = run_pipeline(config);
  if (result.exit_code == kExitConfig) std::cerr << "config error: " << result.error << "\n";
  if (result.exit_code == kExitStage) std::cerr << "stage failure: " << result.error << "\n";
  if (result.exit_code == kExitPartial) std::cerr << "completed with rejected records\n";
  return result.exit_code;
}

int cmd_stats(const std::string& manifest, const std::string& json_out, const std::string& csv_out, int workers) {
  const auto records = read_manifest(manifest);
  const auto report = corpus_stats(records, workers);
  std::cout << render_table(report);
  if (!json_out.empty()) write_text_atomic(json_out, to_json(report).dump(2) + "\n");
  if (!csv_out.empty()) write_text_atomic(csv_out, histogram_csv(report));
  return 0;
}

int cmd_subset(const std::string& manifest, const std::string& spec_path, const std::string& out) {
  const auto records = read_manifest(manifest);
  const auto subset = build_subset(records, read_subset_spec(spec_path));
  std::string text;
  for (const auto& r : subset) text += to_json(r).dump(-1) + "\n";
  emit(text, out);
  std::cerr << subset.size() << " of " << records.size() << " records kept\n";
  return 0;
}

int cmd_splits(const std::string& manifest, std::uint64_t seed, const std::string& out, const std::string& unseen_dev,
               const std::string& unseen_test) {
  const auto records = read_manifest(manifest);
  std::vector<UtteranceRecord> dev, test;
  if (!unseen_dev.empty()) dev = read_manifest(unseen_dev);
  if (!unseen_test.empty()) test = read_manifest(unseen_test);
  const auto splits = sample_eval_splits(records, seed, {}, dev, test);
  Json j = Json::object();
  j["seed"] = seed;
  j["selected_speakers"] = splits.selected_speakers;
  j["gender_balanced"] = splits.gender_balanced;
  Json plans = Json::object();
  for (const auto& p : splits.plans) plans[std::string(to_string(p.split_name))] = p.utterance_ids;
  j["plans"] = std::move(plans);
  emit(j.dump(2) + "\n", out);
  if (!splits.gender_balanced) std::cerr << "warning: selected speakers are not gender balanced\n";
  for (const auto& p : splits.plans)
    std::cerr << to_string(p.split_name) << ": " << p.utterance_ids.size() << " utterances\n";
  return 0;
}

int cmd_triplets(const std::string& manifest, const std::string& sims, const std::string& out) {
  const auto records = read_manifest(manifest);
  const auto res = build_triplets(records, read_similarities(sims));
  std::string text;
  for (const auto& t : res.triplets) {
    Json j = Json::object();
    j["context_utterance_id"] = t.context_utterance_id;
    j["transcript"] = t.transcript;
    j["target_utterance_id"] = t.target_utterance_id;
    j["context_duration_s"] = t.context_duration_s;
    text += j.dump(-1) + "\n";
  }
  emit(text, out);
  std::cerr << res.triplets.size() << " triplets; dropped: cer " << res.failed_cer << ", similarity "
            << res.failed_similarity << ", missing similarity " << res.missing_similarity << ", no context "
            << res.no_context << "\n";
  return 0;
}

int cmd_catalog(CatalogQuery q, const std::string& exclusions, const std::string& chapters_out,
                const std::string& urls_out, const std::string& audio_dir) {
  auto res = fetch_catalog(q);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  auto entries = std::move(res.entries);
  if (!exclusions.empty()) {
    auto ex = apply_exclusions(std::move(entries), read_exclusions(exclusions));
    std::cerr << "excluded " << ex.removed_chapters << " chapters, " << ex.removed_books << " books\n";
    entries = std::move(ex.entries);
  }
  if (!chapters_out.empty()) write_chapters(to_chapter_records(entries, audio_dir), chapters_out);
  if (!urls_out.empty()) write_text_atomic(urls_out, download_list(entries));
  std::size_t chapters = 0;
  for (const auto& e : entries) chapters += e.chapters.size();
  std::cerr << entries.size() << " books, " << chapters << " chapters from " << res.pages << " pages\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-corpus curation pipeline"};
  app.require_subcommand(1);

  std::string config_path, stages, manifest, spec, out, json_out, csv_out, unseen_dev, unseen_test, sims;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::uint64_t split_seed = 0;
  int stat_workers = 1;

  auto* run = app.add_subcommand("run", "Run the pipeline stages");
  run->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--stages", stages, "Comma-separated stages to enable (default: as configured)");
  run->add_option("--seed", seed, "Override the global RNG seed");
  run->add_option("--workers", workers, "Override the worker count");

  auto* stats = app.add_subcommand("stats", "Corpus statistics for a manifest");
  stats->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  stats->add_option("--json", json_out, "Write the report as JSON");
  stats->add_option("--csv", csv_out, "Write histograms as CSV");
  stats->add_option("--workers", stat_workers)->check(CLI::PositiveNumber);

  auto* subset = app.add_subcommand("subset", "Filter a manifest with a subset spec");
  subset->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  subset->add_option("--spec", spec, "Subset spec (JSON)")->required()->check(CLI::ExistingFile);
  subset->add_option("--out", out, "Output manifest (default: stdout)");

  auto* splits = app.add_subcommand("splits", "Sample dev/test splits");
  splits->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  splits->add_option("--seed", split_seed)->required();
  splits->add_option("--out", out, "Output JSON (default: stdout)");
  splits->add_option("--unseen-dev", unseen_dev, "Manifest of unseen-speaker dev candidates");
  splits->add_option("--unseen-test", unseen_test, "Manifest of unseen-speaker test candidates");

  auto* triplets = app.add_subcommand("triplets", "Build (context, transcript, target) triplets");
  triplets->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  triplets->add_option("--similarities", sims, "JSONL {context_id, target_id, sim}")->required()->check(CLI::ExistingFile);
  triplets->add_option("--out", out, "Output JSONL (default: stdout)");

  CatalogQuery query;
  int backoff_ms = static_cast<int>(query.backoff.count());
  std::string exclusions, chapters_out, urls_out, audio_dir = "audio";
  auto* catalog = app.add_subcommand("catalog", "Fetch catalog metadata from a LibriVox-style API");
  catalog->add_option("--base-url", query.base_url)->required();
  catalog->add_option("--path", query.path, "API path")->capture_default_str();
  catalog->add_option("--language", query.language);
  catalog->add_option("--page-size", query.page_size)->capture_default_str()->check(CLI::PositiveNumber);
  catalog->add_option("--max-retries", query.max_retries)->capture_default_str()->check(CLI::PositiveNumber);
  catalog->add_option("--concurrency", query.concurrency)->capture_default_str()->check(CLI::PositiveNumber);
  catalog->add_option("--backoff-ms", backoff_ms)->capture_default_str();
  catalog->add_option("--exclusions", exclusions, "Opted-out speaker ids")->check(CLI::ExistingFile);
  catalog->add_option("--chapters-out", chapters_out, "Write chapter records (JSONL)");
  catalog->add_option("--urls-out", urls_out, "Write chapter_id<TAB>url download list");
  catalog->add_option("--audio-dir", audio_dir, "Audio directory recorded in chapter records")->capture_default_str();

  auto* check = app.add_subcommand("check-config", "Validate a pipeline config");
  check->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, stages, seed, workers);
    if (*stats) return cmd_stats(manifest, json_out, csv_out, stat_workers);
    if (*subset) return cmd_subset(manifest, spec, out);
    if (*splits) return cmd_splits(manifest, split_seed, out, unseen_dev, unseen_test);
    if (*triplets) return cmd_triplets(manifest, sims, out);
    if (*catalog) {
      query.backoff = std::chrono::milliseconds(backoff_ms);
      return cmd_catalog(query, exclusions, chapters_out, urls_out, audio_dir);
    }
    if (*check) {
      const auto violations = validate_config(read_config(config_path));
      for (const auto& v : violations) std::cerr << v << "\n";
      if (violations.empty()) std::cerr << "ok\n";
      return violations.empty() ? kExitOk : kExitConfig;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
