#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curate/manifest.hpp"

namespace curate {

struct SpeakerCountRecord {
  std::string utterance_id;
  int num_speakers = 0;
};

std::vector<SpeakerCountRecord> read_speaker_counts(const std::filesystem::path& path);

struct SpeakerCountResult {
  std::vector<UtteranceRecord> records;
  /// Utterances with no count; their num_speakers stays absent.
  std::vector<std::string> missing;
  bool counts_empty = false;
};

/// Stamps diarization speaker counts. Duplicate ids in `counts` throw ManifestError.
SpeakerCountResult apply_speaker_counts(std::vector<UtteranceRecord> records,
                                        std::span<const SpeakerCountRecord> counts);

/// Keeps records passing every gate of `spec`, in input order.
/// Throws StageOrderError when a gate needs a field that is absent.
std::vector<UtteranceRecord> build_subset(std::span<const UtteranceRecord> records, const SubsetSpec& spec);
bool passes_subset(const UtteranceRecord& rec, const SubsetSpec& spec);

struct Triplet {
  std::string context_utterance_id;
  std::string transcript;
  std::string target_utterance_id;
  double context_duration_s = 0.0;
};

using SimilarityMap = std::map<std::pair<std::string, std::string>, double>;

/// JSONL rows {context_id, target_id, sim}.
SimilarityMap read_similarities(const std::filesystem::path& path);

struct TripletOptions {
  double max_cer_pct = 3.0;       // inclusive
  double min_speaker_sim = 0.6;   // inclusive
  double context_s = 5.0;
  double context_tolerance_s = 0.5;
};

struct TripletResult {
  std::vector<Triplet> triplets;
  std::size_t missing_similarity = 0;
  std::size_t failed_cer = 0;
  std::size_t failed_similarity = 0;
  std::size_t no_context = 0;
};

/// One triplet per target: the context is the same-speaker utterance closest to
/// 5 s inside [4.5, 5.5] s, else the first longer one cropped to 5 s.
TripletResult build_triplets(std::span<const UtteranceRecord> records, const SimilarityMap& sims,
                             const TripletOptions& opts = {});

enum class SplitName { Train, DevSeen, TestSeen, DevUnseen, TestUnseen };
std::string_view to_string(SplitName s);

struct SplitPlan {
  SplitName split_name = SplitName::Train;
  std::vector<std::string> utterance_ids;
};

struct EvalSplitOptions {
  double min_bandwidth_hz = 13000.0;
  int num_speakers = 50;
  int utterances_per_speaker = 20;  // per split
  double min_speaker_minutes = 15.0;
  double max_speaker_minutes = 60.0;
  int max_gender_imbalance = 2;
};

struct EvalSplits {
  std::vector<SplitPlan> plans;  // train, dev_seen, test_seen, then unseen plans when given
  std::vector<std::string> selected_speakers;
  bool gender_balanced = true;

  const SplitPlan& plan(SplitName name) const;
};

/// Seen-speaker dev/test sampling. Eligible utterances have bandwidth >= 13 kHz,
/// zero WER and one speaker; speakers need 15-60 minutes of total audio.
/// Utterances from `unseen_dev` / `unseen_test` form the unseen plans; speakers
/// overlapping the training set are dropped from them.
EvalSplits sample_eval_splits(std::span<const UtteranceRecord> records, std::uint64_t rng_seed,
                              const EvalSplitOptions& opts = {},
                              std::span<const UtteranceRecord> unseen_dev = {},
                              std::span<const UtteranceRecord> unseen_test = {});

/// Fixed-width histogram with an overflow bucket and a count of records lacking the value.
struct Histogram {
  double bin_width = 1.0;
  std::vector<std::size_t> bins;
  std::size_t overflow = 0;
  std::size_t missing = 0;

  Histogram() = default;
  Histogram(double width, std::size_t count) : bin_width(width), bins(count, 0) {}
  void add(std::optional<double> value);
  void merge(const Histogram& other);
  std::size_t total() const;
  bool operator==(const Histogram&) const = default;
};

struct StatsReport {
  std::size_t utterances = 0;
  std::size_t speakers = 0;
  double total_hours = 0.0;
  double multi_speaker_hours = 0.0;
  std::size_t book_match = 0;
  double book_match_ratio = 0.0;
  /// Mean rates with each value capped at 200 %.
  double mean_wer_pct = 0.0;
  double mean_cer_pct = 0.0;
  Histogram duration{0.5, 40};     // [0, 20) s
  Histogram bandwidth{250.0, 96};  // [0, 24000) Hz
  Histogram wer{1.0, 100};         // [0, 100) %, overflow >= 100
  Histogram cer{1.0, 100};
};

StatsReport corpus_stats(std::span<const UtteranceRecord> records, int workers = 1);
Json to_json(const StatsReport& report);
std::string render_table(const StatsReport& report);
/// histogram,bin_start,bin_end,count rows.
std::string histogram_csv(const StatsReport& report);

}  // namespace curate
