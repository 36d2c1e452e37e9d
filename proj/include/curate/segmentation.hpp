#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curate/manifest.hpp"

namespace curate {

/// One aligned word, times relative to the start of the utterance audio.
struct AlignmentToken {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const AlignmentToken&) const = default;
};

using AlignmentTrack = std::vector<AlignmentToken>;

/// Silence between the word at `after_token` and the next one.
struct Pause {
  double gap_start_s = 0.0;
  double gap_end_s = 0.0;
  std::size_t after_token = 0;

  double length() const { return gap_end_s - gap_start_s; }
  double midpoint() const { return 0.5 * (gap_start_s + gap_end_s); }
};

struct SplitDecision {
  std::optional<double> split_point_s;
  std::vector<Pause> candidate_pauses;
  std::optional<std::size_t> chosen_index;
};

/// Lowercase, period-free forms ("mr", "dr", ...).
using AbbreviationSet = std::set<std::string, std::less<>>;

AbbreviationSet default_abbreviations();
/// One abbreviation per line, `#` comments; trailing periods are ignored.
AbbreviationSet read_abbreviations(const std::filesystem::path& path);

/// Pauses of at least `min_pause_s` that follow a sentence-final period.
/// Throws SegmentationError when the transcript and track disagree in token count.
std::vector<Pause> find_candidate_pauses(std::span<const AlignmentToken> track, std::string_view transcript,
                                         double min_pause_s = 0.08,
                                         const AbbreviationSet& abbreviations = default_abbreviations());

/// Longest pause; ties broken uniformly by a generator seeded with `rng_seed`.
SplitDecision choose_split(std::span<const Pause> pauses, std::uint64_t rng_seed);

/// Per-utterance seed: hash of the id mixed with the global seed.
std::uint64_t utterance_seed(std::string_view utterance_id, std::uint64_t global_seed);

/// Splits `rec` at the decision's point into `_a` and `_b` children.
/// With no split point, returns `rec` unchanged.
std::vector<UtteranceRecord> apply_split(const UtteranceRecord& rec, const SplitDecision& decision);

/// splitmix64; used for every seeded choice in the pipeline.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

AlignmentTrack alignment_from_json(const Json& tokens);
/// A single JSON array of {word, start, end}.
AlignmentTrack read_alignment_json(const std::filesystem::path& path);
/// JSONL rows {utterance_id, tokens: [{word, start, end}, ...]}.
std::map<std::string, AlignmentTrack> read_alignments_jsonl(const std::filesystem::path& path);
/// `utt channel start dur word` lines.
std::map<std::string, AlignmentTrack> read_ctm(const std::filesystem::path& path);

}  // namespace curate
