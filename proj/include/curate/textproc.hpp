#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace curate {

/// Lowercases, turns punctuation into token breaks, drops apostrophes and
/// collapses whitespace. Punctuation is Unicode P* plus backtick, the
/// apostrophe/quote family and the markup brackets `<` `>`.
std::string strip_pc(std::string_view text);

/// strip_pc output with, for every output byte, the original byte range it came from.
struct StrippedText {
  std::string text;
  std::vector<std::size_t> source_begin;
  std::vector<std::size_t> source_end;
};
StrippedText strip_pc_mapped(std::string_view text);

struct TranscriptMatch {
  bool matched = false;
  /// Byte range [begin, end) of restored_text within the original chapter text.
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string restored_text;
  /// Number of positions the transcript occurs at; the first one is returned.
  std::size_t occurrences = 0;

  bool ambiguous() const { return occurrences > 1; }
};

/// Token-level index over one chapter's text for repeated transcript lookups.
/// Immutable after construction; safe to share across threads.
class ChapterIndex {
 public:
  explicit ChapterIndex(std::string chapter_text);

  TranscriptMatch find(std::string_view transcript) const;
  const std::string& original() const { return original_; }
  const std::string& normalized() const { return stripped_.text; }
  std::size_t token_count() const { return token_begin_.size(); }

 private:
  std::string original_;
  StrippedText stripped_;
  std::vector<std::size_t> token_begin_;
  std::vector<std::size_t> token_end_;
  std::vector<std::uint64_t> prefix_hash_;
};

TranscriptMatch match_transcript(std::string_view transcript, std::string_view chapter_text);

struct ArtifactRule {
  std::vector<std::string> tokens;  // lowercase, matched on whole tokens
  std::string replacement;          // empty deletes
};

struct NormalizationRules {
  /// Lowercase source token (may carry trailing punctuation such as "mr.") -> spoken form.
  std::unordered_map<std::string, std::string> abbreviation_expansions;
  std::vector<ArtifactRule> artifact_patterns;

  static NormalizationRules defaults();
  /// `token<TAB>expansion` lines; `#` starts a comment.
  void load_expansions(const std::filesystem::path& path);
  /// One artifact per line, optionally `pattern<TAB>replacement`.
  void load_artifacts(const std::filesystem::path& path);
};

/// Removes HTML tags, decodes character entities and deletes artifact token sequences.
std::string clean_formatting(std::string_view text, const NormalizationRules& rules);

struct NormalizeResult {
  std::string text;
  /// Tokens with digits or symbols that no rule verbalized.
  std::vector<std::string> unverbalized;
};

/// Expands rule-table abbreviations, carrying the source token's capitalization.
NormalizeResult normalize_spoken(std::string_view text, const NormalizationRules& rules);

struct EditStats {
  std::size_t word_edits = 0;
  std::size_t ref_words = 0;
  std::size_t char_edits = 0;
  std::size_t ref_chars = 0;
  double wer_pct = 0.0;
  double cer_pct = 0.0;
};

/// Word and character Levenshtein statistics on strip_pc-normalized text.
/// Throws EmptyReferenceError when the normalized reference is empty.
EditStats edit_stats(std::string_view ref, std::string_view hyp);

/// edit_stats over many pairs, parallel over pairs.
std::vector<EditStats> batch_edit_stats(std::span<const std::string> refs, std::span<const std::string> hyps);

/// True iff cer_pct < max_cer_pct.
bool passes_cer_gate(const EditStats& stats, double max_cer_pct = 100.0);
bool passes_cer_gate(double cer_pct, double max_cer_pct = 100.0);

std::u32string utf8_to_u32(std::string_view s);
std::string u32_to_utf8(std::u32string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace curate
