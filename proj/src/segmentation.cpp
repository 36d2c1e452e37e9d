#include "curate/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "curate/error.hpp"
#include "curate/textproc.hpp"

namespace curate {

namespace {

// Gaps are compared with this slack so a planted 0.08 s pause survives
// binary rounding of its endpoints.
constexpr double kTimeEpsilon = 1e-9;

bool is_closer(char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}';
}

// Strips trailing closing quotes/brackets (ASCII and the UTF-8 right quotes).
std::string_view strip_closers(std::string_view w) {
  for (;;) {
    if (!w.empty() && is_closer(w.back())) {
      w.remove_suffix(1);
    } else if (w.size() >= 3 && (w.ends_with("”") || w.ends_with("’"))) {
      w.remove_suffix(3);
    } else if (w.size() >= 2 && w.ends_with("»")) {
      w.remove_suffix(2);
    } else {
      return w;
    }
  }
}

bool ends_sentence(std::string_view word, const AbbreviationSet& abbreviations) {
  const auto body = strip_closers(word);
  if (body.empty() || body.back() != '.') return false;
  const auto core = strip_pc(body);
  if (core.empty()) return true;
  return !abbreviations.contains(core);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string canonical_abbreviation(std::string_view s) {
  while (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return strip_pc(s);
}

}  // namespace

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

AbbreviationSet default_abbreviations() {
  return {"mr", "mrs", "dr", "st", "jr", "sr", "prof", "rev", "hon", "vs", "etc", "no"};
}

AbbreviationSet read_abbreviations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open abbreviation list " + path.string());
  AbbreviationSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto a = canonical_abbreviation(line);
    if (!a.empty()) out.insert(std::move(a));
  }
  return out;
}

std::vector<Pause> find_candidate_pauses(std::span<const AlignmentToken> track, std::string_view transcript,
                                         double min_pause_s, const AbbreviationSet& abbreviations) {
  const auto words = split_whitespace(transcript);
  if (words.size() != track.size())
    throw SegmentationError("token mismatch: transcript has " + std::to_string(words.size()) +
                            " words, alignment has " + std::to_string(track.size()));
  std::vector<Pause> out;
  for (std::size_t i = 0; i + 1 < track.size(); ++i) {
    if (!ends_sentence(words[i], abbreviations)) continue;
    const double gap = track[i + 1].start_s - track[i].end_s;
    if (gap + kTimeEpsilon >= min_pause_s) out.push_back({track[i].end_s, track[i + 1].start_s, i});
  }
  return out;
}

SplitDecision choose_split(std::span<const Pause> pauses, std::uint64_t rng_seed) {
  SplitDecision d;
  d.candidate_pauses.assign(pauses.begin(), pauses.end());
  if (pauses.empty()) return d;
  double longest = pauses[0].length();
  for (const auto& p : pauses) longest = std::max(longest, p.length());
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < pauses.size(); ++i)
    if (pauses[i].length() + kTimeEpsilon >= longest) tied.push_back(i);
  std::size_t pick = tied.front();
  if (tied.size() > 1) {
    SplitMix64 rng(rng_seed);
    pick = tied[rng.below(tied.size())];
  }
  d.chosen_index = pick;
  d.split_point_s = pauses[pick].midpoint();
  return d;
}

std::uint64_t utterance_seed(std::string_view utterance_id, std::uint64_t global_seed) {
  return SplitMix64(fnv1a(utterance_id) ^ global_seed).next();
}

std::vector<UtteranceRecord> apply_split(const UtteranceRecord& rec, const SplitDecision& decision) {
  if (!decision.split_point_s) return {rec};
  const std::int64_t total = to_ticks(rec.duration_s);
  const std::int64_t cut = to_ticks(*decision.split_point_s);
  if (cut <= 0 || cut >= total)
    throw SegmentationError("split point " + std::to_string(*decision.split_point_s) + " s outside (0, " +
                            std::to_string(rec.duration_s) + ") for " + rec.utterance_id);
  if (!decision.chosen_index || *decision.chosen_index >= decision.candidate_pauses.size())
    throw SegmentationError("split decision without a chosen pause for " + rec.utterance_id);

  const auto words = split_whitespace(rec.text);
  const std::size_t boundary = decision.candidate_pauses[*decision.chosen_index].after_token + 1;
  if (boundary >= words.size()) throw SegmentationError("split boundary outside transcript for " + rec.utterance_id);

  UtteranceRecord a = rec, b = rec;
  a.utterance_id = rec.utterance_id + "_a";
  b.utterance_id = rec.utterance_id + "_b";
  a.duration_s = from_ticks(cut);
  b.offset_s = from_ticks(to_ticks(rec.offset_s) + cut);
  b.duration_s = from_ticks(total - cut);
  a.text = join(std::span(words).first(boundary));
  b.text = join(std::span(words).subspan(boundary));

  // Raw transcripts split on the same word when their token count lines up
  // with the normalized text; otherwise the children carry normalized text.
  const auto raw = split_whitespace(rec.raw_text);
  const auto stripped_total = split_whitespace(strip_pc(rec.text)).size();
  const auto stripped_a = split_whitespace(strip_pc(a.text)).size();
  if (raw.size() == stripped_total && stripped_a < raw.size()) {
    a.raw_text = join(std::span(raw).first(stripped_a));
    b.raw_text = join(std::span(raw).subspan(stripped_a));
  } else {
    a.raw_text = strip_pc(a.text);
    b.raw_text = strip_pc(b.text);
  }
  for (auto* child : {&a, &b}) {
    child->wer_pct.reset();
    child->cer_pct.reset();
  }
  return {std::move(a), std::move(b)};
}

AlignmentTrack alignment_from_json(const Json& tokens) {
  if (!tokens.is_array()) throw SegmentationError("alignment must be a JSON array");
  AlignmentTrack track;
  for (const auto& t : tokens) {
    try {
      track.push_back({t.at("word").get<std::string>(), t.at("start").get<double>(), t.at("end").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw SegmentationError(std::string("bad alignment token: ") + e.what());
    }
    if (track.back().end_s < track.back().start_s) throw SegmentationError("alignment token ends before it starts");
    if (track.size() > 1 && track.back().start_s + kTimeEpsilon < track[track.size() - 2].end_s)
      throw SegmentationError("alignment tokens overlap or are out of order");
  }
  return track;
}

AlignmentTrack read_alignment_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SegmentationError("cannot open " + path.string());
  try {
    return alignment_from_json(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SegmentationError(path.string() + ": " + e.what());
  }
}

std::map<std::string, AlignmentTrack> read_alignments_jsonl(const std::filesystem::path& path) {
  std::map<std::string, AlignmentTrack> out;
  for (const auto& [line, row] : read_jsonl(path)) {
    try {
      auto id = row.at("utterance_id").get<std::string>();
      if (out.contains(id)) throw SegmentationError("duplicate alignment for " + id);
      out.emplace(std::move(id), alignment_from_json(row.at("tokens")));
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(e.what(), line);
    } catch (const SegmentationError& e) {
      throw ManifestError(e.what(), line);
    }
  }
  return out;
}

std::map<std::string, AlignmentTrack> read_ctm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SegmentationError("cannot open " + path.string());
  std::map<std::string, AlignmentTrack> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string utt, channel, word;
    double start = 0, dur = 0;
    if (!(ss >> utt >> channel >> start >> dur >> word))
      throw ManifestError("malformed CTM line", line_no);
    out[utt].push_back({word, start, start + dur});
  }
  for (auto& [id, track] : out)
    std::stable_sort(track.begin(), track.end(), [](const auto& x, const auto& y) { return x.start_s < y.start_s; });
  return out;
}

}  // namespace curate
