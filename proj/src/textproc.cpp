#include "curate/textproc.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>

#include "curate/error.hpp"
#include "curate/kernels.hpp"

namespace curate {

namespace {

enum class CharClass { Letter, Space, Break, Drop };

bool is_apostrophe(UChar32 c) {
  return c == U'\'' || c == U'`' || c == 0x2018 || c == 0x2019 || c == 0x02BC || c == 0x201B;
}

CharClass classify(UChar32 c) {
  if (c < 0) return CharClass::Letter;
  if (is_apostrophe(c)) return CharClass::Drop;
  if (u_isUWhiteSpace(c)) return CharClass::Space;
  if (u_ispunct(c) || c == U'"' || c == U'<' || c == U'>') return CharClass::Break;
  return CharClass::Letter;
}

bool is_pc(UChar32 c) {
  const auto k = classify(c);
  return k == CharClass::Drop || k == CharClass::Break;
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[4];
  std::size_t len = 0;
  U8_APPEND_UNSAFE(buf, len, c);
  out.append(buf, len);
}

UChar32 next_cp(std::string_view s, std::size_t& i) {
  UChar32 c;
  const auto len = static_cast<std::int32_t>(s.size());
  auto pos = static_cast<std::int32_t>(i);
  U8_NEXT(s.data(), pos, len, c);
  i = static_cast<std::size_t>(pos);
  return c < 0 ? 0xFFFD : c;
}

UChar32 prev_cp(std::string_view s, std::size_t& i) {
  UChar32 c;
  auto pos = static_cast<std::int32_t>(i);
  U8_PREV(s.data(), 0, pos, c);
  i = static_cast<std::size_t>(pos);
  return c < 0 ? 0xFFFD : c;
}

std::string lower(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) append_utf8(out, u_tolower(next_cp(s, i)));
  return out;
}

// FNV-1a, stable across runs and platforms.
std::uint64_t token_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t kRollBase = 0x9E3779B97F4A7C15ull;

std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Strips leading and trailing punctuation, then lowercases.
std::string token_core(std::string_view tok) {
  std::size_t b = 0, e = tok.size();
  while (b < e) {
    std::size_t j = b;
    if (!is_pc(next_cp(tok, j))) break;
    b = j;
  }
  while (e > b) {
    std::size_t j = e;
    if (!is_pc(prev_cp(tok, j))) break;
    e = j;
  }
  return lower(tok.substr(b, e - b));
}

std::string decode_entities(std::string_view s) {
  static const std::pair<std::string_view, std::string_view> kNamed[] = {
      {"nbsp", " "}, {"amp", "&"},  {"lt", "<"},       {"gt", ">"},       {"quot", "\""},
      {"apos", "'"}, {"mdash", "—"}, {"ndash", "–"}, {"hellip", "…"},
      {"lsquo", "‘"}, {"rsquo", "’"}, {"ldquo", "“"}, {"rdquo", "”"}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '&') {
      const auto semi = s.find(';', i + 1);
      if (semi != std::string_view::npos && semi - i <= 10) {
        const auto name = s.substr(i + 1, semi - i - 1);
        bool done = false;
        if (!name.empty() && name[0] == '#') {
          const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
          const auto digits = name.substr(hex ? 2 : 1);
          if (!digits.empty()) {
            try {
              std::size_t used = 0;
              const unsigned long cp = std::stoul(std::string(digits), &used, hex ? 16 : 10);
              if (used == digits.size() && cp > 0 && cp <= 0x10FFFF) {
                append_utf8(out, static_cast<UChar32>(cp == 0xA0 ? 0x20 : cp));
                done = true;
              }
            } catch (const std::exception&) {
            }
          }
        } else {
          for (const auto& [n, rep] : kNamed) {
            if (name == n) {
              out += rep;
              done = true;
              break;
            }
          }
        }
        if (done) {
          i = semi + 1;
          continue;
        }
      }
    }
    out += s[i++];
  }
  return out;
}

std::string remove_tags(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '<' && i + 1 < s.size() &&
        (std::isalpha(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '/' || s[i + 1] == '!')) {
      const auto close = s.find('>', i + 1);
      const auto reopen = s.find('<', i + 1);
      if (close != std::string_view::npos && (reopen == std::string_view::npos || close < reopen)) {
        out += ' ';
        i = close + 1;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

bool apply_artifacts_once(std::vector<std::string>& tokens, const std::vector<ArtifactRule>& rules) {
  bool changed = false;
  std::vector<std::string> cores(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) cores[i] = token_core(tokens[i]);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size();) {
    const ArtifactRule* hit = nullptr;
    for (const auto& r : rules) {
      if (r.tokens.empty() || i + r.tokens.size() > tokens.size()) continue;
      if (std::equal(r.tokens.begin(), r.tokens.end(), cores.begin() + static_cast<std::ptrdiff_t>(i))) {
        hit = &r;
        break;
      }
    }
    if (!hit) {
      out.push_back(std::move(tokens[i++]));
      continue;
    }
    changed = true;
    for (auto& t : split_whitespace(hit->replacement)) out.push_back(std::move(t));
    i += hit->tokens.size();
  }
  tokens = std::move(out);
  return changed;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> read_rule_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rules file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

// Capitalization carried from the source token onto its expansion.
std::string recase(std::string_view source, const std::string& expansion) {
  int letters = 0, upper = 0;
  UChar32 first_letter = 0;
  for (std::size_t i = 0; i < source.size();) {
    const UChar32 c = next_cp(source, i);
    if (!u_isalpha(c)) continue;
    if (!letters) first_letter = c;
    ++letters;
    if (u_isupper(c)) ++upper;
  }
  if (letters == 0 || !u_isupper(first_letter)) return expansion;
  std::string out;
  const bool all_caps = letters > 1 && upper == letters;
  bool first = true;
  for (std::size_t i = 0; i < expansion.size();) {
    UChar32 c = next_cp(expansion, i);
    if (all_caps || (first && u_isalpha(c))) c = u_toupper(c);
    if (u_isalpha(c)) first = false;
    append_utf8(out, c);
  }
  return out;
}

bool needs_verbalization(std::string_view tok) {
  for (std::size_t i = 0; i < tok.size();) {
    const UChar32 c = next_cp(tok, i);
    if (u_isdigit(c)) return true;
    const auto t = u_charType(c);
    if (t == U_MATH_SYMBOL || t == U_CURRENCY_SYMBOL || t == U_OTHER_SYMBOL || c == U'&' || c == U'%' ||
        c == U'#' || c == U'@')
      return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

std::u32string utf8_to_u32(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) out.push_back(static_cast<char32_t>(next_cp(s, i)));
  return out;
}

std::string u32_to_utf8(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) append_utf8(out, static_cast<UChar32>(c));
  return out;
}

StrippedText strip_pc_mapped(std::string_view text) {
  StrippedText out;
  out.text.reserve(text.size());
  bool pending_space = false;
  std::size_t space_begin = 0, space_end = 0;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t b = i;
    const UChar32 c = next_cp(text, i);
    switch (classify(c)) {
      case CharClass::Drop:
        break;
      case CharClass::Space:
      case CharClass::Break:
        if (!out.text.empty() && !pending_space) {
          pending_space = true;
          space_begin = b;
        }
        space_end = i;
        break;
      case CharClass::Letter: {
        if (pending_space) {
          out.text += ' ';
          out.source_begin.push_back(space_begin);
          out.source_end.push_back(space_end);
          pending_space = false;
        }
        const std::size_t before = out.text.size();
        append_utf8(out.text, u_tolower(c));
        for (std::size_t k = before; k < out.text.size(); ++k) {
          out.source_begin.push_back(b);
          out.source_end.push_back(i);
        }
        break;
      }
    }
  }
  return out;
}

std::string strip_pc(std::string_view text) { return strip_pc_mapped(text).text; }

ChapterIndex::ChapterIndex(std::string chapter_text)
    : original_(std::move(chapter_text)), stripped_(strip_pc_mapped(original_)) {
  const std::string& t = stripped_.text;
  for (std::size_t i = 0; i < t.size();) {
    const auto e = std::min(t.find(' ', i), t.size());
    token_begin_.push_back(i);
    token_end_.push_back(e);
    i = e + 1;
  }
  prefix_hash_.assign(token_begin_.size() + 1, 0);
  for (std::size_t k = 0; k < token_begin_.size(); ++k)
    prefix_hash_[k + 1] =
        prefix_hash_[k] * kRollBase + token_hash(std::string_view(t).substr(token_begin_[k], token_end_[k] - token_begin_[k]));
}

TranscriptMatch ChapterIndex::find(std::string_view transcript) const {
  TranscriptMatch m;
  const auto query = split_whitespace(strip_pc(transcript));
  const std::size_t len = query.size();
  if (len == 0 || len > token_begin_.size()) return m;

  std::uint64_t qhash = 0, power = 1;
  for (const auto& tok : query) {
    qhash = qhash * kRollBase + token_hash(tok);
    power *= kRollBase;
  }
  const std::string_view t = stripped_.text;
  std::size_t first = token_begin_.size();
  for (std::size_t s = 0; s + len <= token_begin_.size(); ++s) {
    if (prefix_hash_[s + len] - prefix_hash_[s] * power != qhash) continue;
    bool equal = true;
    for (std::size_t k = 0; k < len && equal; ++k)
      equal = t.substr(token_begin_[s + k], token_end_[s + k] - token_begin_[s + k]) == query[k];
    if (!equal) continue;
    if (m.occurrences++ == 0) first = s;
  }
  if (m.occurrences == 0) return m;

  std::size_t begin = stripped_.source_begin[token_begin_[first]];
  std::size_t end = stripped_.source_end[token_end_[first + len - 1] - 1];
  // Pull in punctuation attached to the first and last words, stopping at
  // markup boundaries so entity and tag fragments stay outside the slice.
  const std::string_view o = original_;
  while (begin > 0) {
    std::size_t j = begin;
    const UChar32 c = prev_cp(o, j);
    if (!is_pc(c) || c == U'>' || c == U';') break;
    begin = j;
  }
  while (end < o.size()) {
    std::size_t j = end;
    const UChar32 c = next_cp(o, j);
    if (!is_pc(c) || c == U'<' || c == U'&') break;
    end = j;
  }
  m.matched = true;
  m.begin = begin;
  m.end = end;
  m.restored_text = std::string(o.substr(begin, end - begin));
  return m;
}

TranscriptMatch match_transcript(std::string_view transcript, std::string_view chapter_text) {
  return ChapterIndex(std::string(chapter_text)).find(transcript);
}

NormalizationRules NormalizationRules::defaults() {
  NormalizationRules r;
  const std::pair<const char*, const char*> expansions[] = {
      {"mr", "mister"},       {"mr.", "mister"},       {"mrs", "misses"},     {"mrs.", "misses"},
      {"dr.", "doctor"},      {"st.", "saint"},        {"prof.", "professor"}, {"rev.", "reverend"},
      {"hon.", "honorable"},  {"jr.", "junior"},       {"sr.", "senior"},     {"capt.", "captain"},
      {"col.", "colonel"},    {"gen.", "general"},     {"lieut.", "lieutenant"}, {"messrs.", "messieurs"},
      {"messrs", "messieurs"}, {"&c.", "et cetera"},   {"&c", "et cetera"},   {"etc.", "et cetera"},
      {"vs.", "versus"},      {"&", "and"}};
  for (const auto& [k, v] : expansions) r.abbreviation_expansions.emplace(k, v);
  r.artifact_patterns.push_back({{"nbsp"}, ""});
  r.artifact_patterns.push_back({{"p", "p"}, ""});
  return r;
}

void NormalizationRules::load_expansions(const std::filesystem::path& path) {
  for (const auto& line : read_rule_lines(path)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(path.string() + ": expected token<TAB>expansion: " + line);
    abbreviation_expansions[lower(trim_view(line.substr(0, tab)))] = std::string(trim_view(line.substr(tab + 1)));
  }
}

void NormalizationRules::load_artifacts(const std::filesystem::path& path) {
  for (const auto& line : read_rule_lines(path)) {
    const auto tab = line.find('\t');
    ArtifactRule rule;
    for (auto& t : split_whitespace(line.substr(0, tab))) rule.tokens.push_back(lower(t));
    if (tab != std::string::npos) rule.replacement = std::string(trim_view(line.substr(tab + 1)));
    if (!rule.tokens.empty()) artifact_patterns.push_back(std::move(rule));
  }
}

std::string clean_formatting(std::string_view text, const NormalizationRules& rules) {
  auto tokens = split_whitespace(decode_entities(remove_tags(text)));
  while (apply_artifacts_once(tokens, rules.artifact_patterns)) {
  }
  return join(tokens);
}

NormalizeResult normalize_spoken(std::string_view text, const NormalizationRules& rules) {
  NormalizeResult res;
  std::vector<std::string> out;
  for (const auto& tok : split_whitespace(text)) {
    // Leading punctuation length, e.g. an opening quote.
    std::size_t lead = 0;
    while (lead < tok.size()) {
      std::size_t j = lead;
      if (!is_pc(next_cp(tok, j))) break;
      lead = j;
    }
    std::vector<std::size_t> skips{0};
    if (lead > 0) skips.push_back(lead);
    bool expanded = false;
    for (std::size_t skip : skips) {
      const std::string_view body = std::string_view(tok).substr(skip);
      // Longest candidate first, peeling trailing punctuation.
      for (std::size_t end = body.size(); end > 0 && !expanded;) {
        const std::string_view cand = body.substr(0, end);
        if (auto it = rules.abbreviation_expansions.find(lower(cand)); it != rules.abbreviation_expansions.end()) {
          out.push_back(std::string(tok.substr(0, skip)) + recase(cand, it->second) +
                        std::string(body.substr(end)));
          expanded = true;
          break;
        }
        std::size_t j = end;
        if (!is_pc(prev_cp(body, j))) break;
        end = j;
      }
      if (expanded) break;
    }
    if (expanded) continue;
    if (needs_verbalization(tok)) res.unverbalized.push_back(tok);
    out.push_back(tok);
  }
  res.text = join(out);
  return res;
}

namespace {

// Word tokens are interned into code units so both levels share one kernel.
void prepare_pairs(std::span<const std::string> refs, std::span<const std::string> hyps,
                   std::vector<std::u32string>& ref_words, std::vector<std::u32string>& hyp_words,
                   std::vector<std::u32string>& ref_chars, std::vector<std::u32string>& hyp_chars) {
  std::unordered_map<std::string, char32_t> vocab;
  auto intern = [&](const std::string& normalized) {
    std::u32string ids;
    for (auto& w : split_whitespace(normalized)) {
      auto [it, inserted] = vocab.emplace(std::move(w), static_cast<char32_t>(vocab.size()));
      ids.push_back(it->second);
    }
    return ids;
  };
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto r = strip_pc(refs[i]);
    const auto h = strip_pc(hyps[i]);
    ref_words.push_back(intern(r));
    hyp_words.push_back(intern(h));
    ref_chars.push_back(utf8_to_u32(r));
    hyp_chars.push_back(utf8_to_u32(h));
  }
}

EditStats make_stats(std::size_t word_edits, std::size_t ref_words, std::size_t char_edits, std::size_t ref_chars) {
  if (ref_words == 0 || ref_chars == 0) throw EmptyReferenceError();
  EditStats s;
  s.word_edits = word_edits;
  s.ref_words = ref_words;
  s.char_edits = char_edits;
  s.ref_chars = ref_chars;
  s.wer_pct = 100.0 * static_cast<double>(word_edits) / static_cast<double>(ref_words);
  s.cer_pct = 100.0 * static_cast<double>(char_edits) / static_cast<double>(ref_chars);
  return s;
}

}  // namespace

EditStats edit_stats(std::string_view ref, std::string_view hyp) {
  const std::string refs[] = {std::string(ref)};
  const std::string hyps[] = {std::string(hyp)};
  std::vector<std::u32string> rw, hw, rc, hc;
  prepare_pairs(refs, hyps, rw, hw, rc, hc);
  if (rc[0].empty()) throw EmptyReferenceError();
  const auto w = kernels::serial::batch_levenshtein(rw, hw);
  const auto c = kernels::serial::batch_levenshtein(rc, hc);
  return make_stats(w[0], rw[0].size(), c[0], rc[0].size());
}

std::vector<EditStats> batch_edit_stats(std::span<const std::string> refs, std::span<const std::string> hyps) {
  if (refs.size() != hyps.size()) throw Error("batch_edit_stats: size mismatch");
  std::vector<std::u32string> rw, hw, rc, hc;
  prepare_pairs(refs, hyps, rw, hw, rc, hc);
  for (const auto& r : rc)
    if (r.empty()) throw EmptyReferenceError();
  const auto w = kernels::batch_levenshtein(rw, hw);
  const auto c = kernels::batch_levenshtein(rc, hc);
  std::vector<EditStats> out;
  out.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) out.push_back(make_stats(w[i], rw[i].size(), c[i], rc[i].size()));
  return out;
}

bool passes_cer_gate(double cer_pct, double max_cer_pct) { return cer_pct < max_cer_pct; }
bool passes_cer_gate(const EditStats& stats, double max_cer_pct) { return passes_cer_gate(stats.cer_pct, max_cer_pct); }

}  // namespace curate
