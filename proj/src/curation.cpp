#include "curate/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "curate/error.hpp"
#include "curate/segmentation.hpp"

namespace curate {

std::vector<SpeakerCountRecord> read_speaker_counts(const std::filesystem::path& path) {
  std::vector<SpeakerCountRecord> out;
  for (const auto& [line, row] : read_jsonl(path)) {
    try {
      SpeakerCountRecord r{row.at("utterance_id").get<std::string>(), row.at("num_speakers").get<int>()};
      if (r.num_speakers < 0) throw ManifestError("num_speakers must be >= 0", line);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(e.what(), line);
    }
  }
  return out;
}

SpeakerCountResult apply_speaker_counts(std::vector<UtteranceRecord> records,
                                        std::span<const SpeakerCountRecord> counts) {
  std::unordered_map<std::string, int> by_id;
  for (const auto& c : counts)
    if (!by_id.emplace(c.utterance_id, c.num_speakers).second)
      throw ManifestError("duplicate speaker count for " + c.utterance_id);
  SpeakerCountResult res;
  res.counts_empty = counts.empty();
  for (auto& r : records) {
    if (auto it = by_id.find(r.utterance_id); it != by_id.end())
      r.num_speakers = it->second;
    else
      res.missing.push_back(r.utterance_id);
  }
  res.records = std::move(records);
  return res;
}

bool passes_subset(const UtteranceRecord& r, const SubsetSpec& spec) {
  if (!r.bandwidth_hz)
    throw StageOrderError("utterance " + r.utterance_id + " has no bandwidth_hz (bandwidth stage)");
  if (static_cast<double>(*r.bandwidth_hz) < spec.min_bandwidth_hz) return false;
  if (spec.cer_gated()) {
    if (!r.cer_pct) throw StageOrderError("utterance " + r.utterance_id + " has no cer_pct (validation stage)");
    if (!(*r.cer_pct < spec.max_cer_pct)) return false;
  }
  if (spec.speaker_gated()) {
    if (!r.num_speakers)
      throw StageOrderError("utterance " + r.utterance_id + " has no num_speakers (speakers stage)");
    if (*r.num_speakers > spec.max_num_speakers) return false;
  }
  return true;
}

std::vector<UtteranceRecord> build_subset(std::span<const UtteranceRecord> records, const SubsetSpec& spec) {
  std::vector<UtteranceRecord> out;
  for (const auto& r : records)
    if (passes_subset(r, spec)) out.push_back(r);
  return out;
}

SimilarityMap read_similarities(const std::filesystem::path& path) {
  SimilarityMap out;
  for (const auto& [line, row] : read_jsonl(path)) {
    try {
      out[{row.at("context_id").get<std::string>(), row.at("target_id").get<std::string>()}] =
          row.at("sim").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(e.what(), line);
    }
  }
  return out;
}

TripletResult build_triplets(std::span<const UtteranceRecord> records, const SimilarityMap& sims,
                             const TripletOptions& opts) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < records.size(); ++i) by_speaker[records[i].speaker_id].push_back(i);
  for (auto& [spk, idx] : by_speaker)
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return records[a].utterance_id < records[b].utterance_id; });

  TripletResult res;
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& target = records[t];
    if (!target.cer_pct || !(*target.cer_pct <= opts.max_cer_pct)) {
      ++res.failed_cer;
      continue;
    }
    const UtteranceRecord* context = nullptr;
    double best_dev = 0.0;
    for (std::size_t c : by_speaker[target.speaker_id]) {
      if (c == t) continue;
      const double dev = std::abs(records[c].duration_s - opts.context_s);
      if (dev <= opts.context_tolerance_s + 1e-9 && (!context || dev < best_dev)) {
        context = &records[c];
        best_dev = dev;
      }
    }
    double context_duration = context ? context->duration_s : 0.0;
    if (!context) {
      for (std::size_t c : by_speaker[target.speaker_id]) {
        if (c != t && records[c].duration_s > opts.context_s + opts.context_tolerance_s) {
          context = &records[c];
          context_duration = opts.context_s;
          break;
        }
      }
    }
    if (!context) {
      ++res.no_context;
      continue;
    }
    auto it = sims.find({context->utterance_id, target.utterance_id});
    if (it == sims.end()) {
      ++res.missing_similarity;
      continue;
    }
    if (!(it->second >= opts.min_speaker_sim)) {
      ++res.failed_similarity;
      continue;
    }
    res.triplets.push_back({context->utterance_id, target.text, target.utterance_id, context_duration});
  }
  return res;
}

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::DevSeen: return "dev_seen";
    case SplitName::TestSeen: return "test_seen";
    case SplitName::DevUnseen: return "dev_unseen";
    default: return "test_unseen";
  }
}

const SplitPlan& EvalSplits::plan(SplitName name) const {
  for (const auto& p : plans)
    if (p.split_name == name) return p;
  throw Error("no plan named " + std::string(to_string(name)));
}

namespace {

bool eval_eligible(const UtteranceRecord& r, const EvalSplitOptions& opts) {
  return r.bandwidth_hz && *r.bandwidth_hz >= opts.min_bandwidth_hz && r.wer_pct && *r.wer_pct == 0.0 &&
         r.num_speakers && *r.num_speakers == 1;
}

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Rank-based terciles: sort by key then id, cut into three near-equal groups.
std::vector<int> terciles(std::span<const UtteranceRecord* const> pool, auto key) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ka = key(*pool[a]), kb = key(*pool[b]);
    if (ka != kb) return ka < kb;
    return pool[a]->utterance_id < pool[b]->utterance_id;
  });
  std::vector<int> out(pool.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    out[order[rank]] = static_cast<int>(rank * 3 / order.size());
  return out;
}

// Draws `count` items cycling duration strata, with the bandwidth stratum
// rotating inside each duration stratum.
std::vector<const UtteranceRecord*> stratified_draw(std::vector<std::vector<const UtteranceRecord*>> cells[3],
                                                    int count) {
  std::vector<const UtteranceRecord*> out;
  int row_picks[3] = {0, 0, 0};
  for (int k = 0; k < count; ++k) {
    const int want_row = k % 3;
    bool done = false;
    for (int dr = 0; dr < 3 && !done; ++dr) {
      const int row = (want_row + dr) % 3;
      const int want_col = (row_picks[row] + row) % 3;
      for (int dc = 0; dc < 3 && !done; ++dc) {
        auto& cell = cells[row][(want_col + dc) % 3];
        if (cell.empty()) continue;
        out.push_back(cell.back());
        cell.pop_back();
        ++row_picks[row];
        done = true;
      }
    }
    if (!done) break;
  }
  return out;
}

}  // namespace

EvalSplits sample_eval_splits(std::span<const UtteranceRecord> records, std::uint64_t rng_seed,
                              const EvalSplitOptions& opts, std::span<const UtteranceRecord> unseen_dev,
                              std::span<const UtteranceRecord> unseen_test) {
  std::map<std::string, std::int64_t> speaker_ticks;
  std::map<std::string, std::vector<const UtteranceRecord*>> pools;
  std::map<std::string, Gender> genders;
  for (const auto& r : records) {
    speaker_ticks[r.speaker_id] += to_ticks(r.duration_s);
    if (!genders.contains(r.speaker_id) || genders[r.speaker_id] == Gender::Unknown) genders[r.speaker_id] = r.gender;
    if (eval_eligible(r, opts)) pools[r.speaker_id].push_back(&r);
  }

  const auto need = static_cast<std::size_t>(2 * opts.utterances_per_speaker);
  std::vector<std::string> groups[3];  // m, f, unknown
  std::size_t candidates = 0;
  for (const auto& [spk, ticks] : speaker_ticks) {
    const double minutes = from_ticks(ticks) / 60.0;
    if (minutes < opts.min_speaker_minutes || minutes > opts.max_speaker_minutes) continue;
    if (pools[spk].size() < need) continue;
    const auto g = genders[spk];
    groups[g == Gender::Male ? 0 : g == Gender::Female ? 1 : 2].push_back(spk);
    ++candidates;
  }
  if (candidates < static_cast<std::size_t>(opts.num_speakers))
    throw Error("only " + std::to_string(candidates) + " eligible speakers; " + std::to_string(opts.num_speakers) +
                " required (shortfall " + std::to_string(opts.num_speakers - candidates) + ")");

  SplitMix64 rng(rng_seed);
  for (auto& g : groups) shuffle(g, rng);

  EvalSplits res;
  std::size_t taken[3] = {0, 0, 0};
  auto take = [&](int g) {
    res.selected_speakers.push_back(groups[g][taken[g]++]);
  };
  auto left = [&](int g) { return taken[g] < groups[g].size(); };
  while (res.selected_speakers.size() < static_cast<std::size_t>(opts.num_speakers)) {
    const int lo = taken[0] <= taken[1] ? 0 : 1;
    const int hi = 1 - lo;
    const auto gap = static_cast<int>(taken[hi] - taken[lo]);
    if (left(lo))
      take(lo);
    else if (left(hi) && gap + 1 <= opts.max_gender_imbalance)
      take(hi);
    else if (left(2))
      take(2);
    else
      take(hi);
  }
  res.gender_balanced =
      std::abs(static_cast<long>(taken[0]) - static_cast<long>(taken[1])) <= opts.max_gender_imbalance;
  std::sort(res.selected_speakers.begin(), res.selected_speakers.end());

  SplitPlan dev{SplitName::DevSeen, {}}, test{SplitName::TestSeen, {}};
  for (const auto& spk : res.selected_speakers) {
    auto pool = pools[spk];
    std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->utterance_id < b->utterance_id; });
    const auto dur = terciles(pool, [](const UtteranceRecord& r) { return r.duration_s; });
    const auto bw = terciles(pool, [](const UtteranceRecord& r) { return static_cast<double>(*r.bandwidth_hz); });
    std::vector<std::vector<const UtteranceRecord*>> cells[3];
    for (auto& row : cells) row.resize(3);
    for (std::size_t i = 0; i < pool.size(); ++i) cells[dur[i]][bw[i]].push_back(pool[i]);
    SplitMix64 local(utterance_seed(spk, rng_seed));
    for (auto& row : cells)
      for (auto& cell : row) shuffle(cell, local);
    for (auto* r : stratified_draw(cells, opts.utterances_per_speaker)) dev.utterance_ids.push_back(r->utterance_id);
    for (auto* r : stratified_draw(cells, opts.utterances_per_speaker)) test.utterance_ids.push_back(r->utterance_id);
  }

  std::unordered_set<std::string> held_out(dev.utterance_ids.begin(), dev.utterance_ids.end());
  held_out.insert(test.utterance_ids.begin(), test.utterance_ids.end());
  SplitPlan train{SplitName::Train, {}};
  std::set<std::string> train_speakers;
  for (const auto& r : records) {
    if (held_out.contains(r.utterance_id)) continue;
    train.utterance_ids.push_back(r.utterance_id);
    train_speakers.insert(r.speaker_id);
  }
  res.plans = {std::move(train), std::move(dev), std::move(test)};

  auto unseen_plan = [&](SplitName name, std::span<const UtteranceRecord> src) {
    SplitPlan p{name, {}};
    for (const auto& r : src)
      if (eval_eligible(r, opts) && !train_speakers.contains(r.speaker_id)) p.utterance_ids.push_back(r.utterance_id);
    return p;
  };
  if (!unseen_dev.empty()) res.plans.push_back(unseen_plan(SplitName::DevUnseen, unseen_dev));
  if (!unseen_test.empty()) res.plans.push_back(unseen_plan(SplitName::TestUnseen, unseen_test));
  return res;
}

void Histogram::add(std::optional<double> value) {
  if (!value) {
    ++missing;
    return;
  }
  const double v = std::max(0.0, *value);
  const auto bin = static_cast<std::size_t>(std::floor(v / bin_width + 1e-9));
  if (bin >= bins.size())
    ++overflow;
  else
    ++bins[bin];
}

void Histogram::merge(const Histogram& other) {
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i] += other.bins[i];
  overflow += other.overflow;
  missing += other.missing;
}

std::size_t Histogram::total() const {
  return std::accumulate(bins.begin(), bins.end(), std::size_t{0}) + overflow + missing;
}

namespace {

constexpr double kRateCap = 200.0;
constexpr std::size_t kStatsBlock = 4096;

struct StatsPartial {
  StatsReport report;
  std::int64_t ticks = 0;
  std::int64_t multi_ticks = 0;
  double wer_sum = 0.0, cer_sum = 0.0;
  std::size_t wer_n = 0, cer_n = 0;
};

}  // namespace

StatsReport corpus_stats(std::span<const UtteranceRecord> records, int workers) {
  // Fixed-size blocks merged in order keep floating sums independent of workers.
  const std::size_t blocks = (records.size() + kStatsBlock - 1) / kStatsBlock;
  std::vector<StatsPartial> partials(blocks);
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : 1)
  for (long b = 0; b < static_cast<long>(blocks); ++b) {
    auto& p = partials[b];
    const std::size_t end = std::min(records.size(), (b + 1) * kStatsBlock);
    for (std::size_t i = b * kStatsBlock; i < end; ++i) {
      const auto& r = records[i];
      const auto t = to_ticks(r.duration_s);
      p.ticks += t;
      if (r.num_speakers && *r.num_speakers >= 2) p.multi_ticks += t;
      if (r.text_source == TextSource::BookMatch) ++p.report.book_match;
      p.report.duration.add(r.duration_s);
      p.report.bandwidth.add(r.bandwidth_hz ? std::optional<double>(*r.bandwidth_hz) : std::nullopt);
      p.report.wer.add(r.wer_pct);
      p.report.cer.add(r.cer_pct);
      if (r.wer_pct) {
        p.wer_sum += std::min(*r.wer_pct, kRateCap);
        ++p.wer_n;
      }
      if (r.cer_pct) {
        p.cer_sum += std::min(*r.cer_pct, kRateCap);
        ++p.cer_n;
      }
    }
  }
  StatsReport out;
  std::int64_t ticks = 0, multi = 0;
  double wer_sum = 0, cer_sum = 0;
  std::size_t wer_n = 0, cer_n = 0;
  for (const auto& p : partials) {
    ticks += p.ticks;
    multi += p.multi_ticks;
    out.book_match += p.report.book_match;
    out.duration.merge(p.report.duration);
    out.bandwidth.merge(p.report.bandwidth);
    out.wer.merge(p.report.wer);
    out.cer.merge(p.report.cer);
    wer_sum += p.wer_sum;
    cer_sum += p.cer_sum;
    wer_n += p.wer_n;
    cer_n += p.cer_n;
  }
  std::set<std::string_view> speakers;
  for (const auto& r : records) speakers.insert(r.speaker_id);
  out.utterances = records.size();
  out.speakers = speakers.size();
  out.total_hours = from_ticks(ticks) / 3600.0;
  out.multi_speaker_hours = from_ticks(multi) / 3600.0;
  out.book_match_ratio = records.empty() ? 0.0 : static_cast<double>(out.book_match) / records.size();
  out.mean_wer_pct = wer_n ? wer_sum / wer_n : 0.0;
  out.mean_cer_pct = cer_n ? cer_sum / cer_n : 0.0;
  return out;
}

namespace {

Json histogram_json(const Histogram& h) {
  Json j = Json::object();
  j["bin_width"] = h.bin_width;
  j["bins"] = h.bins;
  j["overflow"] = h.overflow;
  j["missing"] = h.missing;
  return j;
}

}  // namespace

Json to_json(const StatsReport& s) {
  Json j = Json::object();
  j["utterances"] = s.utterances;
  j["speakers"] = s.speakers;
  j["total_hours"] = s.total_hours;
  j["multi_speaker_hours"] = s.multi_speaker_hours;
  j["book_match"] = s.book_match;
  j["book_match_ratio"] = s.book_match_ratio;
  j["mean_wer_pct"] = s.mean_wer_pct;
  j["mean_cer_pct"] = s.mean_cer_pct;
  j["histograms"] = {{"duration_s", histogram_json(s.duration)},
                     {"bandwidth_hz", histogram_json(s.bandwidth)},
                     {"wer_pct", histogram_json(s.wer)},
                     {"cer_pct", histogram_json(s.cer)}};
  return j;
}

std::string render_table(const StatsReport& s) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "utterances           " << s.utterances << "\n"
     << "speakers             " << s.speakers << "\n"
     << "total hours          " << s.total_hours << "\n"
     << "multi-speaker hours  " << s.multi_speaker_hours << "\n"
     << "book-matched text    " << s.book_match << " (" << 100.0 * s.book_match_ratio << " %)\n"
     << "mean WER (capped)    " << s.mean_wer_pct << " %\n"
     << "mean CER (capped)    " << s.mean_cer_pct << " %\n";
  auto row = [&](const char* name, const Histogram& h) {
    os << name << ": overflow " << h.overflow << ", missing " << h.missing << "\n";
  };
  row("duration histogram ", s.duration);
  row("bandwidth histogram", s.bandwidth);
  row("WER histogram      ", s.wer);
  row("CER histogram      ", s.cer);
  return os.str();
}

std::string histogram_csv(const StatsReport& s) {
  std::ostringstream os;
  os << "histogram,bin_start,bin_end,count\n";
  auto emit = [&](const char* name, const Histogram& h) {
    for (std::size_t i = 0; i < h.bins.size(); ++i)
      os << name << ',' << i * h.bin_width << ',' << (i + 1) * h.bin_width << ',' << h.bins[i] << '\n';
    os << name << ',' << h.bins.size() * h.bin_width << ",inf," << h.overflow << '\n';
    os << name << ",missing,missing," << h.missing << '\n';
  };
  emit("duration_s", s.duration);
  emit("bandwidth_hz", s.bandwidth);
  emit("wer_pct", s.wer);
  emit("cer_pct", s.cer);
  return os.str();
}

}  // namespace curate
