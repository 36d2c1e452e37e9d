#include "curate/audio.hpp"
#include "curate/error.hpp"
#include "curate/pipeline.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/synthetic_corpus.hpp"

using namespace curate;
namespace fs = std::filesystem;

namespace {

constexpr double kBin = 44100.0 / 2048.0;

std::map<std::string, UtteranceRecord> by_id(const std::vector<UtteranceRecord>& rs) {
  std::map<std::string, UtteranceRecord> out;
  for (const auto& r : rs) out[r.utterance_id] = r;
  return out;
}

const StageReport& report_for(const PipelineResult& res, Stage s) {
  for (const auto& r : res.reports)
    if (r.stage == s) return r;
  throw std::runtime_error("no report for " + std::string(to_string(s)));
}

// One pipeline run over a fresh corpus, shared by the end-to-end cases.
struct Run {
  fixtures::TempDir dir{"pipeline"};
  fixtures::SyntheticCorpus corpus;
  PipelineResult result;

  explicit Run(int workers) {
    corpus = fixtures::build_synthetic_corpus(dir.path());
    corpus.config.workers = workers;
    result = run_pipeline(corpus.config);
  }
  fs::path out(const std::string& name) const { return fs::path(corpus.config.output_dir) / name; }
};

Run& shared_run() {
  static Run run(3);
  return run;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stage names") {
    for (auto s : all_stages()) CHECK(parse_stage(to_string(s)) == s);
    CHECK_THROWS_AS(parse_stage("mastering"), ConfigError);
    CHECK(all_stages().size() == 7);
  }

  TEST_CASE("config round trip and unknown keys") {
    PipelineConfig c;
    c.input_manifest = "in.jsonl";
    c.workers = 6;
    c.seed = 99;
    c.stages[Stage::Audio] = false;
    c.thresholds.min_pause_s = 0.1;
    CHECK(config_from_json(to_json(c)) == c);

    fixtures::TempDir dir;
    write_config(c, dir / "c.json");
    CHECK(read_config(dir / "c.json") == c);

    auto j = to_json(c);
    j["thresholds"]["min_pause"] = 0.2;
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("min_pause"), ConfigError);
    auto k = to_json(c);
    k["colour"] = "blue";
    CHECK_THROWS_AS(config_from_json(k), ConfigError);
    auto s = to_json(c);
    s["stages"]["mastering"] = true;
    CHECK_THROWS_AS(config_from_json(s), ConfigError);
    CHECK_THROWS_AS(config_from_json(Json::parse(R"({"workers": "many"})")), ConfigError);
  }

  TEST_CASE("missing keys take defaults") {
    const auto c = config_from_json(Json::parse(R"({"input_manifest": "m.jsonl"})"));
    CHECK(c.workers == 1);
    CHECK(c.thresholds.max_edge_silence_s == 0.5);
    CHECK(c.thresholds.min_pause_s == 0.08);
    CHECK(c.thresholds.bandwidth_threshold_db == -50.0);
    CHECK(c.thresholds.max_cer_pct == 100.0);
    for (auto s : all_stages()) CHECK(c.enabled(s));
  }

  TEST_CASE("paths resolve against the config directory") {
    PipelineConfig c;
    c.input_manifest = "in.jsonl";
    c.output_dir = "/abs/out";
    c.alignments = "";
    const auto r = resolve_paths(c, "/data/run");
    CHECK(r.input_manifest == "/data/run/in.jsonl");
    CHECK(r.output_dir == "/abs/out");
    CHECK(r.alignments.empty());
  }

  TEST_CASE("validation names the offending field") {
    PipelineConfig c;
    c.input_manifest = "in.jsonl";
    CHECK(validate_config(c).empty());
    c.thresholds.min_pause_s = -0.1;
    c.workers = 0;
    const auto v = validate_config(c);
    REQUIRE(v.size() == 2);
    CHECK(v[0].find("workers") != std::string::npos);
    CHECK(v[1].find("min_pause_s") != std::string::npos);

    PipelineConfig e;
    e.input_manifest = "in.jsonl";
    e.encoder_command = "flac {input}";
    e.thresholds.trim_hop_s = 0.5;
    e.thresholds.max_cer_pct = std::numeric_limits<double>::quiet_NaN();
    CHECK(validate_config(e).size() == 3);

    PipelineConfig loop;
    loop.input_manifest = "out/manifest.jsonl";
    CHECK(validate_config(loop).size() == 1);
    for (auto s : all_stages()) loop.stages[s] = s == Stage::Stats;
    CHECK(validate_config(loop).empty());
  }

  TEST_CASE("invalid config exits 1, missing inputs exit 2 naming the stage") {
    PipelineConfig bad;
    CHECK(run_pipeline(bad).exit_code == kExitConfig);

    fixtures::TempDir dir;
    UtteranceRecord r;
    r.utterance_id = "u";
    r.book_id = r.chapter_id = r.speaker_id = "x";
    r.audio_path = "a.wav";
    r.duration_s = 1.0;
    r.text = r.raw_text = "a";
    write_manifest(std::vector{r}, dir / "in.jsonl");
    PipelineConfig c;
    c.input_manifest = (dir / "in.jsonl").string();
    c.output_dir = (dir / "out").string();
    for (auto s : all_stages()) c.stages[s] = s == Stage::Segmentation;
    c.alignments = (dir / "nowhere.jsonl").string();
    const auto res = run_pipeline(c);
    CHECK(res.exit_code == kExitStage);
    CHECK(res.error.find("segmentation") != std::string::npos);
  }

  TEST_CASE("stats-only run writes no manifest") {
    fixtures::TempDir dir;
    std::vector<UtteranceRecord> rs;
    for (int i = 0; i < 30; ++i) {
      UtteranceRecord r;
      r.utterance_id = "u" + fixtures::pad(i, 3);
      r.book_id = r.chapter_id = "b";
      r.speaker_id = "s" + std::to_string(i % 4);
      r.audio_path = "a.wav";
      r.duration_s = 1.5 + i;
      r.text = r.raw_text = "a";
      r.bandwidth_hz = 8000 + 500 * i;
      rs.push_back(r);
    }
    write_manifest(rs, dir / "in.jsonl");
    PipelineConfig c;
    c.input_manifest = (dir / "in.jsonl").string();
    c.output_dir = (dir / "out").string();
    for (auto s : all_stages()) c.stages[s] = s == Stage::Stats;
    const auto res = run_pipeline(c);
    REQUIRE(res.exit_code == kExitOk);
    CHECK_FALSE(fs::exists(dir / "out" / "manifest.jsonl"));
    const auto stats = Json::parse(fixtures::read_file(dir / "out" / "stats.json"));
    CHECK(stats["stats"]["utterances"] == 30);
    CHECK(stats["stats"]["speakers"] == 4);
    CHECK(fs::exists(dir / "out" / "stats.txt"));
    CHECK(fs::exists(dir / "out" / "histograms.csv"));
  }

  TEST_CASE("end to end: exit status and report bookkeeping") {
    auto& run = shared_run();
    INFO(run.result.error);
    REQUIRE(run.result.exit_code == kExitOk);
    REQUIRE(run.result.reports.size() == 6);
    for (const auto& r : run.result.reports) {
      CAPTURE(to_string(r.stage));
      CHECK(r.records_in - r.records_dropped + r.records_added - r.rejects == r.records_out);
      CHECK(fs::exists(run.out(r.output)));
    }
    CHECK(report_for(run.result, Stage::Text).details["book_match"] == 19);
    CHECK(report_for(run.result, Stage::Validation).drop_reasons.at("cer_pct >= max_cer_pct") == 1);
    CHECK(fs::exists(run.out("manifest.jsonl")));
    CHECK(fs::exists(run.out("stats.json")));
  }

  TEST_CASE("end to end: text restoration") {
    auto& run = shared_run();
    REQUIRE(run.result.exit_code == kExitOk);
    const auto text = by_id(read_manifest(run.out(report_for(run.result, Stage::Text).output)));
    REQUIRE(text.size() == 20);
    for (const auto& [id, exp] : run.corpus.expected) {
      CAPTURE(id);
      CHECK(text.at(id).text == exp.text);
      CHECK((text.at(id).text_source == TextSource::BookMatch) == exp.book_match);
    }
  }

  TEST_CASE("end to end: audio is resampled, trimmed and stored") {
    auto& run = shared_run();
    REQUIRE(run.result.exit_code == kExitOk);
    const auto audio = read_manifest(run.out(report_for(run.result, Stage::Audio).output));
    REQUIRE(audio.size() == 20);
    for (const auto& r : audio) {
      CAPTURE(r.utterance_id);
      const auto buf = load_audio(run.out(r.audio_path));
      CHECK(buf.sample_rate_hz == 44100);
      CHECK(buf.channels == 1);
      CHECK(r.offset_s == 0.0);
      CHECK(std::abs(buf.duration_s() - r.duration_s) <= 1e-4);
      const double trim = r.extra.at("trim_start_s").get<double>();
      // One second of lead silence is cut back to at most half a second.
      CHECK(trim >= 0.5 - 0.02);
      CHECK(trim <= 0.5 + 0.02);
    }
  }

  TEST_CASE("end to end: chapter bandwidth tracks the content") {
    auto& run = shared_run();
    REQUIRE(run.result.exit_code == kExitOk);
    const auto bw = by_id(read_manifest(run.out(report_for(run.result, Stage::Bandwidth).output)));
    for (const auto& [id, r] : bw) {
      CAPTURE(id);
      REQUIRE(r.bandwidth_hz);
      const double cutoff = run.corpus.chapter_cutoff_hz.at(r.chapter_id);
      CHECK(*r.bandwidth_hz >= cutoff - 2 * kBin);
      CHECK(*r.bandwidth_hz <= cutoff + 6 * kBin);
      CHECK(*r.bandwidth_hz <= run.corpus.chapter_rate_hz.at(r.chapter_id) / 2);
    }
  }

  TEST_CASE("end to end: splits land at the longest sentence pause") {
    auto& run = shared_run();
    REQUIRE(run.result.exit_code == kExitOk);
    const auto audio = by_id(read_manifest(run.out(report_for(run.result, Stage::Bandwidth).output)));
    const auto seg = by_id(read_manifest(run.out(report_for(run.result, Stage::Segmentation).output)));
    for (const auto& [id, exp] : run.corpus.expected) {
      CAPTURE(id);
      const auto& parent = audio.at(id);
      if (exp.dropped_long) {
        CHECK_FALSE(seg.contains(id));
        continue;
      }
      if (parent.duration_s < 10.0) {
        CHECK(seg.at(id) == parent);
        continue;
      }
      REQUIRE(exp.split_midpoint_s > 0);
      REQUIRE(seg.contains(id + "_a"));
      const auto& a = seg.at(id + "_a");
      const auto& b = seg.at(id + "_b");
      const double trim = parent.extra.at("trim_start_s").get<double>();
      CHECK(std::abs(a.duration_s - (exp.split_midpoint_s - trim)) <= 1.5e-4);
      CHECK(to_ticks(a.duration_s) + to_ticks(b.duration_s) == to_ticks(parent.duration_s));
      CHECK(a.text + " " + b.text == parent.text);
      CHECK(split_whitespace(a.text).size() == exp.split_after);
      CHECK(a.extra.at("split_from") == id);
    }
  }

  TEST_CASE("end to end: validation and speaker counts") {
    auto& run = shared_run();
    REQUIRE(run.result.exit_code == kExitOk);
    const auto fin = read_manifest(run.out("manifest.jsonl"));
    for (const auto& r : fin) {
      CAPTURE(r.utterance_id);
      REQUIRE(r.cer_pct);
      CHECK(*r.cer_pct < 100.0);
      REQUIRE(r.num_speakers);
      const auto parent = r.utterance_id.substr(0, 7);
      CHECK(*r.num_speakers == run.corpus.expected.at(parent).num_speakers);
      CHECK_FALSE(run.corpus.expected.at(parent).garbage_hyp);
      CHECK(r.duration_s <= 20.0);
    }
  }

  TEST_CASE("end to end: outputs do not depend on worker count") {
    auto& a = shared_run();
    Run b(1);
    REQUIRE(a.result.exit_code == kExitOk);
    REQUIRE(b.result.exit_code == kExitOk);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(a.out("")))
      if (e.is_regular_file()) files.push_back(e.path().filename().string());
    CHECK(files.size() >= 10);
    for (const auto& f : files) {
      CAPTURE(f);
      CHECK(fixtures::read_file(a.out(f)) == fixtures::read_file(b.out(f)));
    }
  }
}
