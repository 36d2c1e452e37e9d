#include <random>

#include "curate/error.hpp"
#include "curate/manifest.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace curate;
using fixtures::TempDir;

namespace {

UtteranceRecord full_record() {
  UtteranceRecord r;
  r.utterance_id = "10_20_000001";
  r.book_id = "10";
  r.chapter_id = "20";
  r.speaker_id = "30";
  r.audio_path = "audio/20.flac";
  r.offset_s = 12.5;
  r.duration_s = 14.0625;
  r.text = "Mister Allen said, \"Stop.\"";
  r.text_source = TextSource::BookMatch;
  r.raw_text = "mister allen said stop";
  r.bandwidth_hz = 13500;
  r.wer_pct = 0.0;
  r.cer_pct = 2.5;
  r.num_speakers = 1;
  r.gender = Gender::Female;
  r.extra["source"] = "mls";
  return r;
}

UtteranceRecord random_record(std::mt19937_64& rng, int i) {
  std::uniform_int_distribution<int> ticks(1, 200000), small(0, 3);
  std::uniform_real_distribution<double> pct(0.0, 150.0);
  UtteranceRecord r;
  r.utterance_id = "utt_" + std::to_string(i);
  r.book_id = "b" + std::to_string(i % 7);
  r.chapter_id = "c" + std::to_string(i % 13);
  r.speaker_id = "s" + std::to_string(i % 5);
  r.audio_path = "a/" + std::to_string(i) + ".wav";
  r.offset_s = from_ticks(ticks(rng));
  r.duration_s = from_ticks(ticks(rng));
  r.raw_text = "word " + std::to_string(i) + " caf\xC3\xA9 \"quoted\"";
  r.text = small(rng) ? "Word, " + std::to_string(i) + "." : r.raw_text;
  r.text_source = small(rng) ? TextSource::BookMatch : TextSource::PredictedPc;
  if (small(rng)) r.bandwidth_hz = 4000 + small(rng) * 3000;
  if (small(rng)) r.wer_pct = pct(rng);
  if (small(rng)) r.cer_pct = pct(rng);
  if (small(rng)) r.num_speakers = small(rng);
  r.gender = static_cast<Gender>(small(rng) % 3);
  if (i % 4 == 0) r.extra["trim_start_s"] = 0.25;
  return r;
}

}  // namespace

TEST_SUITE("manifest") {
  TEST_CASE("empty file reads as empty and empty write is zero bytes") {
    TempDir dir;
    write_manifest({}, dir / "m.jsonl");
    CHECK(std::filesystem::file_size(dir / "m.jsonl") == 0);
    CHECK(read_manifest(dir / "m.jsonl").empty());
  }

  TEST_CASE("golden line for a fully populated record") {
    TempDir dir;
    const auto rec = full_record();
    write_manifest(std::vector{rec}, dir / "m.jsonl");
    const std::string expected =
        R"({"utterance_id":"10_20_000001","book_id":"10","chapter_id":"20","speaker_id":"30",)"
        R"("audio_path":"audio/20.flac","offset_s":12.5,"duration_s":14.0625,)"
        R"("text":"Mister Allen said, \"Stop.\"","text_source":"book_match","raw_text":"mister allen said stop",)"
        R"("bandwidth_hz":13500,"wer_pct":0.0,"cer_pct":2.5,"num_speakers":1,"gender":"f","source":"mls"})"
        "\n";
    CHECK(fixtures::read_file(dir / "m.jsonl") == expected);
    const auto back = read_manifest(dir / "m.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0] == rec);
  }

  TEST_CASE("negative duration names the field and the line") {
    TempDir dir;
    fixtures::write_file(dir / "m.jsonl",
                         R"({"utterance_id":"a","book_id":"b","chapter_id":"c","speaker_id":"s","audio_path":"x","offset_s":0,"duration_s":1,"raw_text":"hi"})"
                         "\n"
                         R"({"utterance_id":"b","book_id":"b","chapter_id":"c","speaker_id":"s","audio_path":"x","offset_s":0,"duration_s":-1,"raw_text":"hi"})"
                         "\n");
    try {
      read_manifest(dir / "m.jsonl");
      FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("duration_s") != std::string::npos);
    }
  }

  TEST_CASE("malformed JSON reports its line") {
    TempDir dir;
    fixtures::write_file(dir / "m.jsonl", "\n{\"utterance_id\": \n");
    try {
      read_manifest(dir / "m.jsonl");
      FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("duplicate utterance ids are rejected") {
    TempDir dir;
    auto r = full_record();
    fixtures::write_file(dir / "m.jsonl", to_json(r).dump() + "\n" + to_json(r).dump() + "\n");
    CHECK_THROWS_AS(read_manifest(dir / "m.jsonl"), ManifestError);
  }

  TEST_CASE("missing required field is an error") {
    TempDir dir;
    fixtures::write_file(dir / "m.jsonl", R"({"utterance_id":"a"})" "\n");
    CHECK_THROWS_WITH_AS(read_manifest(dir / "m.jsonl"), doctest::Contains("book_id"), ManifestError);
  }

  TEST_CASE("text defaults to raw_text and optional fields stay absent") {
    const auto r = utterance_from_json(Json::parse(
        R"({"utterance_id":"a","book_id":"b","chapter_id":"c","speaker_id":"s","audio_path":"x","offset_s":0,"duration_s":2,"raw_text":"hi there"})"));
    CHECK(r.text == "hi there");
    CHECK_FALSE(r.bandwidth_hz);
    CHECK_FALSE(r.wer_pct);
    CHECK_FALSE(to_json(r).contains("cer_pct"));
  }

  TEST_CASE("round trip of 100 synthetic records and byte determinism") {
    TempDir dir;
    std::mt19937_64 rng(7);
    std::vector<UtteranceRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back(random_record(rng, i));
    write_manifest(recs, dir / "a.jsonl");
    write_manifest(recs, dir / "b.jsonl");
    CHECK(fixtures::read_file(dir / "a.jsonl") == fixtures::read_file(dir / "b.jsonl"));
    CHECK(read_manifest(dir / "a.jsonl") == recs);
  }

  TEST_CASE("write leaves no temporary file and creates parents") {
    TempDir dir;
    write_manifest(std::vector{full_record()}, dir / "x" / "y" / "m.jsonl");
    CHECK(std::filesystem::exists(dir / "x" / "y" / "m.jsonl"));
    CHECK_FALSE(std::filesystem::exists(dir / "x" / "y" / "m.jsonl.tmp"));
  }

  TEST_CASE("tick arithmetic keeps sums exact") {
    const double a = 7.1, b = 7.9;
    CHECK(to_ticks(a) + to_ticks(b) == to_ticks(15.0));
    CHECK(round_seconds(1.23456) == doctest::Approx(1.2346));
  }

  TEST_CASE("chapter records round trip and bandwidth must not exceed Nyquist") {
    TempDir dir;
    ChapterRecord c;
    c.chapter_id = "20";
    c.book_id = "10";
    c.speaker_id = "30";
    c.audio_path = "20.mp3";
    c.sample_rate_hz = 48000;
    c.bandwidth_hz = 16000;
    c.book_text_path = "texts/20.txt";
    write_chapters(std::vector{c}, dir / "c.jsonl");
    CHECK(read_chapters(dir / "c.jsonl") == std::vector{c});
    c.bandwidth_hz = 30000;
    CHECK_THROWS_AS(validate(c), ManifestError);
  }

  TEST_CASE("subset spec presets and JSON form") {
    CHECK(SubsetSpec::full_band_22k().min_bandwidth_hz == 11000.0);
    CHECK(SubsetSpec::high_band_44k().min_bandwidth_hz == 13000.0);
    CHECK(SubsetSpec::full_band_22k().target_sample_rate_hz == 22050);
    CHECK(SubsetSpec::high_band_44k().target_sample_rate_hz == 44100);
    const auto s = subset_spec_from_json(Json::parse(R"({"min_bandwidth_hz": 13000, "max_num_speakers": 1})"));
    CHECK(s.min_bandwidth_hz == 13000.0);
    CHECK_FALSE(s.cer_gated());
    CHECK(s.speaker_gated());
    const auto back = subset_spec_from_json(to_json(s));
    CHECK(back.max_num_speakers == 1);
    CHECK_FALSE(back.cer_gated());
    CHECK_THROWS_AS(subset_spec_from_json(Json::parse(R"({"min_bandwidth_hz": -1})")), ManifestError);
  }
}
