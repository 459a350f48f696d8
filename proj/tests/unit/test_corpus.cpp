#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "nnspeaker/audio.hpp"
#include "nnspeaker/common.hpp"
#include "nnspeaker/corpus.hpp"
#include "nnspeaker/synth.hpp"

using namespace nnspeaker;
namespace fs = std::filesystem;

namespace {

// Hand-built wav bytes for format error cases.
void write_raw_wav(const fs::path& path, uint16_t format, uint16_t channels, uint16_t bits,
                   const std::vector<int16_t>& data, bool truncate_data = false) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_size = static_cast<uint32_t>(data.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(8000);
  u32(8000u * channels * bits / 8);
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(bits);
  out.write("data", 4);
  u32(data_size);
  const size_t n = truncate_data ? data.size() / 2 : data.size();
  for (size_t i = 0; i < n; ++i) u16(static_cast<uint16_t>(data[i]));
}

}  // namespace

TEST_CASE("read_wav scales 16-bit samples by 1/32768") {
  const auto dir = test_helpers::fresh_dir("wav_scale");
  write_raw_wav(dir / "a.wav", 1, 1, 16, {0, 16384, -32768});
  const AudioBuffer audio = read_wav(dir / "a.wav");
  REQUIRE(audio.samples.size() == 3);
  CHECK(audio.samples[0] == doctest::Approx(0.0));
  CHECK(audio.samples[1] == doctest::Approx(0.5));
  CHECK(audio.samples[2] == doctest::Approx(-1.0));
  CHECK(audio.sample_rate == 8000);
}

TEST_CASE("read_wav accepts an empty data chunk") {
  const auto dir = test_helpers::fresh_dir("wav_empty");
  write_raw_wav(dir / "empty.wav", 1, 1, 16, {});
  CHECK(read_wav(dir / "empty.wav").samples.empty());
}

TEST_CASE("read_wav rejects stereo, non-PCM and truncated files") {
  const auto dir = test_helpers::fresh_dir("wav_bad");
  write_raw_wav(dir / "stereo.wav", 1, 2, 16, {0, 0, 0, 0});
  CHECK_THROWS_AS(read_wav(dir / "stereo.wav"), FormatError);
  write_raw_wav(dir / "float.wav", 3, 1, 16, {0, 0});
  CHECK_THROWS_AS(read_wav(dir / "float.wav"), FormatError);
  write_raw_wav(dir / "trunc.wav", 1, 1, 16, {1, 2, 3, 4}, /*truncate_data=*/true);
  CHECK_THROWS_AS(read_wav(dir / "trunc.wav"), ParseError);
}

TEST_CASE("wav write/read round-trips within one quantization step") {
  const auto dir = test_helpers::fresh_dir("wav_roundtrip");
  std::mt19937_64 rng(11);
  AudioBuffer audio;
  audio.sample_rate = 8000;
  for (int i = 0; i < 500; ++i)
    audio.samples.push_back(test_helpers::uniform(rng, -1.0, 1.0));
  write_wav(dir / "r.wav", audio);
  const AudioBuffer back = read_wav(dir / "r.wav");
  REQUIRE(back.samples.size() == audio.samples.size());
  for (size_t i = 0; i < back.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - audio.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("synthetic corpus generation") {
  corpus::SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_speakers = 4;
  cfg.files_per_speaker = 4;
  cfg.duration_s = 1.0;

  const auto dir_a = test_helpers::fresh_dir("synth_a");
  const auto manifest = corpus::generate_synthetic_corpus(cfg, dir_a);

  SUBCASE("declared size and sample counts") {
    CHECK(manifest.entries.size() == 16);
    CHECK(manifest.speakers().size() == 4);
    const AudioBuffer audio = read_wav(manifest.entries.front().path);
    CHECK(audio.samples.size() == 8000);  // 1 s at 8 kHz
    CHECK(audio.sample_rate == 8000);
  }

  SUBCASE("identical seeds give byte-identical corpora") {
    const auto dir_b = test_helpers::fresh_dir("synth_b");
    const auto manifest_b = corpus::generate_synthetic_corpus(cfg, dir_b);
    REQUIRE(manifest_b.entries.size() == manifest.entries.size());
    for (size_t i = 0; i < manifest.entries.size(); ++i)
      CHECK(hash_file(manifest.entries[i].path) == hash_file(manifest_b.entries[i].path));
  }

  SUBCASE("different seeds differ somewhere") {
    auto cfg2 = cfg;
    cfg2.seed = 8;
    const auto dir_c = test_helpers::fresh_dir("synth_c");
    const auto manifest_c = corpus::generate_synthetic_corpus(cfg2, dir_c);
    bool any_diff = false;
    for (size_t i = 0; i < manifest.entries.size(); ++i)
      any_diff |= hash_file(manifest.entries[i].path) != hash_file(manifest_c.entries[i].path);
    CHECK(any_diff);
  }

  SUBCASE("build_manifest round-trips the generated tree") {
    const auto scanned = corpus::build_manifest(dir_a);
    REQUIRE(scanned.entries.size() == manifest.entries.size());
    for (size_t i = 0; i < scanned.entries.size(); ++i) {
      CHECK(scanned.entries[i].speaker_id == manifest.entries[i].speaker_id);
      CHECK(scanned.entries[i].sentence_id == manifest.entries[i].sentence_id);
      CHECK(scanned.entries[i].category == manifest.entries[i].category);
    }
    // Determinism: scanning twice gives the identical listing.
    const auto scanned2 = corpus::build_manifest(dir_a);
    REQUIRE(scanned2.entries.size() == scanned.entries.size());
    for (size_t i = 0; i < scanned.entries.size(); ++i)
      CHECK(scanned2.entries[i].path == scanned.entries[i].path);
  }

  SUBCASE("manifest csv round-trip") {
    const auto csv = dir_a / "manifest.csv";
    corpus::write_manifest_csv(manifest, csv);
    const auto back = corpus::read_manifest_csv(csv);
    REQUIRE(back.entries.size() == manifest.entries.size());
    for (size_t i = 0; i < back.entries.size(); ++i) {
      CHECK(back.entries[i].speaker_id == manifest.entries[i].speaker_id);
      CHECK(back.entries[i].category == manifest.entries[i].category);
    }
  }
}

TEST_CASE("build_manifest of an empty directory is empty") {
  const auto dir = test_helpers::fresh_dir("empty_root");
  CHECK(corpus::build_manifest(dir).entries.empty());
}

TEST_CASE("make_split partitions speakers and separates categories") {
  corpus::SynthConfig cfg;
  cfg.seed = 3;
  cfg.n_speakers = 5;
  cfg.files_per_speaker = 4;
  cfg.duration_s = 1.0;
  const auto dir = test_helpers::fresh_dir("split");
  const auto manifest = corpus::generate_synthetic_corpus(cfg, dir);

  const auto split = corpus::make_split(manifest, 3);
  CHECK(split.group_a.size() == 3);
  CHECK(split.group_b.size() == 2);

  // Partition: every speaker in exactly one group.
  std::set<std::string> joint(split.group_a.begin(), split.group_a.end());
  for (const auto& s : split.group_b) CHECK(joint.insert(s).second);
  CHECK(joint.size() == manifest.speakers().size());

  // Train and test file sets are disjoint for every group A speaker.
  for (const auto& speaker : split.group_a) {
    for (const auto& e : manifest.entries_for(speaker)) {
      const bool tr = split.is_train_category(e.category);
      const bool te = split.is_test_category(e.category);
      CHECK(tr != te);
    }
  }

  SUBCASE("all speakers in-domain leaves no imposters") {
    const auto full = corpus::make_split(manifest, 5);
    CHECK(full.group_a.size() == 5);
    CHECK(full.group_b.empty());
  }

  SUBCASE("bad n_in_domain") {
    CHECK_THROWS_AS(corpus::make_split(manifest, 0), std::invalid_argument);
    CHECK_THROWS_AS(corpus::make_split(manifest, 6), std::invalid_argument);
  }

  SUBCASE("split json round-trip") {
    const auto path = dir / "split.json";
    corpus::write_split_json(split, path);
    const auto back = corpus::read_split_json(path);
    CHECK(back.group_a == split.group_a);
    CHECK(back.group_b == split.group_b);
    CHECK(back.train_categories == split.train_categories);
    CHECK(back.test_categories == split.test_categories);
  }
}
