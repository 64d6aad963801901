#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "attnhar/data.hpp"
#include "attnhar/errors.hpp"
#include "doctest.h"

using namespace attnhar;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("attnhar_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& content) const {
    const std::string p = (path / name).string();
    std::ofstream os(p);
    os << content;
    return p;
  }
};

DatasetManifest tiny_manifest() {
  DatasetManifest m;
  m.sample_rate = 4.0;
  m.channels = {"a", "b"};
  m.modality_map = {0, 1};
  m.class_names = {"null", "act"};
  return m;
}

Recording make_recording(double rate, const std::vector<Vec>& channels,
                         const std::vector<int>& labels) {
  Recording rec;
  rec.sample_rate = rate;
  rec.channels = channels;
  rec.labels = labels;
  for (std::size_t i = 0; i < channels.size(); ++i)
    rec.channel_names.push_back("ch" + std::to_string(i));
  rec.modality_map.assign(channels.size(), 0);
  return rec;
}

}  // namespace

TEST_CASE("load_csv basics") {
  TempDir tmp;
  const DatasetManifest m = tiny_manifest();

  SUBCASE("three rows, two channels, label column") {
    const auto p = tmp.file("ok.csv", "a,b,label\n1,2,0\n3,4,1\n5,6,0\n");
    const Recording rec = load_csv(p, m);
    CHECK(rec.length() == 3);
    CHECK(rec.num_channels() == 2);
    CHECK(rec.channels[0] == Vec{1, 3, 5});
    CHECK(rec.channels[1] == Vec{2, 4, 6});
    CHECK(rec.labels == std::vector<int>{0, 1, 0});
  }

  SUBCASE("missing cell preserves length and is flagged") {
    const auto p = tmp.file("miss.csv", "a,b,label\n1,2,0\n,4,1\n5,6,0\n");
    const Recording rec = load_csv(p, m);
    CHECK(rec.length() == 3);
    CHECK(std::isnan(rec.channels[0][1]));
    CHECK(rec.channels[1][1] == 4);
  }

  SUBCASE("column count mismatch reports the line") {
    const auto p = tmp.file("ragged.csv", "a,b,label\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(p, m),
                         doctest::Contains("line 2"), DataError);
  }

  SUBCASE("non-numeric cell reports the line") {
    const auto p = tmp.file("text.csv", "a,b,label\n1,x,0\n");
    CHECK_THROWS_WITH_AS(load_csv(p, m), doctest::Contains("non-numeric"), DataError);
  }

  SUBCASE("unknown label value") {
    const auto p = tmp.file("lab.csv", "a,b,label\n1,2,7\n");
    CHECK_THROWS_WITH_AS(load_csv(p, m), doctest::Contains("unknown label"), DataError);
  }

  SUBCASE("timestamp column is ignored") {
    const auto p = tmp.file("ts.csv", "timestamp,a,b,label\n0.0,1,2,0\n0.25,3,4,1\n");
    const Recording rec = load_csv(p, m);
    CHECK(rec.length() == 2);
    CHECK(rec.channels[0] == Vec{1, 3});
  }
}

TEST_CASE("fill_missing") {
  SUBCASE("midpoint interpolation") {
    Recording rec = make_recording(1.0, {{1.0, NAN, 3.0}}, {0, 0, 0});
    rec = fill_missing(std::move(rec));
    CHECK(rec.channels[0] == Vec{1.0, 2.0, 3.0});
  }
  SUBCASE("edge fill") {
    Recording rec = make_recording(1.0, {{NAN, 5.0, 5.0}}, {0, 0, 0});
    rec = fill_missing(std::move(rec));
    CHECK(rec.channels[0] == Vec{5.0, 5.0, 5.0});
  }
  SUBCASE("identity on complete data") {
    Recording rec = make_recording(1.0, {{1.0, 7.0, -2.0}}, {0, 0, 0});
    const Vec before = rec.channels[0];
    rec = fill_missing(std::move(rec));
    CHECK(rec.channels[0] == before);
  }
  SUBCASE("long interior gap is linear") {
    Recording rec = make_recording(1.0, {{0.0, NAN, NAN, NAN, 4.0}}, {0, 0, 0, 0, 0});
    rec = fill_missing(std::move(rec));
    CHECK(rec.channels[0] == Vec{0.0, 1.0, 2.0, 3.0, 4.0});
  }
  SUBCASE("fully missing channel is an error") {
    Recording rec = make_recording(1.0, {{NAN, NAN}}, {0, 0});
    CHECK_THROWS_AS(fill_missing(std::move(rec)), DataError);
  }
}

TEST_CASE("downsample") {
  SUBCASE("unchanged rate is the identity") {
    const Recording rec = make_recording(4.0, {{1, 2, 3, 4}}, {0, 1, 1, 0});
    const Recording out = downsample(rec, 4.0);
    CHECK(out.channels[0] == rec.channels[0]);
    CHECK(out.labels == rec.labels);
  }
  SUBCASE("4 Hz to 2 Hz averages pairs") {
    const Recording rec = make_recording(4.0, {{1, 3, 5, 7}}, {0, 0, 1, 1});
    const Recording out = downsample(rec, 2.0);
    CHECK(out.channels[0] == Vec{2.0, 6.0});
    CHECK(out.labels == std::vector<int>{0, 1});
    CHECK(out.sample_rate == 2.0);
  }
  SUBCASE("100 Hz to 33.3 Hz on 1000 samples gives 333") {
    Vec data(1000);
    for (std::size_t i = 0; i < 1000; ++i) data[i] = double(i);
    const Recording rec = make_recording(100.0, {data}, std::vector<int>(1000, 0));
    const Recording out = downsample(rec, 33.3);
    // index-formula oracle: count n with floor((n+1) * rate/target) <= 1000
    std::size_t expected = 0;
    const double ratio = 100.0 / 33.3;
    while (std::floor(double(expected + 1) * ratio) <= 1000.0) ++expected;
    CHECK(expected == 333);
    CHECK(out.length() == expected);
  }
  SUBCASE("majority label with earliest-first tie break") {
    // block of 4: labels 2,9,9,2 -> tie between 2 and 9 -> earliest first seen is 2
    const Recording rec = make_recording(4.0, {{0, 0, 0, 0}}, {2, 9, 9, 2});
    DatasetManifest m;
    const Recording out = downsample(rec, 1.0);
    CHECK(out.labels == std::vector<int>{2});
  }
  SUBCASE("upsampling is rejected") {
    const Recording rec = make_recording(4.0, {{1, 2}}, {0, 0});
    CHECK_THROWS_AS(downsample(rec, 8.0), ArgumentError);
    CHECK_THROWS_AS(downsample(rec, 0.0), ArgumentError);
  }
}

TEST_CASE("compute_stats and standardize") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> noise(3.0, 2.5);
  Vec data(500);
  for (double& v : data) v = noise(rng);
  const Recording rec = make_recording(10.0, {data}, std::vector<int>(500, 0));

  SUBCASE("own stats give mean 0 variance 1") {
    const ChannelStats stats = compute_stats({rec});
    const Recording out = standardize(rec, stats);
    double mean = 0.0, var = 0.0;
    for (double v : out.channels[0]) mean += v;
    mean /= 500.0;
    for (double v : out.channels[0]) var += (v - mean) * (v - mean);
    var /= 500.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }

  SUBCASE("constant channel floors the std and zeroes the output") {
    const Recording flat = make_recording(10.0, {Vec(100, 7.5)}, std::vector<int>(100, 0));
    const ChannelStats stats = compute_stats({flat});
    CHECK(stats.stddev[0] == 1e-8);
    const Recording out = standardize(flat, stats);
    for (double v : out.channels[0]) CHECK(v == 0.0);
  }

  SUBCASE("shifted split standardized by train stats keeps its offset") {
    Vec shifted = data;
    for (double& v : shifted) v += 4.0;
    const Recording test = make_recording(10.0, {shifted}, std::vector<int>(500, 0));
    const ChannelStats stats = compute_stats({rec});
    const Recording out = standardize(test, stats);
    double mean = 0.0;
    for (double v : out.channels[0]) mean += v;
    mean /= 500.0;
    CHECK(std::abs(mean) > 1.0);  // distribution shift survives
  }

  SUBCASE("leakage guard rejects non-training stats") {
    const ChannelStats stats = compute_stats({rec}, StatsProvenance::other);
    CHECK_THROWS_AS(standardize(rec, stats), ArgumentError);
  }
}

TEST_CASE("window extraction") {
  const std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  Vec data(10);
  for (std::size_t i = 0; i < 10; ++i) data[i] = double(i);
  const Recording rec = make_recording(1.0, {data}, labels);

  SUBCASE("no overlap floors the count") {
    const auto ws = window(rec, 4.0, 0.0);
    REQUIRE(ws.size() == 2);
    CHECK(ws[0].start == 0);
    CHECK(ws[1].start == 4);
    CHECK(ws[0].x(0, 0) == 0.0);
    CHECK(ws[1].x(3, 0) == 7.0);
  }
  SUBCASE("50 percent overlap starts at 0,2,4,6") {
    const auto ws = window(rec, 4.0, 0.5);
    REQUIRE(ws.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ws[i].start == 2 * i);
  }
  SUBCASE("majority labels with last-sample tie break") {
    const auto ws = window(rec, 4.0, 0.5);
    CHECK(ws[0].label == 0);  // 0,0,0,0 -> clear majority
    CHECK(ws[1].label == 1);  // 0,0,1,1 -> tie -> label of the last sample
    CHECK(ws[3].label == 1);
  }
  SUBCASE("last_sample rule") {
    const auto ws = window(rec, 4.0, 0.0, LabelRule::last_sample);
    CHECK(ws[0].label == 0);
    CHECK(ws[1].label == 1);
  }
  SUBCASE("recording shorter than the window gives an empty list") {
    const auto ws = window(rec, 20.0, 0.0);
    CHECK(ws.empty());
  }
  SUBCASE("windows never span recordings") {
    const Recording second = make_recording(1.0, {Vec(7, 1.0)}, std::vector<int>(7, 1));
    const auto ws = window_all({rec, second}, 4.0, 0.0);
    for (const auto& w : ws) {
      const std::size_t len = w.recording == 0 ? 10 : 7;
      CHECK(w.start + w.x.rows() <= len);
    }
    // ids are sequential over (recording, start)
    for (std::size_t i = 0; i < ws.size(); ++i) CHECK(ws[i].id == i);
  }
}

TEST_CASE("the pamap2 recipe yields L=171, S=38") {
  // 5.12 s at the 100/3 Hz target with 78% overlap
  const double rate = 100.0 / 3.0;
  Vec data(2000, 0.0);
  const Recording rec = make_recording(rate, {data}, std::vector<int>(2000, 0));
  const auto ws = window(rec, 5.12, 0.78);
  REQUIRE(!ws.empty());
  CHECK(ws[0].x.rows() == 171);
  CHECK(ws[1].start - ws[0].start == 38);
}

TEST_CASE("window counts match the closed-form formula on random lengths") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> len_dist(1, 400);
  std::uniform_real_distribution<double> sec_dist(0.5, 5.0);
  std::uniform_real_distribution<double> ov_dist(0.0, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = len_dist(rng);
    const double rate = 10.0;
    const double seconds = sec_dist(rng);
    const double overlap = ov_dist(rng);
    const Recording rec = make_recording(rate, {Vec(n, 0.0)}, std::vector<int>(n, 0));
    const auto l = static_cast<std::size_t>(std::llround(seconds * rate));
    if (l < 1) continue;
    const auto s = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(double(l) * (1.0 - overlap))));
    const std::size_t expected = n >= l ? (n - l) / s + 1 : 0;
    CHECK(window(rec, seconds, overlap).size() == expected);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.n_windows = 60;
  spec.length = 32;
  spec.channels = 6;
  spec.modalities = 3;
  spec.classes = 2;
  spec.motif_min = 6;
  spec.motif_max = 12;
  spec.seed = 5;

  SUBCASE("zero noise means the motif interval is exactly the nonzero support") {
    SyntheticSpec s = spec;
    s.noise_std = 0.0;
    const SyntheticData data = gen_synthetic(s);
    for (const auto* split : {&data.train, &data.val, &data.test}) {
      for (const auto& w : *split) {
        REQUIRE(w.truth.has_value());
        for (std::size_t c = 0; c < s.channels; ++c) {
          const bool informative = data.manifest.modality_map[c] == w.truth->modality;
          for (std::size_t t = 0; t < s.length; ++t) {
            const bool inside = t >= w.truth->begin && t < w.truth->end;
            if (informative && inside) {
              CHECK(w.x(t, c) != 0.0);
            } else {
              CHECK(w.x(t, c) == 0.0);
            }
          }
        }
      }
    }
  }

  SUBCASE("same seed reproduces the dataset bit for bit") {
    const SyntheticData a = gen_synthetic(spec);
    const SyntheticData b = gen_synthetic(spec);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].x == b.train[i].x);
      CHECK(a.train[i].label == b.train[i].label);
      CHECK(a.train[i].id == b.train[i].id);
    }
  }

  SUBCASE("split sizes are 70/15/15") {
    const SyntheticData data = gen_synthetic(spec);
    CHECK(data.train.size() == 42);
    CHECK(data.val.size() == 9);
    CHECK(data.test.size() == 9);
  }

  SUBCASE("motif interval fits the window and the configured duration") {
    const SyntheticData data = gen_synthetic(spec);
    for (const auto& w : data.train) {
      REQUIRE(w.truth.has_value());
      CHECK(w.truth->end <= spec.length);
      const std::size_t dur = w.truth->end - w.truth->begin;
      CHECK(dur >= spec.motif_min);
      CHECK(dur <= spec.motif_max);
      CHECK(w.truth->modality < spec.modalities);
    }
  }

  SUBCASE("class-conditional power is higher inside the motif") {
    SyntheticSpec s = spec;
    s.n_windows = 500;
    s.noise_std = 0.5;
    const SyntheticData data = gen_synthetic(s);
    double inside = 0.0, outside = 0.0;
    std::size_t n_in = 0, n_out = 0;
    auto tally = [&](const std::vector<SequenceWindow>& split) {
      for (const auto& w : split) {
        for (std::size_t c = 0; c < s.channels; ++c) {
          if (data.manifest.modality_map[c] != w.truth->modality) continue;
          for (std::size_t t = 0; t < s.length; ++t) {
            const double p = w.x(t, c) * w.x(t, c);
            if (t >= w.truth->begin && t < w.truth->end) {
              inside += p;
              ++n_in;
            } else {
              outside += p;
              ++n_out;
            }
          }
        }
      }
    };
    tally(data.train);
    tally(data.val);
    tally(data.test);
    CHECK(inside / double(n_in) > outside / double(n_out));
  }

  SUBCASE("spec validation") {
    SyntheticSpec bad = spec;
    bad.motif_max = 100;
    CHECK_THROWS_AS(gen_synthetic(bad), ArgumentError);
    bad = spec;
    bad.modalities = 9;
    CHECK_THROWS_AS(gen_synthetic(bad), ArgumentError);
    bad = spec;
    bad.informative_modality = {0};
    CHECK_THROWS_AS(gen_synthetic(bad), ArgumentError);
  }
}

TEST_CASE("window dump CSV round trip") {
  TempDir tmp;
  SyntheticSpec spec;
  spec.n_windows = 20;
  spec.length = 16;
  spec.channels = 4;
  spec.modalities = 2;
  spec.classes = 2;
  spec.motif_min = 4;
  spec.motif_max = 8;
  spec.seed = 9;
  const SyntheticData data = gen_synthetic(spec);

  const std::string csv = (tmp.path / "w.csv").string();
  save_windows_csv(csv, data.train, data.manifest);
  const auto loaded = load_windows_csv(csv, data.manifest);
  REQUIRE(loaded.size() == data.train.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].x == data.train[i].x);  // bit-exact via shortest round-trip format
    CHECK(loaded[i].label == data.train[i].label);
    CHECK(loaded[i].id == data.train[i].id);
  }
}

TEST_CASE("manifest round trip") {
  TempDir tmp;
  DatasetManifest m = tiny_manifest();
  m.windowed = true;
  m.window_length = 12;
  m.ground_truth = "gt.jsonl";
  const std::string p = (tmp.path / "manifest.json").string();
  save_manifest(p, m);
  const DatasetManifest loaded = load_manifest(p);
  CHECK(loaded.sample_rate == m.sample_rate);
  CHECK(loaded.channels == m.channels);
  CHECK(loaded.modality_map == m.modality_map);
  CHECK(loaded.class_names == m.class_names);
  CHECK(loaded.windowed);
  CHECK(loaded.window_length == 12);
  CHECK(loaded.ground_truth == "gt.jsonl");
}
