#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "pqc/audio.hpp"
#include "pqc/corpus.hpp"
#include "pqc/rng.hpp"

using namespace pqc;
using namespace pqc::corpus;

namespace {

const FileProbe kAllExist = [](const std::filesystem::path&) { return true; };

const char* kTwoRecords = R"(# two fruits
layout 2 1
crop 2 0 0 10 12
record F1 H
audio side 1 unidirectional F1/a0.wav
audio bottom 2 omnidirectional F1/a1.wav   # trailing comment
photo bottom 2 bottom F1/p0.ppm
record F2 SS
audio side 1 omnidirectional F2/a0.wav
audio side 2 unidirectional F2/a1.wav
photo side 1 side F2/p0.ppm
)";

Corpus synthetic(std::size_t records, std::uint64_t seed = 7) {
  SyntheticConfig cfg;
  cfg.records = records;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

std::size_t total_pairs(const std::vector<PairSet>& sets) {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.pairs.size();
  return n;
}

// Dense least squares by normal equations and Gaussian elimination.
std::vector<double> solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                          std::size_t rhs) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    }
    for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
    for (std::size_t c = 0; c < rhs; ++c) std::swap(b[col * rhs + c], b[piv * rhs + c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      for (std::size_t c = 0; c < rhs; ++c) b[r * rhs + c] -= f * b[col * rhs + c];
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < rhs; ++c) b[r * rhs + c] /= a[r * n + r];
  }
  return b;
}

double probe_train_accuracy(const std::vector<std::vector<double>>& x,
                            const std::vector<std::size_t>& y) {
  const std::size_t d = x.front().size() + 1;
  std::vector<double> xtx(d * d, 0.0), xty(d * kClasses, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> row(x[i]);
    row.push_back(1.0);
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = 0; q < d; ++q) xtx[p * d + q] += row[p] * row[q];
      xty[p * kClasses + y[i]] += row[p];
    }
  }
  for (std::size_t p = 0; p < d; ++p) xtx[p * d + p] += 1e-6;
  const auto w = solve(xtx, xty, d, kClasses);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::array<double, kClasses> score{};
    for (std::size_t c = 0; c < kClasses; ++c) {
      score[c] = w[(d - 1) * kClasses + c];
      for (std::size_t p = 0; p + 1 < d; ++p) score[c] += x[i][p] * w[p * kClasses + c];
    }
    const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) -
                                               score.begin());
    hit += best == y[i];
  }
  return static_cast<double>(hit) / static_cast<double>(x.size());
}

std::vector<double> pooled_mel(const Bytes& wav) {
  const auto mel = audio::preprocess_audio(wav);
  std::vector<double> pooled(audio::kMelBins, 0.0);
  for (std::size_t t = 0; t < audio::kFrames; ++t) {
    for (std::size_t b = 0; b < audio::kMelBins; ++b) pooled[b] += mel[t * audio::kMelBins + b];
  }
  for (auto& v : pooled) v /= audio::kFrames;
  return pooled;
}

}  // namespace

TEST_CASE("label tokens round trip in moisture order") {
  const char* tokens[] = {"H", "SH", "SS", "S"};
  for (std::size_t c = 0; c < kClasses; ++c) {
    CHECK(label_token(Label(c)) == tokens[c]);
    CHECK(ordinal(parse_label(tokens[c])) == c);
  }
  CHECK_THROWS_AS(parse_label("X"), UnknownLabel);
  CHECK_THROWS_AS(parse_label("h"), UnknownLabel);
}

TEST_CASE("manifest parses records, views and crops") {
  const Corpus c = parse_manifest(kTwoRecords, "/data", kAllExist);
  REQUIRE(c.records.size() == 2);
  CHECK(c.origin == Origin::kManifest);
  CHECK(c.records[0].id == "F1");
  CHECK(c.records[0].label == Label::kH);
  CHECK(c.records[1].label == Label::kSS);
  CHECK(c.audio_count() == 4);
  CHECK(c.photo_count() == 2);
  const auto& a1 = c.records[0].audio[1];
  CHECK(a1.surface == Surface::kBottom);
  CHECK(a1.location == 2);
  CHECK(a1.mic == MicType::kOmnidirectional);
  CHECK(a1.content == PhotoContent::kNone);
  CHECK(a1.path == "F1/a1.wav");
  const auto& p = c.records[1].photos[0];
  CHECK(p.modality == Modality::kVisual);
  CHECK(p.mic == MicType::kNone);
  CHECK(p.content == PhotoContent::kSide);
  REQUIRE(crop_for(c, c.records[0].photos[0]).has_value());
  CHECK(crop_for(c, c.records[0].photos[0])->width == 12);
  CHECK_FALSE(crop_for(c, p).has_value());
}

TEST_CASE("manifest validation is strict") {
  auto parse = [](const std::string& text) { return parse_manifest(text, ".", kAllExist); };
  const std::string a = "audio side 1 unidirectional a.wav\n";
  const std::string p = "photo side 1 side p.ppm\n";
  CHECK_THROWS_AS(parse("record A X\n" + a + p), UnknownLabel);
  CHECK_THROWS_AS(parse("record A H\n" + a + p + "record A S\n" + a + p), DuplicateId);
  CHECK_THROWS_AS(parse("record A H\n" + a + a + p), DuplicateId);
  CHECK_THROWS_AS(parse(a + "record A H\n" + p), MalformedManifest);
  CHECK_THROWS_AS(parse("record A H\n" + p), MalformedManifest);
  CHECK_THROWS_AS(parse("record A H\naudio top 1 unidirectional a.wav\n" + p), MalformedManifest);
  CHECK_THROWS_AS(parse("record A H\naudio side 3 unidirectional a.wav\n" + p), MalformedManifest);
  CHECK_THROWS_AS(parse("record A H\naudio side 1 stereo a.wav\n" + p), MalformedManifest);
  CHECK_THROWS_AS(parse("layout 2 1\nrecord A H\n" + a + p), MalformedManifest);
  CHECK_THROWS_AS(parse("frobnicate\n"), MalformedManifest);
  CHECK_THROWS_AS(parse_manifest("record A H\n" + a + p, ".",
                                 [](const std::filesystem::path& f) {
                                   return f.filename() != "p.ppm";
                                 }),
                  MissingFile);
  CHECK(parse("").records.empty());
}

TEST_CASE("formatted manifest parses back to the same records") {
  const Corpus c = synthetic(12);
  const Corpus back = parse_manifest(format_manifest(c), "/x", kAllExist);
  CHECK(back.records == c.records);
  CHECK(back.crops.size() == c.crops.size());
  CHECK(format_manifest(back) == format_manifest(c));
}

TEST_CASE("class allocation by largest remainder") {
  using A = std::array<std::size_t, kClasses>;
  CHECK(allocate_classes({0.4, 0.3, 0.2, 0.1}, 40) == A{16, 12, 8, 4});
  CHECK(allocate_classes({0.4, 0.3, 0.2, 0.1}, 500) == A{200, 150, 100, 50});
  CHECK(allocate_classes({0.25, 0.25, 0.25, 0.25}, 6) == A{2, 2, 1, 1});
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::array<double, kClasses> p{};
    double s = 0;
    for (auto& v : p) s += (v = rng.uniform(0.01, 1.0));
    for (auto& v : p) v /= s;
    const std::size_t n = 1 + rng.below(300);
    const auto got = allocate_classes(p, n);
    std::size_t total = 0;
    for (std::size_t c = 0; c < kClasses; ++c) {
      total += got[c];
      CHECK(std::abs(static_cast<double>(got[c]) - p[c] * n) < 1.0);
    }
    CHECK(total == n);
  }
  SyntheticConfig cfg;
  cfg.records = 40;
  CHECK(generate_synthetic(cfg).class_counts() == A{16, 12, 8, 4});
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [](auto mutate) {
    SyntheticConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
  };
  bad([](SyntheticConfig& c) { c.proportions = {0.5, 0.3, 0.2, 0.1}; });
  bad([](SyntheticConfig& c) { c.audio_separability = 1.5; });
  bad([](SyntheticConfig& c) { c.visual_separability = -0.1; });
  bad([](SyntheticConfig& c) { c.records = 0; });
  bad([](SyntheticConfig& c) { c.photos_per_record = 0; });
}

TEST_CASE("synthetic view layout mirrors the recording rig") {
  const Corpus c = synthetic(4);
  const auto& r = c.records[0];
  REQUIRE(r.audio.size() == 20);
  REQUIRE(r.photos.size() == 16);
  std::size_t loc1 = 0, loc1_side = 0, uni = 0, loc2_bottom_photo = 0;
  std::set<std::string> paths;
  for (const auto& m : r.audio) {
    CHECK(m.mic != MicType::kNone);
    CHECK(m.content == PhotoContent::kNone);
    loc1 += m.location == 1;
    loc1_side += m.location == 1 && m.surface == Surface::kSide;
    uni += m.mic == MicType::kUnidirectional;
    paths.insert(m.path);
  }
  for (const auto& m : r.photos) {
    CHECK(m.mic == MicType::kNone);
    CHECK(m.content != PhotoContent::kNone);
    loc2_bottom_photo += m.location == 2 && m.content == PhotoContent::kBottom;
    paths.insert(m.path);
  }
  CHECK(loc1 == 8);
  CHECK(loc1_side == 4);
  CHECK(uni == 8);
  CHECK(loc2_bottom_photo == 4);
  CHECK(paths.size() == 36);
}

TEST_CASE("PQC500-shaped corpus totals") {
  const Corpus c = synthetic(500);
  CHECK(c.audio_count() == 10000);
  CHECK(c.photo_count() == 8000);
  const Split s = stratified_split(c, 0.8, 11);
  CHECK(s.train.records.size() == 400);
  CHECK(s.test.records.size() == 100);
  CHECK(s.train.audio_count() == 8000);
  CHECK(s.train.photo_count() == 6400);
  CHECK(s.test.audio_count() == 2000);
  CHECK(s.test.photo_count() == 1600);
  std::size_t omega = 0;
  for (const auto& r : s.train.records) {
    const auto ps = enumerate_pairs(r);
    CHECK(ps.pairs.size() == 320);
    omega += ps.pairs.size();
  }
  CHECK(omega == 128000);
  const auto test_pairs = build_test_pairs(s.test);
  CHECK(test_pairs.size() == 100);
  for (const auto& ps : test_pairs) CHECK(ps.pairs.size() == 16);
  CHECK(total_pairs(test_pairs) == 1600);
}

TEST_CASE("stratified split per-class counts") {
  Corpus c;
  const std::array<std::size_t, kClasses> counts{200, 100, 60, 40};
  for (std::size_t cls = 0; cls < kClasses; ++cls) {
    for (std::size_t i = 0; i < counts[cls]; ++i) {
      c.records.push_back({"r" + std::to_string(cls) + "_" + std::to_string(i), Label(cls), {}, {}});
    }
  }
  Rng(5).shuffle(c.records);
  const Split s = stratified_split(c, 0.8, 3);
  CHECK(s.train.class_counts() == std::array<std::size_t, kClasses>{160, 80, 48, 32});
  CHECK(s.test.class_counts() == std::array<std::size_t, kClasses>{40, 20, 12, 8});

  const Split again = stratified_split(c, 0.8, 3);
  CHECK(again.train.records == s.train.records);
  CHECK(again.test.records == s.test.records);
  CHECK(stratified_split(c, 0.8, 4).train.records != s.train.records);

  Corpus missing;
  missing.records.push_back({"a", Label::kH, {}, {}});
  CHECK_THROWS_AS(stratified_split(missing, 0.8, 1), EmptyClass);
}

TEST_CASE("stratified split is disjoint, exhaustive and near 4:1 per class") {
  Rng rng(21);
  for (int t = 0; t < 40; ++t) {
    Corpus c;
    const std::size_t n = 4 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) {
      c.records.push_back({"r" + std::to_string(i), Label(i < 4 ? i : rng.below(kClasses)), {}, {}});
    }
    const Split s = stratified_split(c, 0.8, rng.next_u64());
    std::set<std::string> ids;
    for (const auto& r : s.train.records) ids.insert(r.id);
    for (const auto& r : s.test.records) CHECK(ids.insert(r.id).second);
    CHECK(ids.size() == n);
    const auto all = c.class_counts();
    const auto tr = s.train.class_counts();
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
      CHECK(std::abs(static_cast<double>(tr[cls]) - 0.8 * all[cls]) <= 1.0);
    }
    // Input order is preserved within each part.
    std::size_t last = 0;
    for (const auto& r : s.train.records) {
      const auto pos = static_cast<std::size_t>(std::stoul(r.id.substr(1)));
      CHECK(pos >= last);
      last = pos;
    }
  }
}

TEST_CASE("enumerate_pairs is the lexicographic product") {
  PineappleRecord r{"x", Label::kH, std::vector<MediaMeta>(2), std::vector<MediaMeta>(3)};
  const auto ps = enumerate_pairs(r);
  const std::vector<Pair> want{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}};
  CHECK(ps.pairs == want);
  CHECK(ps.record_id == "x");
  for (std::size_t j = 1; j <= 32; j += 3) {
    for (std::size_t k = 1; k <= 32; k += 5) {
      PineappleRecord q{"q", Label::kS, std::vector<MediaMeta>(j), std::vector<MediaMeta>(k)};
      const auto e = enumerate_pairs(q).pairs;
      CHECK(e.size() == j * k);
      CHECK(std::is_sorted(e.begin(), e.end()));
      CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
    }
  }
  PineappleRecord one{"o", Label::kH, std::vector<MediaMeta>(1), std::vector<MediaMeta>(1)};
  CHECK(enumerate_pairs(one).pairs == std::vector<Pair>{{0, 0}});
}

TEST_CASE("sample_pairs invariants for every strategy") {
  const Corpus c = synthetic(30);
  for (Strategy st : {Strategy::kRandom, Strategy::kAudioMajor, Strategy::kVisualMajor}) {
    for (std::size_t S : {1u, 4u, 8u, 16u, 32u}) {
      for (std::size_t i = 0; i < c.records.size(); ++i) {
        const auto& r = c.records[i];
        const auto omega = enumerate_pairs(r);
        SamplingConfig cfg{st, S, 1000 + i, {}};
        const auto got = sample_pairs(r, omega, cfg);
        REQUIRE(got.pairs.size() == S);
        CHECK(std::is_sorted(got.pairs.begin(), got.pairs.end()));
        CHECK(std::adjacent_find(got.pairs.begin(), got.pairs.end()) == got.pairs.end());
        CHECK(sample_pairs(r, omega, cfg).pairs == got.pairs);
        if (st == Strategy::kRandom) continue;
        const bool am = st == Strategy::kAudioMajor;
        std::map<std::size_t, std::size_t> uses;
        const auto& media = am ? r.audio : r.photos;
        std::size_t pool = 0;
        for (std::size_t m = 0; m < media.size(); ++m) {
          if (am ? default_audio_pool(media[m]) : default_visual_pool(media[m])) {
            uses[m] = 0;
            ++pool;
          }
        }
        for (const auto& p : got.pairs) {
          const std::size_t major = am ? p.audio : p.photo;
          REQUIRE(uses.count(major) == 1);
          ++uses[major];
        }
        std::size_t lo = S, hi = 0;
        for (const auto& [m, n] : uses) {
          lo = std::min(lo, n);
          hi = std::max(hi, n);
        }
        CHECK(hi - lo <= 1);
        if (S >= pool) CHECK(lo >= 1);
      }
    }
  }
}

TEST_CASE("audio-major round-robin counts over the location-1 pool") {
  const Corpus c = synthetic(4);
  const auto& r = c.records[2];
  const auto omega = enumerate_pairs(r);
  for (auto [S, each] : {std::pair<std::size_t, std::size_t>{8, 1}, {32, 4}}) {
    const auto got = sample_pairs(r, omega, {Strategy::kAudioMajor, S, 9, {}});
    std::map<std::size_t, std::size_t> uses;
    for (const auto& p : got.pairs) ++uses[p.audio];
    CHECK(uses.size() == 8);
    for (const auto& [j, n] : uses) {
      CHECK(r.audio[j].location == 1);
      CHECK(n == each);
    }
  }
}

TEST_CASE("random sampling covers omega uniformly") {
  PineappleRecord r{"u", Label::kH, std::vector<MediaMeta>(3), std::vector<MediaMeta>(2)};
  const auto omega = enumerate_pairs(r);
  std::map<Pair, std::size_t> hits;
  const std::size_t trials = 6000;
  for (std::size_t t = 0; t < trials; ++t) {
    for (const auto& p : sample_pairs(r, omega, {Strategy::kRandom, 2, t, {}}).pairs) ++hits[p];
  }
  REQUIRE(hits.size() == 6);
  // Each pair is in a 2-of-6 draw with probability 1/3.
  for (const auto& [p, n] : hits) CHECK(std::abs(n / double(trials) - 1.0 / 3.0) < 0.03);
}

TEST_CASE("sampling rejects infeasible requests") {
  const Corpus c = synthetic(2);
  const auto& r = c.records[0];
  const auto omega = enumerate_pairs(r);
  CHECK_THROWS_AS(sample_pairs(r, omega, {Strategy::kRandom, 321, 1, {}}), InfeasibleSampling);
  CHECK_NOTHROW(sample_pairs(r, omega, {Strategy::kRandom, 320, 1, {}}));
  // 8 location-1 soundtracks x 16 photos.
  CHECK_NOTHROW(sample_pairs(r, omega, {Strategy::kAudioMajor, 128, 1, {}}));
  CHECK_THROWS_AS(sample_pairs(r, omega, {Strategy::kAudioMajor, 129, 1, {}}),
                  InfeasibleSampling);
  const ViewPredicate none = [](const MediaMeta&) { return false; };
  CHECK_THROWS_AS(sample_pairs(r, omega, {Strategy::kVisualMajor, 4, 1, none}),
                  InfeasibleSampling);
  CHECK_THROWS_AS(sample_pairs(r, omega, {Strategy::kRandom, 0, 1, {}}), InvalidConfig);
  CHECK(parse_strategy("audio-major") == Strategy::kAudioMajor);
  CHECK(strategy_token(Strategy::kVisualMajor) == "visual-major");
  CHECK_THROWS_AS(parse_strategy("audio_major"), InvalidConfig);
}

TEST_CASE("a custom pool predicate restricts the major side") {
  const Corpus c = synthetic(2);
  const auto& r = c.records[1];
  const ViewPredicate uni = [](const MediaMeta& m) { return m.mic == MicType::kUnidirectional; };
  const auto got = sample_pairs(r, enumerate_pairs(r), {Strategy::kAudioMajor, 16, 4, uni});
  std::map<std::size_t, std::size_t> uses;
  for (const auto& p : got.pairs) ++uses[p.audio];
  CHECK(uses.size() == 8);
  for (const auto& [j, n] : uses) {
    CHECK(r.audio[j].mic == MicType::kUnidirectional);
    CHECK(n == 2);
  }
}

TEST_CASE("sampled totals over 400 training records") {
  const Corpus c = synthetic(500);
  const Split s = stratified_split(c, 0.8, 2);
  REQUIRE(s.train.records.size() == 400);
  for (Strategy st : {Strategy::kRandom, Strategy::kAudioMajor, Strategy::kVisualMajor}) {
    for (std::size_t S : {4u, 8u, 16u, 32u}) {
      const auto sets = sample_training_pairs(s.train, {st, S, 77, {}});
      CHECK(sets.size() == 400);
      CHECK(total_pairs(sets) == 400 * S);
    }
  }
  const auto a = sample_training_pairs(s.train, {Strategy::kRandom, 8, 77, {}});
  const auto b = sample_training_pairs(s.train, {Strategy::kRandom, 8, 77, {}});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pairs == b[i].pairs);
}

TEST_CASE("test pairs need the fixed evaluation views") {
  Corpus c = synthetic(3);
  const auto sets = build_test_pairs(c);
  REQUIRE(sets.size() == 3);
  for (const auto& ps : sets) {
    REQUIRE(ps.pairs.size() == 16);
    const auto& r = c.records[static_cast<std::size_t>(&ps - sets.data())];
    for (const auto& p : ps.pairs) {
      CHECK(r.audio[p.audio].location == 1);
      CHECK(r.audio[p.audio].surface == Surface::kSide);
      CHECK(r.photos[p.photo].location == 2);
      CHECK(r.photos[p.photo].content == PhotoContent::kBottom);
    }
  }
  for (auto& m : c.records[1].audio) m.surface = Surface::kBottom;
  CHECK_THROWS_AS(build_test_pairs(c), MissingView);
}

TEST_CASE("class weights are the reciprocal relative class size") {
  Corpus c;
  const std::array<std::size_t, kClasses> counts{200, 100, 50, 50};
  for (std::size_t cls = 0; cls < kClasses; ++cls) {
    for (std::size_t i = 0; i < counts[cls]; ++i) c.records.push_back({"", Label(cls), {}, {}});
  }
  const auto w = class_weights(c);
  CHECK(w.values() == std::array<double, kClasses>{2.0, 4.0, 8.0, 8.0});
  for (std::size_t cls = 0; cls < kClasses; ++cls) CHECK(w.counts[cls] * w[cls] == w.total);

  Corpus balanced = synthetic(40);
  balanced.records.resize(4);
  for (std::size_t i = 0; i < 4; ++i) balanced.records[i].label = Label(i);
  const auto wb = class_weights(balanced).values();
  CHECK(std::adjacent_find(wb.begin(), wb.end(), std::not_equal_to<>()) == wb.end());

  Corpus one_class;
  one_class.records.push_back({"", Label::kS, {}, {}});
  CHECK_THROWS_AS(class_weights(one_class), EmptyClass);
}

TEST_CASE("class weights satisfy w_c * n_c = N exactly") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    Corpus c;
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
      const std::size_t n = 1 + rng.below(997);
      for (std::size_t i = 0; i < n; ++i) c.records.push_back({"", Label(cls), {}, {}});
    }
    const auto w = class_weights(c);
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
      CHECK(w.counts[cls] == c.class_counts()[cls]);
      CHECK(w.total == c.records.size());
      // w_c = total / n_c as a fraction; times n_c it reduces to N exactly.
      const std::size_t num = w.total * w.counts[cls];
      CHECK(num % w.counts[cls] == 0);
      CHECK(num / w.counts[cls] == c.records.size());
      CHECK(std::abs(w[cls] * w.counts[cls] - w.total) <= 1e-12 * w.total);
    }
  }
}

TEST_CASE("synthetic media are deterministic and parse through both pipelines") {
  const Corpus a = synthetic(6, 99);
  const Corpus b = synthetic(6, 99);
  const Corpus other = synthetic(6, 100);
  CHECK(a.records == b.records);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j : {0u, 7u, 19u}) {
      const auto wav = media_bytes(a, i, Modality::kAudio, j);
      CHECK(wav == media_bytes(b, i, Modality::kAudio, j));
      CHECK(wav != media_bytes(other, i, Modality::kAudio, j));
      CHECK(audio::preprocess_audio(wav).shape() == Shape{1024, 128});
    }
    for (std::size_t k : {0u, 9u, 15u}) {
      const auto ppm = media_bytes(a, i, Modality::kVisual, k);
      CHECK(ppm == media_bytes(b, i, Modality::kVisual, k));
      const auto feat = image::preprocess_image(ppm, crop_for(a, a.records[i].photos[k]));
      CHECK(feat.shape() == Shape{224, 224, 3});
    }
  }
  CHECK_THROWS_AS(media_bytes(a, 0, Modality::kAudio, 20), OutOfBounds);

  // A record renders the same media wherever it lands after splitting.
  const Split s = stratified_split(synthetic(20, 99), 0.8, 1);
  const Corpus full = synthetic(20, 99);
  for (std::size_t i = 0; i < s.test.records.size(); ++i) {
    const auto& id = s.test.records[i].id;
    const auto it = std::find_if(full.records.begin(), full.records.end(),
                                 [&](const auto& r) { return r.id == id; });
    const auto at = static_cast<std::size_t>(it - full.records.begin());
    CHECK(media_bytes(s.test, i, Modality::kAudio, 3) == media_bytes(full, at, Modality::kAudio, 3));
    CHECK(media_bytes(s.test, i, Modality::kVisual, 5) == media_bytes(full, at, Modality::kVisual, 5));
  }
}

TEST_CASE("materialized synthetic corpus loads back byte for byte") {
  const Corpus c = synthetic(3, 5);
  const auto dir = std::filesystem::temp_directory_path() / "pqc_test_materialize";
  std::filesystem::remove_all(dir);
  const auto manifest = materialize(c, dir);
  const Corpus back = load_corpus(manifest);
  CHECK(back.records == c.records);
  CHECK(back.crops.at(2).height == c.crops.at(2).height);
  CHECK(media_bytes(back, 2, Modality::kVisual, 11) == media_bytes(c, 2, Modality::kVisual, 11));
  CHECK(media_bytes(back, 1, Modality::kAudio, 4) == media_bytes(c, 1, Modality::kAudio, 4));
  std::filesystem::remove(dir / c.records[0].audio[3].path);
  CHECK_THROWS_AS(load_corpus(manifest), MissingFile);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_corpus(dir / "manifest.txt"), MissingFile);
}

TEST_CASE("linear probe on pooled Mel features separates the default synthetic classes") {
  // Probe over the evaluation views (location-1 side taps) of every record.
  const Corpus c = synthetic(80);
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    for (std::size_t j = 0; j < r.audio.size(); ++j) {
      if (r.audio[j].location != 1 || r.audio[j].surface != Surface::kSide) continue;
      x.push_back(pooled_mel(media_bytes(c, i, Modality::kAudio, j)));
      y.push_back(ordinal(r.label));
    }
  }
  REQUIRE(x.size() == 320);
  const double acc = probe_train_accuracy(x, y);
  MESSAGE("probe train accuracy: " << acc);
  CHECK(acc >= 0.9);
}
