#pragma once

// Fruit records, their audio/visual media with view tags, the 4:1
// stratified split, audio-visual pair enumeration and sampling, the fixed
// evaluation pairs, class weights, and a seeded synthetic corpus.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pqc/bytes.hpp"
#include "pqc/image.hpp"

namespace pqc::corpus {

inline constexpr std::size_t kClasses = 4;

// Ordered by moisture, low to high.
enum class Label : std::uint8_t { kH = 0, kSH = 1, kSS = 2, kS = 3 };

std::string_view label_token(Label l);
Label parse_label(std::string_view token);  // UnknownLabel
inline std::size_t ordinal(Label l) { return static_cast<std::size_t>(l); }

enum class Modality : std::uint8_t { kAudio, kVisual };
enum class Surface : std::uint8_t { kSide, kBottom };
enum class MicType : std::uint8_t { kUnidirectional, kOmnidirectional, kNone };
enum class PhotoContent : std::uint8_t { kSide, kBottom, kNone };

std::string_view token(Surface s);
std::string_view token(MicType m);
std::string_view token(PhotoContent p);

struct MediaMeta {
  Modality modality = Modality::kAudio;
  Surface surface = Surface::kSide;
  int location = 1;
  MicType mic = MicType::kNone;
  PhotoContent content = PhotoContent::kNone;
  std::string path;

  bool operator==(const MediaMeta&) const = default;
};

struct PineappleRecord {
  std::string id;
  Label label = Label::kH;
  std::vector<MediaMeta> audio;
  std::vector<MediaMeta> photos;

  bool operator==(const PineappleRecord&) const = default;
};

struct SyntheticConfig {
  std::size_t records = 80;
  std::array<double, kClasses> proportions{0.4, 0.3, 0.2, 0.1};
  std::size_t audio_per_record = 20;  // J
  std::size_t photos_per_record = 16;  // K
  double audio_separability = 0.9;
  double visual_separability = 0.5;
  double noise = 0.2;
  std::uint64_t seed = 7;
  // Rendered media geometry.
  double audio_seconds = 1.5;
  std::size_t photo_height = 96;
  std::size_t photo_width = 128;

  void validate() const;  // InvalidConfig
  bool operator==(const SyntheticConfig&) const = default;
};

enum class Origin : std::uint8_t { kManifest, kSynthetic };

struct Corpus {
  std::vector<PineappleRecord> records;
  Origin origin = Origin::kManifest;
  // Manifest corpora: media paths are relative to root.
  std::filesystem::path root;
  // Per camera location crop; full frame when absent.
  std::map<int, image::Rect> crops;
  // Synthetic corpora render media from this config on demand.
  std::optional<SyntheticConfig> synthetic;

  std::size_t audio_count() const;
  std::size_t photo_count() const;
  std::array<std::size_t, kClasses> class_counts() const;
};

// ---- manifest -------------------------------------------------------------
//
//   # comment
//   layout <J> <K>                                  optional count check
//   crop <location> <top> <left> <height> <width>   optional, per camera
//   record <id> <label>                             label in H SH SS S
//   audio <side|bottom> <1|2> <unidirectional|omnidirectional> <path>
//   photo <side|bottom> <1|2> <side|bottom> <path>
//
// Media lines attach to the preceding record. Tokens are whitespace
// separated; paths may not contain whitespace.

using FileProbe = std::function<bool(const std::filesystem::path&)>;

Corpus parse_manifest(std::string_view text, const std::filesystem::path& root,
                      const FileProbe& probe);
Corpus load_corpus(const std::filesystem::path& manifest_path);
std::string format_manifest(const Corpus& c);

// Bytes of one media file: read from disk for manifest corpora, rendered for
// synthetic ones.
Bytes media_bytes(const Corpus& c, std::size_t record, Modality m, std::size_t index);
std::optional<image::Rect> crop_for(const Corpus& c, const MediaMeta& photo);

// ---- split ----------------------------------------------------------------

struct Split {
  Corpus train;
  Corpus test;
};
// Per class: round(fraction * n_c) records to train, chosen by seeded shuffle;
// both parts keep the input's record order.
Split stratified_split(const Corpus& c, double train_fraction, std::uint64_t seed);

// ---- pairs ----------------------------------------------------------------

struct Pair {
  std::size_t audio = 0;
  std::size_t photo = 0;
  auto operator<=>(const Pair&) const = default;
};

struct PairSet {
  std::string record_id;
  std::vector<Pair> pairs;
};

PairSet enumerate_pairs(const PineappleRecord& r);

enum class Strategy : std::uint8_t { kRandom, kAudioMajor, kVisualMajor };
std::string_view strategy_token(Strategy s);
Strategy parse_strategy(std::string_view s);  // InvalidConfig

using ViewPredicate = std::function<bool(const MediaMeta&)>;
bool default_audio_pool(const MediaMeta& m);   // location-1 microphones
bool default_visual_pool(const MediaMeta& m);  // location-2 camera

struct SamplingConfig {
  Strategy strategy = Strategy::kRandom;
  std::size_t samples = 8;  // S
  std::uint64_t seed = 0;
  ViewPredicate pool;  // empty: the strategy's default pool
};

// `omega` must be the full enumeration of `r`. Result pairs are sorted.
PairSet sample_pairs(const PineappleRecord& r, const PairSet& omega, const SamplingConfig& cfg);
// One PairSet per record; record i uses seed derive(cfg.seed, i).
std::vector<PairSet> sample_training_pairs(const Corpus& train, const SamplingConfig& cfg);

// 4 location-1 side-tap soundtracks x 4 location-2 bottom photos per record.
inline constexpr std::size_t kTestViews = 4;
std::vector<PairSet> build_test_pairs(const Corpus& test);

// ---- class weights --------------------------------------------------------

// w_c = N / n_c, kept as the exact ratio alongside its double value.
struct ClassWeights {
  std::size_t total = 0;
  std::array<std::size_t, kClasses> counts{};
  double operator[](std::size_t c) const {
    return static_cast<double>(total) / static_cast<double>(counts[c]);
  }
  std::array<double, kClasses> values() const;
};
ClassWeights class_weights(const Corpus& c);  // EmptyClass

// ---- synthetic ------------------------------------------------------------

// Deterministic class allocation by largest remainder (ties to lower class).
std::array<std::size_t, kClasses> allocate_classes(const std::array<double, kClasses>& p,
                                                   std::size_t n);
// View tags for soundtrack j / photo k of a synthetic record (the PQC500
// layout when J = 20, K = 16).
MediaMeta synthetic_audio_meta(std::size_t j);
MediaMeta synthetic_photo_meta(std::size_t k);

Corpus generate_synthetic(const SyntheticConfig& cfg);
// Media are a pure function of (config, record id, label, index), so records
// render identically after splitting.
Bytes render_audio(const SyntheticConfig& cfg, const PineappleRecord& r, std::size_t j);
Bytes render_photo(const SyntheticConfig& cfg, const PineappleRecord& r, std::size_t k);
// Writes WAV/PPM files and manifest.txt under dir; returns the manifest path.
std::filesystem::path materialize(const Corpus& synthetic, const std::filesystem::path& dir);

}  // namespace pqc::corpus
