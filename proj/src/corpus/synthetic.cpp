#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pqc/audio.hpp"
#include "pqc/corpus.hpp"
#include "pqc/rng.hpp"

namespace pqc::corpus {
namespace {

// Stream ids under a record's seed.
constexpr std::uint64_t kLatentStream = 0;
constexpr std::uint64_t kAudioStream = 1;
constexpr std::uint64_t kPhotoStream = 1u << 20;

// FNV-1a over the id keeps a record's media stable under splitting.
std::uint64_t record_seed(const SyntheticConfig& cfg, const PineappleRecord& r) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : r.id) h = (h ^ ch) * 0x100000001b3ULL;
  return Rng::derive(cfg.seed, h).next_u64();
}

struct Latents {
  double audio;
  double visual;
};

// Class position c/3 blended with a per-fruit nuisance draw; separability is
// the blend weight, so 1 gives disjoint classes and 0 makes labels invisible.
Latents record_latents(const SyntheticConfig& cfg, const PineappleRecord& r) {
  Rng rng = Rng::derive(record_seed(cfg, r), kLatentStream);
  const double pos = static_cast<double>(ordinal(r.label)) / (kClasses - 1);
  const double ua = rng.uniform();
  const double uv = rng.uniform();
  return {cfg.audio_separability * pos + (1.0 - cfg.audio_separability) * ua,
          cfg.visual_separability * pos + (1.0 - cfg.visual_separability) * uv};
}

// Far microphones, bottom taps and omnidirectional capsules all hear more
// of the room.
double audio_view_factor(const MediaMeta& m) {
  double q = 1.0;
  if (m.location == 2) q *= 1.8;
  if (m.surface == Surface::kBottom) q *= 1.4;
  if (m.mic == MicType::kOmnidirectional) q *= 1.3;
  return q;
}

// The bottom of the fruit shows ripeness best; the near camera is closer to
// the tapping rig and partly occluded.
double photo_view_factor(const MediaMeta& m) {
  double q = 1.0;
  if (m.location == 1) q *= 1.5;
  if (m.content == PhotoContent::kSide) q *= 1.5;
  return q;
}

std::string record_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", i + 1);
  return buf;
}

std::string media_name(char kind, std::size_t i, const char* ext) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%c%02zu.%s", kind, i, ext);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (records == 0) throw InvalidConfig("synthetic corpus needs at least one record");
  if (audio_per_record == 0 || photos_per_record == 0) {
    throw InvalidConfig("synthetic records need at least one soundtrack and one photo");
  }
  double total = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw InvalidConfig("class proportions must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("class proportions must sum to 1");
  auto knob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidConfig(std::string(name) + " must lie in [0, 1]");
  };
  knob(audio_separability, "audio separability");
  knob(visual_separability, "visual separability");
  if (!(noise >= 0.0 && noise <= 1.0)) throw InvalidConfig("noise must lie in [0, 1]");
  if (!(audio_seconds >= 1.0)) throw InvalidConfig("synthetic soundtracks must last >= 1 s");
  if (photo_height < 32 || photo_width < 32) {
    throw InvalidConfig("synthetic photos must be at least 32x32");
  }
}

std::array<std::size_t, kClasses> allocate_classes(const std::array<double, kClasses>& p,
                                                   std::size_t n) {
  std::array<std::size_t, kClasses> counts{};
  std::array<double, kClasses> rem{};
  std::size_t used = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double exact = p[c] * static_cast<double>(n);
    counts[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[c] = exact - static_cast<double>(counts[c]);
    used += counts[c];
  }
  while (used < n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClasses; ++c) {
      if (rem[c] > rem[best] + 1e-12) best = c;
    }
    ++counts[best];
    rem[best] = -1.0;
    ++used;
  }
  return counts;
}

// Soundtrack j: tap j/5 with microphone j%5. Microphones 0-1 sit at location
// 1 and 2-4 at location 2; 0 and 2 are unidirectional. Taps cycle side,
// side, bottom, bottom.
MediaMeta synthetic_audio_meta(std::size_t j) {
  MediaMeta m;
  m.modality = Modality::kAudio;
  const std::size_t tap = j / 5;
  const std::size_t mic = j % 5;
  m.location = mic < 2 ? 1 : 2;
  m.mic = (mic == 0 || mic == 2) ? MicType::kUnidirectional : MicType::kOmnidirectional;
  m.surface = tap % 4 < 2 ? Surface::kSide : Surface::kBottom;
  return m;
}

// Photo k: camera 1 + (k/8)%2, tap (k%8)/2, alternating bottom and side
// content within each tap.
MediaMeta synthetic_photo_meta(std::size_t k) {
  MediaMeta m;
  m.modality = Modality::kVisual;
  m.location = 1 + static_cast<int>((k / 8) % 2);
  const std::size_t tap = (k % 8) / 2;
  m.surface = tap < 2 ? Surface::kSide : Surface::kBottom;
  m.content = k % 2 == 0 ? PhotoContent::kBottom : PhotoContent::kSide;
  return m;
}

Corpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto counts = allocate_classes(cfg.proportions, cfg.records);
  std::vector<Label> labels;
  labels.reserve(cfg.records);
  for (std::size_t c = 0; c < kClasses; ++c) labels.insert(labels.end(), counts[c], Label(c));
  Rng shuffle = Rng::derive(cfg.seed, 0);
  shuffle.shuffle(labels);

  Corpus c;
  c.origin = Origin::kSynthetic;
  c.synthetic = cfg;
  const std::size_t h = cfg.photo_height;
  const std::size_t w = cfg.photo_width;
  // Camera 1 frames tighter than camera 2.
  c.crops[1] = {h / 12, w / 8, h - h / 6, w - w / 4};
  c.crops[2] = {h / 24, w / 16, h - h / 12, w - w / 8};
  c.records.reserve(cfg.records);
  for (std::size_t i = 0; i < cfg.records; ++i) {
    PineappleRecord r;
    r.id = record_id(i);
    r.label = labels[i];
    for (std::size_t j = 0; j < cfg.audio_per_record; ++j) {
      auto m = synthetic_audio_meta(j);
      m.path = r.id + "/" + media_name('a', j, "wav");
      r.audio.push_back(std::move(m));
    }
    for (std::size_t k = 0; k < cfg.photos_per_record; ++k) {
      auto m = synthetic_photo_meta(k);
      m.path = r.id + "/" + media_name('p', k, "ppm");
      r.photos.push_back(std::move(m));
    }
    c.records.push_back(std::move(r));
  }
  return c;
}

// A knock on the rind: a damped partial at f0 plus a faster-dying overtone.
// Firmer fruit rings higher and dies sooner.
Bytes render_audio(const SyntheticConfig& cfg, const PineappleRecord& r, std::size_t j) {
  const MediaMeta& m = r.audio.at(j);
  const Latents lat = record_latents(cfg, r);
  Rng rng = Rng::derive(record_seed(cfg, r), kAudioStream + j);
  const double q = audio_view_factor(m);
  const double z = std::clamp(lat.audio + 0.5 * cfg.noise * q * rng.normal(), -0.2, 1.2);

  const double f0 = 300.0 + 900.0 * z;
  const double tau = std::max(0.02, 0.2 - 0.15 * z);
  const double amp = (m.location == 1 ? 0.6 : 0.35) * rng.uniform(0.85, 1.0);
  const double overtone = rng.uniform(0.3, 0.6);
  const double onset = rng.uniform(0.3, 0.8);
  const double hiss = 0.05 * cfg.noise * q;

  const int rate = audio::kIngestRate;
  const auto n = static_cast<std::size_t>(cfg.audio_seconds * rate);
  audio::WaveBuffer wav;
  wav.sample_rate = rate;
  wav.samples.resize(n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = hiss * rng.normal();
    if (t >= onset) {
      const double dt = t - onset;
      s += amp * std::exp(-dt / tau) *
           (std::sin(two_pi * f0 * dt) +
            overtone * std::exp(-dt / (0.4 * tau)) * std::sin(two_pi * 2.76 * f0 * dt));
    }
    wav.samples[i] = s;
  }
  return audio::encode_wav(wav);
}

// The fruit is an ellipse over a plain backdrop. Riper fruit shifts from
// green to orange and carries more dark blotches.
Bytes render_photo(const SyntheticConfig& cfg, const PineappleRecord& r, std::size_t k) {
  const MediaMeta& m = r.photos.at(k);
  const Latents lat = record_latents(cfg, r);
  Rng rng = Rng::derive(record_seed(cfg, r), kPhotoStream + k);
  const double q = photo_view_factor(m);
  const double z = std::clamp(lat.visual + 0.5 * cfg.noise * q * rng.normal(), 0.0, 1.0);

  const std::size_t h = cfg.photo_height;
  const std::size_t w = cfg.photo_width;
  image::ImageBuffer img{h, w, std::vector<float>(h * w * 3)};

  const std::array<double, 3> green{0.30, 0.55, 0.15};
  const std::array<double, 3> orange{0.85, 0.55, 0.12};
  const std::array<double, 3> backdrop{0.22, 0.26, 0.32};
  const std::array<double, 3> blotch{0.22, 0.13, 0.05};
  const double gain = rng.uniform(0.85, 1.15);
  const double cy = 0.5 * h + rng.uniform(-0.04, 0.04) * h;
  const double cx = 0.5 * w + rng.uniform(-0.04, 0.04) * w;
  const double ry = 0.4 * h;
  const double rx = 0.38 * w;

  auto inside = [&](double y, double x) {
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  };

  std::vector<std::array<double, 3>> spots;  // y, x, radius
  const auto n_spots = static_cast<std::size_t>(std::lround(4.0 + 40.0 * z));
  while (spots.size() < n_spots) {
    const double y = rng.uniform(cy - ry, cy + ry);
    const double x = rng.uniform(cx - rx, cx + rx);
    if (inside(y, x)) spots.push_back({y, x, rng.uniform(1.5, 3.5)});
  }

  const double pixel_noise = 0.1 * cfg.noise * q;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double py = y + 0.5;
      const double px = x + 0.5;
      std::array<double, 3> col = backdrop;
      if (inside(py, px)) {
        for (int ch = 0; ch < 3; ++ch) col[ch] = (1.0 - z) * green[ch] + z * orange[ch];
        for (const auto& s : spots) {
          const double dy = py - s[0];
          const double dx = px - s[1];
          if (dy * dy + dx * dx <= s[2] * s[2]) {
            col = blotch;
            break;
          }
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = gain * col[ch] + pixel_noise * rng.normal();
        img.pixels[(y * w + x) * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return image::encode_ppm(img);
}

std::filesystem::path materialize(const Corpus& c, const std::filesystem::path& dir) {
  if (!c.synthetic) throw InvalidConfig("only synthetic corpora can be materialized");
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    std::filesystem::create_directories(dir / r.id);
    for (std::size_t j = 0; j < r.audio.size(); ++j) {
      write_bytes(dir / r.audio[j].path, media_bytes(c, i, Modality::kAudio, j));
    }
    for (std::size_t k = 0; k < r.photos.size(); ++k) {
      write_bytes(dir / r.photos[k].path, media_bytes(c, i, Modality::kVisual, k));
    }
  }
  const auto manifest = dir / "manifest.txt";
  const std::string text = format_manifest(c);
  write_bytes(manifest, Bytes(text.begin(), text.end()));
  return manifest;
}

}  // namespace pqc::corpus
