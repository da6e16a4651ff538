#include <algorithm>

#include "pqc/corpus.hpp"
#include "pqc/rng.hpp"

namespace pqc::corpus {
namespace {

// Round-robin over a shuffled major pool; each major item takes a partner
// drawn uniformly from the partners it has not been paired with yet.
std::vector<Pair> major_sample(const std::vector<std::size_t>& pool, std::size_t partners,
                               std::size_t samples, bool audio_major, Rng& rng) {
  std::vector<std::size_t> order = pool;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> remaining(order.size());
  for (auto& r : remaining) {
    r.resize(partners);
    for (std::size_t i = 0; i < partners; ++i) r[i] = i;
  }
  std::vector<Pair> out;
  out.reserve(samples);
  for (std::size_t t = 0; t < samples; ++t) {
    const std::size_t slot = t % order.size();
    auto& left = remaining[slot];
    const std::size_t pick = rng.below(left.size());
    const std::size_t partner = left[pick];
    left[pick] = left.back();
    left.pop_back();
    out.push_back(audio_major ? Pair{order[slot], partner} : Pair{partner, order[slot]});
  }
  return out;
}

}  // namespace

PairSet enumerate_pairs(const PineappleRecord& r) {
  PairSet s{r.id, {}};
  s.pairs.reserve(r.audio.size() * r.photos.size());
  for (std::size_t j = 0; j < r.audio.size(); ++j) {
    for (std::size_t k = 0; k < r.photos.size(); ++k) s.pairs.push_back({j, k});
  }
  return s;
}

std::string_view strategy_token(Strategy s) {
  switch (s) {
    case Strategy::kAudioMajor:
      return "audio-major";
    case Strategy::kVisualMajor:
      return "visual-major";
    default:
      return "random";
  }
}

Strategy parse_strategy(std::string_view s) {
  if (s == "random") return Strategy::kRandom;
  if (s == "audio-major") return Strategy::kAudioMajor;
  if (s == "visual-major") return Strategy::kVisualMajor;
  throw InvalidConfig("unknown sampling strategy '" + std::string(s) + "'");
}

bool default_audio_pool(const MediaMeta& m) {
  return m.modality == Modality::kAudio && m.location == 1;
}

bool default_visual_pool(const MediaMeta& m) {
  return m.modality == Modality::kVisual && m.location == 2;
}

PairSet sample_pairs(const PineappleRecord& r, const PairSet& omega, const SamplingConfig& cfg) {
  const std::size_t J = r.audio.size();
  const std::size_t K = r.photos.size();
  if (omega.pairs.size() != J * K) {
    throw InvalidConfig("pair set for " + r.id + " is not the full enumeration");
  }
  if (cfg.samples == 0) throw InvalidConfig("samples per record must be at least 1");
  if (cfg.samples > J * K) {
    throw InfeasibleSampling(r.id + ": " + std::to_string(cfg.samples) + " samples requested, " +
                             std::to_string(J * K) + " distinct pairs exist");
  }
  Rng rng(cfg.seed);
  PairSet out{r.id, {}};

  if (cfg.strategy == Strategy::kRandom) {
    std::vector<std::size_t> idx(omega.pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      out.pairs.push_back(omega.pairs[idx[i]]);
    }
  } else {
    const bool audio_major = cfg.strategy == Strategy::kAudioMajor;
    const ViewPredicate& pred =
        cfg.pool ? cfg.pool : (audio_major ? ViewPredicate(default_audio_pool)
                                           : ViewPredicate(default_visual_pool));
    const auto& media = audio_major ? r.audio : r.photos;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < media.size(); ++i) {
      if (pred(media[i])) pool.push_back(i);
    }
    const std::size_t partners = audio_major ? K : J;
    if (pool.empty()) {
      throw InfeasibleSampling(r.id + ": " + std::string(strategy_token(cfg.strategy)) +
                               " pool is empty");
    }
    if (cfg.samples > pool.size() * partners) {
      throw InfeasibleSampling(r.id + ": pool of " + std::to_string(pool.size()) + " admits " +
                               std::to_string(pool.size() * partners) + " distinct pairs, " +
                               std::to_string(cfg.samples) + " requested");
    }
    out.pairs = major_sample(pool, partners, cfg.samples, audio_major, rng);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

std::vector<PairSet> sample_training_pairs(const Corpus& train, const SamplingConfig& cfg) {
  std::vector<PairSet> out;
  out.reserve(train.records.size());
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    SamplingConfig c = cfg;
    c.seed = Rng::derive(cfg.seed, i).next_u64();
    const auto& r = train.records[i];
    out.push_back(sample_pairs(r, enumerate_pairs(r), c));
  }
  return out;
}

std::vector<PairSet> build_test_pairs(const Corpus& test) {
  std::vector<PairSet> out;
  out.reserve(test.records.size());
  for (const auto& r : test.records) {
    std::vector<std::size_t> audio, photos;
    for (std::size_t j = 0; j < r.audio.size() && audio.size() < kTestViews; ++j) {
      const auto& m = r.audio[j];
      if (m.location == 1 && m.surface == Surface::kSide) audio.push_back(j);
    }
    for (std::size_t k = 0; k < r.photos.size() && photos.size() < kTestViews; ++k) {
      const auto& m = r.photos[k];
      if (m.location == 2 && m.content == PhotoContent::kBottom) photos.push_back(k);
    }
    if (audio.size() < kTestViews || photos.size() < kTestViews) {
      throw MissingView(r.id + ": needs " + std::to_string(kTestViews) +
                        " location-1 side-tap soundtracks and " + std::to_string(kTestViews) +
                        " location-2 bottom photos, found " + std::to_string(audio.size()) +
                        " and " + std::to_string(photos.size()));
    }
    PairSet s{r.id, {}};
    for (std::size_t j : audio) {
      for (std::size_t k : photos) s.pairs.push_back({j, k});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pqc::corpus
