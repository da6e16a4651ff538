#include <algorithm>

#include "pqc/audio.hpp"
#include "pqc/image.hpp"
#include "pqc/train.hpp"

namespace pqc::train {

std::vector<Sample> samples_from_pairs(const corpus::Corpus& c,
                                       const std::vector<corpus::PairSet>& sets) {
  if (sets.size() != c.records.size()) {
    throw ShapeMismatch("pair sets do not line up with the corpus records");
  }
  std::vector<Sample> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& r = c.records[i];
    if (sets[i].record_id != r.id) {
      throw ShapeMismatch("pair set " + sets[i].record_id + " is not for record " + r.id);
    }
    for (const auto& p : sets[i].pairs) {
      if (p.audio >= r.audio.size() || p.photo >= r.photos.size()) {
        throw OutOfBounds("pair outside record " + r.id);
      }
      out.push_back({i, p.audio, p.photo, corpus::ordinal(r.label)});
    }
  }
  return out;
}

FeatureStore::FeatureStore(corpus::Corpus reference, std::size_t budget_bytes)
    : ref_(std::move(reference)), budget_(budget_bytes) {
  for (std::size_t i = 0; i < ref_.records.size(); ++i) index_of_.emplace(ref_.records[i].id, i);
}

FeaturePtr FeatureStore::audio(const corpus::PineappleRecord& r, std::size_t j) {
  return lookup(r, false, j);
}

FeaturePtr FeatureStore::visual(const corpus::PineappleRecord& r, std::size_t k) {
  return lookup(r, true, k);
}

std::size_t FeatureStore::cached_bytes() const {
  std::lock_guard lock(mu_);
  return bytes_;
}

std::size_t FeatureStore::computed() const {
  std::lock_guard lock(mu_);
  return computed_;
}

FeaturePtr FeatureStore::lookup(const corpus::PineappleRecord& r, bool visual, std::size_t index) {
  const auto it = index_of_.find(r.id);
  if (it == index_of_.end()) throw MissingFile("record " + r.id + " is not in the feature corpus");
  const Key key{it->second, visual, index};
  {
    std::lock_guard lock(mu_);
    if (auto hit = cache_.find(key); hit != cache_.end()) {
      lru_.splice(lru_.begin(), lru_, hit->second.second);
      return hit->second.first;
    }
  }
  // Computed outside the lock; a concurrent miss on the same key computes
  // the same value and the second insert is dropped.
  const auto& rec = ref_.records[it->second];
  FeaturePtr f;
  if (visual) {
    const auto bytes = corpus::media_bytes(ref_, it->second, corpus::Modality::kVisual, index);
    f = std::make_shared<const Tensor<float>>(
        image::preprocess_image(bytes, corpus::crop_for(ref_, rec.photos.at(index))));
  } else {
    const auto bytes = corpus::media_bytes(ref_, it->second, corpus::Modality::kAudio, index);
    f = std::make_shared<const Tensor<float>>(audio::preprocess_audio(bytes));
  }
  const std::size_t size = f->size() * sizeof(float);
  std::lock_guard lock(mu_);
  ++computed_;
  if (auto hit = cache_.find(key); hit != cache_.end()) return hit->second.first;
  lru_.push_front(key);
  cache_.emplace(key, std::make_pair(f, lru_.begin()));
  bytes_ += size;
  while (bytes_ > budget_ && lru_.size() > 1) {
    const Key victim = lru_.back();
    lru_.pop_back();
    auto v = cache_.find(victim);
    bytes_ -= v->second.first->size() * sizeof(float);
    cache_.erase(v);
  }
  return f;
}

models::ModelInput<float> assemble_batch(const models::ModelConfig& cfg,
                                         const corpus::Corpus& c,
                                         const std::vector<Sample>& samples, std::size_t begin,
                                         std::size_t end, FeatureSource& features) {
  if (begin >= end || end > samples.size()) throw OutOfBounds("empty or invalid batch range");
  const std::size_t B = end - begin;
  models::ModelInput<float> in;
  auto stack = [&](bool visual) {
    Tensor<float> out;
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = samples[i];
      const auto& r = c.records.at(s.record);
      const FeaturePtr f = visual ? features.visual(r, s.photo) : features.audio(r, s.audio);
      if (i == begin) {
        Shape shape{B};
        shape.insert(shape.end(), f->shape().begin(), f->shape().end());
        out = Tensor<float>(shape);
      }
      if (f->size() * B != out.size()) throw ShapeMismatch("feature shapes differ within a batch");
      std::copy(f->storage().begin(), f->storage().end(), out.raw() + (i - begin) * f->size());
    }
    return out;
  };
  if (cfg.uses_audio()) in.audio = stack(false);
  if (cfg.uses_visual()) in.visual = stack(true);
  return in;
}

}  // namespace pqc::train
