#pragma once

#include <memory>

#include "pqc/rng.hpp"
#include "pqc/train.hpp"

namespace pqc::testing {

// Tiny class-dependent features so the training loop can be exercised with
// the small model shapes: the class shifts the mean of every element.
class StubFeatures final : public train::FeatureSource {
 public:
  train::FeaturePtr audio(const corpus::PineappleRecord& r, std::size_t j) override {
    ++calls;
    return make(r, j, {8, 8}, 0x0A);
  }
  train::FeaturePtr visual(const corpus::PineappleRecord& r, std::size_t k) override {
    ++calls;
    return make(r, k, {8, 8, 3}, 0x0B);
  }
  std::size_t calls = 0;

 private:
  static train::FeaturePtr make(const corpus::PineappleRecord& r, std::size_t index, Shape shape,
                                       std::uint64_t salt) {
    std::uint64_t h = salt;
    for (char ch : r.id) h = h * 131 + static_cast<unsigned char>(ch);
    Rng rng = Rng::derive(h, index);
    auto t = std::make_shared<Tensor<float>>(std::move(shape));
    const std::size_t cls = corpus::ordinal(r.label);
    for (auto& v : t->storage()) v = static_cast<float>(0.8 * double(cls) + 0.5 * rng.normal());
    return t;
  }
};

}  // namespace pqc::testing
