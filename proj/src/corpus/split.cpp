#include <cmath>

#include "pqc/corpus.hpp"
#include "pqc/rng.hpp"

namespace pqc::corpus {

Split stratified_split(const Corpus& c, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidConfig("train fraction must lie in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kClasses> members;
  for (std::size_t i = 0; i < c.records.size(); ++i) members[ordinal(c.records[i].label)].push_back(i);

  std::vector<bool> to_train(c.records.size(), false);
  for (std::size_t cls = 0; cls < kClasses; ++cls) {
    auto& idx = members[cls];
    if (idx.empty()) {
      throw EmptyClass("class " + std::string(label_token(static_cast<Label>(cls))) +
                       " has no records");
    }
    Rng rng = Rng::derive(seed, cls);
    rng.shuffle(idx);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * idx.size()));
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = true;
  }

  Split s;
  s.train.origin = s.test.origin = c.origin;
  s.train.root = s.test.root = c.root;
  s.train.crops = s.test.crops = c.crops;
  s.train.synthetic = s.test.synthetic = c.synthetic;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    (to_train[i] ? s.train : s.test).records.push_back(c.records[i]);
  }
  return s;
}

std::array<double, kClasses> ClassWeights::values() const {
  std::array<double, kClasses> w{};
  for (std::size_t c = 0; c < kClasses; ++c) w[c] = (*this)[c];
  return w;
}

ClassWeights class_weights(const Corpus& c) {
  ClassWeights w;
  w.counts = c.class_counts();
  w.total = c.records.size();
  for (std::size_t cls = 0; cls < kClasses; ++cls) {
    if (w.counts[cls] == 0) {
      throw EmptyClass("class " + std::string(label_token(static_cast<Label>(cls))) +
                       " has no records; its weight is undefined");
    }
  }
  return w;
}

}  // namespace pqc::corpus
