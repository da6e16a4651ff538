#pragma once

// Parameter bookkeeping shared by the models.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pqc/autograd.hpp"
#include "pqc/rng.hpp"

namespace pqc {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

// Uniform in +-sqrt(6 / fan_in): variance-preserving through a rectifier.
template <typename T>
Var<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return Var<T>::parameter(std::move(t));
}

template <typename T>
Var<T> normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(stddev * rng.normal());
  return Var<T>::parameter(std::move(t));
}

template <typename T>
Var<T> filled(Shape shape, T value) {
  return Var<T>::parameter(Tensor<T>::full(std::move(shape), value));
}

template <typename T>
std::vector<Var<T>> vars_of(const NamedParams<T>& named) {
  std::vector<Var<T>> out;
  out.reserve(named.size());
  for (const auto& [name, v] : named) out.push_back(v);
  return out;
}

// Copies values between parameter lists of identical names and shapes,
// converting precision as needed.
template <typename Dst, typename Src>
void copy_values(const NamedParams<Dst>& dst, const NamedParams<Src>& src) {
  if (dst.size() != src.size()) throw ShapeMismatch("parameter count differs");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].first ||
        dst[i].second.shape() != src[i].second.shape()) {
      throw ShapeMismatch("parameter " + dst[i].first + " does not match " +
                          src[i].first);
    }
    Var<Dst> d = dst[i].second;
    const auto& s = src[i].second.value().storage();
    auto& out = d.mutable_value().storage();
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = static_cast<Dst>(s[j]);
  }
}

}  // namespace pqc
