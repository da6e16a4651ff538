#include "pqc/train.hpp"

namespace pqc::train {

template <typename T>
Var<T> weighted_smoothed_ce(const Var<T>& logits, const std::vector<std::size_t>& labels,
                            const Weights& weights, double eps) {
  if (logits.value().rank() != 2 || logits.shape()[1] != kClasses) {
    throw ShapeMismatch("loss expects [B, 4] logits, got " + shape_string(logits.shape()));
  }
  const std::size_t B = logits.shape()[0];
  if (labels.size() != B) throw ShapeMismatch("label count differs from batch size");
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("label smoothing must lie in [0, 1)");
  double norm = 0.0;
  for (std::size_t y : labels) {
    if (y >= kClasses) throw DomainError("label " + std::to_string(y) + " out of range");
    if (!(weights[y] > 0.0)) throw DomainError("class weights must be positive");
    norm += weights[y];
  }
  // Weighted smoothed targets, pre-divided by the weight total.
  Tensor<T> target({B, kClasses});
  for (std::size_t b = 0; b < B; ++b) {
    const double w = weights[labels[b]] / norm;
    for (std::size_t c = 0; c < kClasses; ++c) {
      const double t = (c == labels[b] ? 1.0 - eps : 0.0) + eps / kClasses;
      target[b * kClasses + c] = static_cast<T>(w * t);
    }
  }
  return scale(sum(mul(log_softmax(logits), Var<T>::constant(std::move(target)))), T(-1));
}

template Var<float> weighted_smoothed_ce<float>(const Var<float>&, const std::vector<std::size_t>&,
                                                const Weights&, double);
template Var<double> weighted_smoothed_ce<double>(const Var<double>&,
                                                  const std::vector<std::size_t>&, const Weights&,
                                                  double);

}  // namespace pqc::train
