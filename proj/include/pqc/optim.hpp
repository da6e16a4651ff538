#pragma once

#include <cstdint>
#include <vector>

#include "pqc/autograd.hpp"

namespace pqc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamConfig cfg = {});

  // Applies one update from the current grads, then clears them. Every
  // registered parameter must carry a grad (MissingGradient otherwise); the
  // check runs before anything is modified.
  void step();

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  std::vector<Var<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t step_ = 0;
};

}  // namespace pqc
