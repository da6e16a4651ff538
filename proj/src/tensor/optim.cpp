#include "pqc/optim.hpp"

#include <cmath>

namespace pqc {

template <typename T>
Adam<T>::Adam(std::vector<Var<T>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw InvalidConfig("optimizer given a constant");
    m_.emplace_back(p.size(), T(0));
    v_.emplace_back(p.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw MissingGradient("parameter #" + std::to_string(i) + " of shape " +
                            shape_string(params_[i].shape()) + " has no grad");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg_.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg_.beta2, t)));
  const T lr = static_cast<T>(cfg_.lr);
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& p = params_[i];
    auto g = p.grad();
    T* w = p.mutable_value().raw();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
    }
    p.zero_grad();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace pqc
