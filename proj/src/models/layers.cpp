#include "pqc/models.hpp"

namespace pqc::models {

std::string_view branch_token(Branch b) { return b == Branch::kAudio ? "audio" : "visual"; }

template <typename T>
Affine<T> Affine<T>::make(std::size_t in, std::size_t out, Rng& rng) {
  return {fan_in_uniform<T>({in, out}, in, rng), filled<T>({out}, T(0))};
}

template <typename T>
void Affine<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

template <typename T>
MlpHead<T> MlpHead<T>::make(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  if (in == 0 || hidden == 0 || out == 0) throw InvalidConfig("MLP head widths must be positive");
  MlpHead h;
  h.fc1 = Affine<T>::make(in, hidden, rng);
  h.fc2 = Affine<T>::make(hidden, out, rng);
  return h;
}

template <typename T>
void MlpHead<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

std::size_t CnnConfig::flat_features() const {
  std::size_t h = height, w = width;
  for (int i = 0; i < 3; ++i) {
    h /= pool;
    w /= pool;
  }
  return h * w * widths[2];
}

void CnnConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0 || embed == 0 || pool == 0) {
    throw InvalidConfig("CNN extents must be positive");
  }
  if (!(input_spread > 0.0)) throw InvalidConfig("CNN input spread must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    if (widths[i] == 0) throw InvalidConfig("CNN channel widths must be positive");
    if (kernels[i] % 2 == 0) throw InvalidConfig("CNN kernels must be odd");
  }
  std::size_t h = height, w = width;
  for (int i = 0; i < 3; ++i) {
    if (h < pool || w < pool) throw InvalidConfig("CNN input too small for three pooling stages");
    h /= pool;
    w /= pool;
  }
}

CnnConfig audio_cnn_config() {
  CnnConfig c;
  c.input_center = EncoderConfig{}.audio_center;
  c.input_spread = EncoderConfig{}.audio_spread;
  return c;
}

CnnConfig visual_cnn_config() {
  CnnConfig c;
  c.height = 224;
  c.width = 224;
  c.channels = 3;
  return c;
}

template <typename T>
CnnBackbone<T> CnnBackbone<T>::make(const CnnConfig& cfg, Rng& rng) {
  cfg.validate();
  CnnBackbone b;
  b.cfg = cfg;
  std::size_t in = cfg.channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t k = cfg.kernels[i];
    b.kernel[i] = fan_in_uniform<T>({cfg.widths[i], in, k, k}, in * k * k, rng);
    b.bias[i] = filled<T>({cfg.widths[i]}, T(0));
    in = cfg.widths[i];
  }
  b.proj = Affine<T>::make(cfg.flat_features(), cfg.embed, rng);
  return b;
}

template <typename T>
Var<T> CnnBackbone<T>::operator()(const Var<T>& x) const {
  const Shape& s = x.shape();
  const std::size_t c = s.size() == 4 ? s[3] : 1;
  if ((s.size() != 3 && s.size() != 4) || s[1] != cfg.height || s[2] != cfg.width ||
      c != cfg.channels) {
    throw ShapeMismatch("CNN expects [B, " + std::to_string(cfg.height) + ", " +
                        std::to_string(cfg.width) + ", " + std::to_string(cfg.channels) +
                        "], got " + shape_string(s));
  }
  const std::size_t batch = s[0];
  Var<T> in = x;
  if (cfg.input_center != 0.0 || cfg.input_spread != 1.0) {
    Tensor<T> shift({1});
    shift[0] = static_cast<T>(-cfg.input_center);
    in = scale(add(x, Var<T>::constant(std::move(shift))), static_cast<T>(1.0 / cfg.input_spread));
  }
  Var<T> h = c == 1 ? reshape(in, {batch, 1, cfg.height, cfg.width}) : permute(in, {0, 3, 1, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    h = conv2d(h, kernel[i], OptVar<T>(bias[i]), 1, cfg.kernels[i] / 2);
    // relu commutes with max; pooling first avoids ties among clipped zeros.
    h = relu(maxpool2d(h, cfg.pool, cfg.pool));
  }
  return proj(reshape(h, {batch, h.size() / batch}));
}

template <typename T>
void CnnBackbone<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  for (std::size_t i = 0; i < 3; ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i + 1) + ".k", kernel[i]);
    out.emplace_back(prefix + ".conv" + std::to_string(i + 1) + ".b", bias[i]);
  }
  proj.collect(prefix + ".proj", out);
}

template struct Affine<float>;
template struct Affine<double>;
template struct MlpHead<float>;
template struct MlpHead<double>;
template struct CnnBackbone<float>;
template struct CnnBackbone<double>;

}  // namespace pqc::models
