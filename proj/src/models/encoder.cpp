#include <algorithm>
#include <cmath>

#include "pqc/models.hpp"

namespace pqc::models {

std::size_t EncoderConfig::audio_tokens() const {
  return (audio_height / patch) * (audio_width / patch);
}

std::size_t EncoderConfig::visual_tokens() const {
  return (image_height / patch) * (image_width / patch);
}

void EncoderConfig::validate() const {
  if (patch == 0 || width == 0 || heads == 0 || mlp_hidden == 0 || head_hidden == 0) {
    throw InvalidConfig("encoder extents must be positive");
  }
  if (audio_height % patch || audio_width % patch || image_height % patch ||
      image_width % patch) {
    throw InvalidConfig("feature extents must be multiples of the patch size");
  }
  if (audio_tokens() == 0 || visual_tokens() == 0 || image_channels == 0) {
    throw InvalidConfig("encoder inputs must hold at least one patch");
  }
  if (width % heads) throw InvalidConfig("token width must divide evenly across heads");
  if (!(audio_spread > 0.0)) throw InvalidConfig("audio spread must be positive");
}

template <typename T>
TransformerLayer<T> TransformerLayer<T>::make(std::size_t width, std::size_t mlp_hidden,
                                              Rng& rng) {
  TransformerLayer l;
  l.ln1_gamma = filled<T>({width}, T(1));
  l.ln1_beta = filled<T>({width}, T(0));
  l.qkv = Affine<T>::make(width, 3 * width, rng);
  l.out = Affine<T>::make(width, width, rng);
  l.ln2_gamma = filled<T>({width}, T(1));
  l.ln2_beta = filled<T>({width}, T(0));
  l.fc1 = Affine<T>::make(width, mlp_hidden, rng);
  l.fc2 = Affine<T>::make(mlp_hidden, width, rng);
  return l;
}

template <typename T>
Var<T> TransformerLayer<T>::operator()(const Var<T>& x, std::size_t heads) const {
  const std::size_t B = x.shape()[0], N = x.shape()[1], d = x.shape()[2];
  const std::size_t dh = d / heads;

  // [B, N, 3, H, dh] -> [3, B, H, N, dh]
  Var<T> qkv_all = permute(reshape(qkv(layer_norm(x, ln1_gamma, ln1_beta)), {B, N, 3, heads, dh}),
                           {2, 0, 3, 1, 4});
  auto part = [&](std::size_t i) { return reshape(slice(qkv_all, 0, i, i + 1), {B * heads, N, dh}); };
  const Var<T> q = part(0), k = part(1), v = part(2);
  const T inv = T(1) / std::sqrt(static_cast<T>(dh));
  Var<T> ctx = attention(q, k, v, inv);  // [B*H, N, dh]
  ctx = reshape(permute(reshape(ctx, {B, heads, N, dh}), {0, 2, 1, 3}), {B, N, d});
  const Var<T> h = add(x, out(ctx));
  return add(h, fc2(relu(fc1(layer_norm(h, ln2_gamma, ln2_beta)))));
}

template <typename T>
void TransformerLayer<T>::collect(const std::string& prefix, NamedParams<T>& out_params) const {
  out_params.emplace_back(prefix + ".ln1.g", ln1_gamma);
  out_params.emplace_back(prefix + ".ln1.b", ln1_beta);
  qkv.collect(prefix + ".qkv", out_params);
  out.collect(prefix + ".out", out_params);
  out_params.emplace_back(prefix + ".ln2.g", ln2_gamma);
  out_params.emplace_back(prefix + ".ln2.b", ln2_beta);
  fc1.collect(prefix + ".fc1", out_params);
  fc2.collect(prefix + ".fc2", out_params);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t p) {
  if (x.rank() != 3 && x.rank() != 4) throw ShapeMismatch("patchify expects [B, H, W(, C)]");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t C = x.rank() == 4 ? x.dim(3) : 1;
  if (p == 0 || H % p || W % p) throw ShapeMismatch("patch size does not tile " + shape_string(x.shape()));
  const std::size_t ny = H / p, nx = W / p, row = p * p * C;
  Tensor<T> out({B * ny * nx, row});
  const T* src = x.raw();
  T* dst = out.raw();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t py = 0; py < ny; ++py) {
      for (std::size_t px = 0; px < nx; ++px) {
        for (std::size_t dy = 0; dy < p; ++dy) {
          const T* line = src + ((b * H + py * p + dy) * W + px * p) * C;
          std::copy(line, line + p * C, dst);
          dst += p * C;
        }
      }
    }
  }
  return out;
}

template <typename T>
CrossModalEncoder<T> CrossModalEncoder<T>::make(const EncoderConfig& cfg, Stream stream,
                                                std::uint64_t seed) {
  cfg.validate();
  CrossModalEncoder e;
  e.cfg_ = cfg;
  e.stream_ = stream;
  // Fixed allocation order: every stream sees the same values for shared parts.
  Rng rng(seed);
  const std::size_t d = cfg.width;
  e.audio_patch = Affine<T>::make(cfg.audio_patch_dim(), d, rng);
  e.visual_patch = Affine<T>::make(cfg.visual_patch_dim(), d, rng);
  e.audio_modality = normal_init<T>({d}, 0.02, rng);
  e.visual_modality = normal_init<T>({d}, 0.02, rng);
  e.audio_position = normal_init<T>({cfg.audio_tokens() * d}, 0.02, rng);
  e.visual_position = normal_init<T>({cfg.visual_tokens() * d}, 0.02, rng);
  for (std::size_t i = 0; i < cfg.modality_layers; ++i) {
    e.audio_layers.push_back(TransformerLayer<T>::make(d, cfg.mlp_hidden, rng));
  }
  for (std::size_t i = 0; i < cfg.modality_layers; ++i) {
    e.visual_layers.push_back(TransformerLayer<T>::make(d, cfg.mlp_hidden, rng));
  }
  for (std::size_t i = 0; i < cfg.joint_layers; ++i) {
    e.joint_layers.push_back(TransformerLayer<T>::make(d, cfg.mlp_hidden, rng));
  }
  e.final_gamma = filled<T>({d}, T(1));
  e.final_beta = filled<T>({d}, T(0));
  e.mask_token = normal_init<T>({d}, 0.02, rng);
  e.head = MlpHead<T>::make(d, cfg.head_hidden, kClasses, rng);
  return e;
}

template <typename T>
Var<T> CrossModalEncoder<T>::embed_audio(const Tensor<T>& audio) const {
  if (audio.rank() != 3 || audio.dim(1) != cfg_.audio_height || audio.dim(2) != cfg_.audio_width) {
    throw ShapeMismatch("audio input " + shape_string(audio.shape()) + ", expected [B, " +
                        std::to_string(cfg_.audio_height) + ", " +
                        std::to_string(cfg_.audio_width) + "]");
  }
  Tensor<T> norm = audio;
  const T c = static_cast<T>(cfg_.audio_center);
  const T s = static_cast<T>(1.0 / cfg_.audio_spread);
  for (auto& v : norm.storage()) v = (v - c) * s;
  const std::size_t B = audio.dim(0), N = cfg_.audio_tokens(), d = cfg_.width;
  Var<T> x = audio_patch(Var<T>::constant(patchify(norm, cfg_.patch)));
  x = add_bias(x, audio_modality);
  if (cfg_.position_embeddings) x = add_bias(reshape(x, {B, N * d}), audio_position);
  return reshape(x, {B, N, d});
}

template <typename T>
Var<T> CrossModalEncoder<T>::embed_visual(const Tensor<T>& visual) const {
  if (visual.rank() != 4 || visual.dim(1) != cfg_.image_height ||
      visual.dim(2) != cfg_.image_width || visual.dim(3) != cfg_.image_channels) {
    throw ShapeMismatch("visual input " + shape_string(visual.shape()) + ", expected [B, " +
                        std::to_string(cfg_.image_height) + ", " +
                        std::to_string(cfg_.image_width) + ", " +
                        std::to_string(cfg_.image_channels) + "]");
  }
  const std::size_t B = visual.dim(0), N = cfg_.visual_tokens(), d = cfg_.width;
  Var<T> x = visual_patch(Var<T>::constant(patchify(visual, cfg_.patch)));
  x = add_bias(x, visual_modality);
  if (cfg_.position_embeddings) x = add_bias(reshape(x, {B, N * d}), visual_position);
  return reshape(x, {B, N, d});
}

template <typename T>
Var<T> CrossModalEncoder<T>::run_layers(const std::vector<TransformerLayer<T>>& layers,
                                        const Var<T>& x) const {
  Var<T> h = x;
  for (const auto& l : layers) h = l(h, cfg_.heads);
  return h;
}

template <typename T>
Var<T> CrossModalEncoder<T>::pool(const Var<T>& tokens) const {
  return mean_axis(layer_norm(tokens, final_gamma, final_beta), 1);
}

template <typename T>
EncoderOutput<T> CrossModalEncoder<T>::forward(const std::optional<Tensor<T>>& audio,
                                               const std::optional<Tensor<T>>& visual) const {
  const bool want_a = stream_ != Stream::kVisual;
  const bool want_v = stream_ != Stream::kAudio;
  if (want_a != audio.has_value() || want_v != visual.has_value()) {
    throw ShapeMismatch("encoder stream and supplied modalities disagree");
  }
  if (audio && visual && audio->dim(0) != visual->dim(0)) {
    throw ShapeMismatch("audio and visual batch sizes differ");
  }
  std::vector<Var<T>> streams;
  if (audio) streams.push_back(run_layers(audio_layers, embed_audio(*audio)));
  if (visual) streams.push_back(run_layers(visual_layers, embed_visual(*visual)));
  const Var<T> tokens = streams.size() == 1 ? streams[0] : concat(streams, 1);
  EncoderOutput<T> out;
  out.joint = pool(run_layers(joint_layers, tokens));
  out.logits = head(out.joint);
  return out;
}

template <typename T>
NamedParams<T> CrossModalEncoder<T>::parameters() const {
  NamedParams<T> p;
  const bool use_a = stream_ != Stream::kVisual;
  const bool use_v = stream_ != Stream::kAudio;
  if (use_a) {
    audio_patch.collect("enc.audio_patch", p);
    p.emplace_back("enc.audio_modality", audio_modality);
    if (cfg_.position_embeddings) p.emplace_back("enc.audio_position", audio_position);
    for (std::size_t i = 0; i < audio_layers.size(); ++i) {
      audio_layers[i].collect("enc.audio_layer" + std::to_string(i), p);
    }
  }
  if (use_v) {
    visual_patch.collect("enc.visual_patch", p);
    p.emplace_back("enc.visual_modality", visual_modality);
    if (cfg_.position_embeddings) p.emplace_back("enc.visual_position", visual_position);
    for (std::size_t i = 0; i < visual_layers.size(); ++i) {
      visual_layers[i].collect("enc.visual_layer" + std::to_string(i), p);
    }
  }
  for (std::size_t i = 0; i < joint_layers.size(); ++i) {
    joint_layers[i].collect("enc.joint_layer" + std::to_string(i), p);
  }
  p.emplace_back("enc.final.g", final_gamma);
  p.emplace_back("enc.final.b", final_beta);
  head.collect("head", p);
  return p;
}

template <typename T>
NamedParams<T> CrossModalEncoder<T>::pretraining_parameters() const {
  if (stream_ != Stream::kJoint) throw InvalidConfig("pretraining needs the joint stream");
  NamedParams<T> p = parameters();
  p.erase(std::remove_if(p.begin(), p.end(),
                         [](const auto& kv) { return kv.first.rfind("head.", 0) == 0; }),
          p.end());
  p.emplace_back("enc.mask_token", mask_token);
  return p;
}

template struct TransformerLayer<float>;
template struct TransformerLayer<double>;
template class CrossModalEncoder<float>;
template class CrossModalEncoder<double>;
template Tensor<float> patchify<float>(const Tensor<float>&, std::size_t);
template Tensor<double> patchify<double>(const Tensor<double>&, std::size_t);

}  // namespace pqc::models
