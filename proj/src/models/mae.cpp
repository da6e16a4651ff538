#include <cmath>
#include <numeric>

#include "pqc/models.hpp"

namespace pqc::models {

template <typename T>
Var<T> contrastive_loss(const Var<T>& audio, const Var<T>& visual, T temperature) {
  if (!(temperature > T(0))) throw InvalidConfig("contrastive temperature must be positive");
  if (audio.value().rank() != 2 || audio.shape() != visual.shape()) {
    throw ShapeMismatch("contrastive batches must both be [B, d]: " + shape_string(audio.shape()) +
                        " vs " + shape_string(visual.shape()));
  }
  const std::size_t B = audio.shape()[0];
  const Var<T> sim =
      scale(matmul(l2_normalize(audio), permute(l2_normalize(visual), {1, 0})), T(1) / temperature);
  Tensor<T> eye({B, B});
  for (std::size_t i = 0; i < B; ++i) eye[i * B + i] = T(1);
  const Var<T> diag = Var<T>::constant(eye);
  const Var<T> a2v = sum(mul(log_softmax(sim), diag));
  const Var<T> v2a = sum(mul(log_softmax(permute(sim, {1, 0})), diag));
  return scale(add(a2v, v2a), T(-0.5) / static_cast<T>(B));
}

template <typename T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeMismatch("reconstruction " + shape_string(pred.shape()) + " vs target " +
                        shape_string(target.shape()));
  }
  const Var<T> diff = sub(pred, Var<T>::constant(target));
  return mean(mul(diff, diff));
}

std::size_t masked_count(double ratio, std::size_t tokens) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidConfig("mask ratio must lie in (0, 1)");
  // Guard against ratio * tokens landing a hair above an integer.
  const double exact = ratio * static_cast<double>(tokens);
  const double near = std::round(exact);
  return static_cast<std::size_t>(std::abs(exact - near) < 1e-9 ? near : std::ceil(exact));
}

std::vector<std::uint8_t> token_mask(std::size_t tokens, std::size_t count, std::uint64_t seed) {
  if (count > tokens) throw InvalidConfig("cannot mask more tokens than exist");
  std::vector<std::size_t> order(tokens);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::vector<std::uint8_t> mask(tokens, 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(tokens - i)]);
    mask[order[i]] = 1;
  }
  return mask;
}

template <typename T>
MaeDecoder<T> MaeDecoder<T>::make(const EncoderConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return {Affine<T>::make(cfg.width, cfg.audio_patch_dim(), rng),
          Affine<T>::make(cfg.width, cfg.visual_patch_dim(), rng)};
}

template <typename T>
void MaeDecoder<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  audio_out.collect(prefix + ".audio", out);
  visual_out.collect(prefix + ".visual", out);
}

template <typename T>
MaeStep<T> mae_pretrain_step(const Tensor<T>& audio, const Tensor<T>& visual,
                             const CrossModalEncoder<T>& enc, const MaeDecoder<T>& dec,
                             const MaeConfig& cfg, std::uint64_t seed) {
  if (enc.stream() != Stream::kJoint) throw InvalidConfig("pretraining needs the joint stream");
  const EncoderConfig& ec = enc.config();
  const std::size_t Na = ec.audio_tokens(), Nv = ec.visual_tokens(), N = Na + Nv;
  const std::size_t count = masked_count(cfg.mask_ratio, N);
  if (audio.dim(0) != visual.dim(0)) throw ShapeMismatch("audio and visual batch sizes differ");
  const std::size_t B = audio.dim(0);

  const Var<T> a_tok = enc.run_layers(enc.audio_layers, enc.embed_audio(audio));
  const Var<T> v_tok = enc.run_layers(enc.visual_layers, enc.embed_visual(visual));

  MaeStep<T> step;
  step.contrastive = contrastive_loss(mean_axis(a_tok, 1), mean_axis(v_tok, 1),
                                      static_cast<T>(cfg.temperature));

  step.mask.reserve(B * N);
  for (std::size_t b = 0; b < B; ++b) {
    const auto m = token_mask(N, count, Rng::derive(seed, b).next_u64());
    step.mask.insert(step.mask.end(), m.begin(), m.end());
  }
  const Var<T> joint =
      enc.run_layers(enc.joint_layers, replace_rows(concat<T>({a_tok, v_tok}, 1), step.mask,
                                                    enc.mask_token));
  const Var<T> rows = reshape(layer_norm(joint, enc.final_gamma, enc.final_beta), {B * N, ec.width});

  // Targets in the same units the encoder sees.
  Tensor<T> a_norm = audio;
  for (auto& v : a_norm.storage()) {
    v = static_cast<T>((v - ec.audio_center) / ec.audio_spread);
  }
  const Tensor<T> a_patches = patchify(a_norm, ec.patch);
  const Tensor<T> v_patches = patchify(visual, ec.patch);

  std::vector<std::size_t> a_rows, v_rows, a_src, v_src;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n < N; ++n) {
      if (!step.mask[b * N + n]) continue;
      if (n < Na) {
        a_rows.push_back(b * N + n);
        a_src.push_back(b * Na + n);
      } else {
        v_rows.push_back(b * N + n);
        v_src.push_back(b * Nv + (n - Na));
      }
    }
  }
  auto gather_target = [](const Tensor<T>& patches, const std::vector<std::size_t>& idx) {
    const std::size_t w = patches.dim(1);
    Tensor<T> t({idx.size(), w});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(patches.raw() + idx[i] * w, w, t.raw() + i * w);
    }
    return t;
  };

  // Mean over every reconstructed element of both modalities.
  const double a_elems = static_cast<double>(a_rows.size() * ec.audio_patch_dim());
  const double v_elems = static_cast<double>(v_rows.size() * ec.visual_patch_dim());
  std::vector<Var<T>> parts;
  if (!a_rows.empty()) {
    parts.push_back(scale(masked_mse(dec.audio_out(gather_rows(rows, a_rows)),
                                     gather_target(a_patches, a_src)),
                          static_cast<T>(a_elems / (a_elems + v_elems))));
  }
  if (!v_rows.empty()) {
    parts.push_back(scale(masked_mse(dec.visual_out(gather_rows(rows, v_rows)),
                                     gather_target(v_patches, v_src)),
                          static_cast<T>(v_elems / (a_elems + v_elems))));
  }
  step.reconstruction = parts.size() == 1 ? parts[0] : add(parts[0], parts[1]);
  step.loss = add(step.reconstruction,
                  scale(step.contrastive, static_cast<T>(cfg.contrastive_weight)));
  return step;
}

#define PQC_INSTANTIATE_MAE(T)                                                              \
  template Var<T> contrastive_loss<T>(const Var<T>&, const Var<T>&, T);                     \
  template Var<T> masked_mse<T>(const Var<T>&, const Tensor<T>&);                           \
  template struct MaeDecoder<T>;                                                            \
  template MaeStep<T> mae_pretrain_step<T>(const Tensor<T>&, const Tensor<T>&,              \
                                           const CrossModalEncoder<T>&, const MaeDecoder<T>&, \
                                           const MaeConfig&, std::uint64_t);

PQC_INSTANTIATE_MAE(float)
PQC_INSTANTIATE_MAE(double)

#undef PQC_INSTANTIATE_MAE

}  // namespace pqc::models
