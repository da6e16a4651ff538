#pragma once

// Small model shapes for gradient checks and fast property tests.

#include "pqc/models.hpp"
#include "pqc/rng.hpp"

namespace pqc::testing {

inline models::CnnConfig tiny_cnn(std::size_t channels) {
  models::CnnConfig c;
  c.height = 8;
  c.width = 8;
  c.channels = channels;
  c.widths = {2, 3, 2};
  c.kernels = {3, 3, 1};
  c.embed = 4;
  return c;
}

inline models::EncoderConfig tiny_encoder() {
  models::EncoderConfig e;
  e.audio_height = 8;
  e.audio_width = 8;
  e.image_height = 8;
  e.image_width = 8;
  e.patch = 4;
  e.width = 16;
  e.heads = 2;
  e.mlp_hidden = 16;
  e.modality_layers = 1;
  e.joint_layers = 1;
  e.head_hidden = 8;
  return e;
}

inline models::ModelConfig tiny_model(models::ModelKind kind,
                                      models::Branch branch = models::Branch::kAudio) {
  models::ModelConfig m;
  m.kind = kind;
  m.cnn_branch = branch;
  m.audio_cnn = tiny_cnn(1);
  m.visual_cnn = tiny_cnn(3);
  m.head_hidden = 5;
  m.encoder = tiny_encoder();
  return m;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Batch of tiny inputs in the layouts the models expect.
template <typename T>
models::ModelInput<T> tiny_input(std::size_t batch, Rng& rng) {
  return {random_tensor<T>({batch, 8, 8}, rng, -12.0, 0.0), random_tensor<T>({batch, 8, 8, 3}, rng)};
}

}  // namespace pqc::testing
