#pragma once

// Classifier families over audio/visual features: a three-block CNN, the
// ensemble that concatenates an audio and a visual CNN embedding ahead of an
// MLP head, and a cross-modal transformer encoder over 16x16 patch tokens of
// both modalities. Also the contrastive and masked-reconstruction objectives
// used to pretrain the encoder.
//
// Feature layouts (batch first, channels last):
//   audio  [B, 1024, 128]     log-Mel maps
//   visual [B, 224, 224, 3]   standardized RGB
// Every model returns class logits [B, 4]; softmax gives probabilities.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pqc/nn.hpp"
#include "pqc/ops.hpp"

namespace pqc::models {

inline constexpr std::size_t kClasses = 4;

enum class Branch : std::uint8_t { kAudio, kVisual };
std::string_view branch_token(Branch b);

// ---- building blocks ------------------------------------------------------

template <typename T>
struct Affine {
  Var<T> w;  // [in, out]
  Var<T> b;  // [out]

  static Affine make(std::size_t in, std::size_t out, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// Two affine layers with a rectifier between.
template <typename T>
struct MlpHead {
  Affine<T> fc1;
  Affine<T> fc2;

  static MlpHead make(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return fc2(relu(fc1(x))); }
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// ---- CNN ------------------------------------------------------------------

struct CnnConfig {
  std::size_t height = 1024;
  std::size_t width = 128;
  std::size_t channels = 1;
  std::array<std::size_t, 3> widths{8, 16, 32};
  std::array<std::size_t, 3> kernels{5, 3, 3};  // odd; "same" padding
  std::size_t pool = 2;
  std::size_t embed = 128;
  // Inputs enter as (x - input_center) / input_spread.
  double input_center = 0.0;
  double input_spread = 1.0;

  // Spatial extent after the three conv/pool blocks, times the last width.
  std::size_t flat_features() const;
  void validate() const;  // InvalidConfig
  bool operator==(const CnnConfig&) const = default;
};
CnnConfig audio_cnn_config();   // log-Mel input, scaled like the encoder's
CnnConfig visual_cnn_config();  // standardized RGB input

// conv -> relu -> maxpool, three times (evaluated as pool then relu);
// flatten; affine projection to the embedding.
template <typename T>
struct CnnBackbone {
  CnnConfig cfg;
  std::array<Var<T>, 3> kernel;  // OIHW
  std::array<Var<T>, 3> bias;
  Affine<T> proj;

  static CnnBackbone make(const CnnConfig& cfg, Rng& rng);
  // x: [B, H, W] (one channel) or [B, H, W, C].
  Var<T> operator()(const Var<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// ---- cross-modal encoder --------------------------------------------------

enum class Stream : std::uint8_t { kJoint, kAudio, kVisual };

struct EncoderConfig {
  std::size_t audio_height = 1024;
  std::size_t audio_width = 128;
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  std::size_t image_channels = 3;
  std::size_t patch = 16;
  std::size_t width = 64;  // token width
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::size_t modality_layers = 1;
  std::size_t joint_layers = 2;
  std::size_t head_hidden = 64;
  bool position_embeddings = true;
  // Log-Mel inputs are mapped to (x - audio_center) / audio_spread before
  // patching; the defaults match the range of the Mel front end.
  double audio_center = -3.5;
  double audio_spread = 4.0;

  std::size_t audio_tokens() const;
  std::size_t visual_tokens() const;
  std::size_t audio_patch_dim() const { return patch * patch; }
  std::size_t visual_patch_dim() const { return patch * patch * image_channels; }
  void validate() const;  // InvalidConfig
  bool operator==(const EncoderConfig&) const = default;
};

// Pre-norm transformer layer: x + Attn(LN(x)), then x + MLP(LN(x)).
template <typename T>
struct TransformerLayer {
  Var<T> ln1_gamma, ln1_beta;
  Affine<T> qkv;  // width -> 3 * width
  Affine<T> out;
  Var<T> ln2_gamma, ln2_beta;
  Affine<T> fc1, fc2;

  static TransformerLayer make(std::size_t width, std::size_t mlp_hidden, Rng& rng);
  // x: [B, N, width]
  Var<T> operator()(const Var<T>& x, std::size_t heads) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// Non-overlapping patches as rows: audio [B, H, W] -> [B * N, p * p],
// visual [B, H, W, C] -> [B * N, p * p * C]; tokens in row-major patch order.
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t patch);

template <typename T>
struct EncoderOutput {
  Var<T> joint;   // [B, width], mean over tokens
  Var<T> logits;  // [B, 4]
};

template <typename T>
class CrossModalEncoder {
 public:
  // Allocates the weights of every stream, so unimodal and joint encoders
  // built from one seed share their common parts.
  static CrossModalEncoder make(const EncoderConfig& cfg, Stream stream, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  Stream stream() const { return stream_; }

  // Inputs the stream does not use must be absent.
  EncoderOutput<T> forward(const std::optional<Tensor<T>>& audio,
                           const std::optional<Tensor<T>>& visual) const;

  // Stages, exposed for pretraining and for tests that compose them by hand.
  Var<T> embed_audio(const Tensor<T>& audio) const;    // [B, Na, width]
  Var<T> embed_visual(const Tensor<T>& visual) const;  // [B, Nv, width]
  Var<T> run_layers(const std::vector<TransformerLayer<T>>& layers, const Var<T>& x) const;
  Var<T> pool(const Var<T>& tokens) const;  // final LN then mean over tokens

  // Parameters that the stream's supervised forward pass touches.
  NamedParams<T> parameters() const;
  // Parameters touched by joint masked/contrastive pretraining.
  NamedParams<T> pretraining_parameters() const;

  Affine<T> audio_patch, visual_patch;
  Var<T> audio_modality, visual_modality;  // [width]
  Var<T> audio_position, visual_position;  // [N * width]
  std::vector<TransformerLayer<T>> audio_layers, visual_layers, joint_layers;
  Var<T> final_gamma, final_beta;
  Var<T> mask_token;  // [width]
  MlpHead<T> head;

 private:
  EncoderConfig cfg_;
  Stream stream_ = Stream::kJoint;
};

// ---- pretraining objectives -----------------------------------------------

// Symmetric InfoNCE over a paired batch: both inputs are L2-normalized, the
// logits are cosine similarities / temperature, matched rows are positives.
template <typename T>
Var<T> contrastive_loss(const Var<T>& audio, const Var<T>& visual, T temperature);

// Mean squared error over all elements of `pred` against a constant target.
template <typename T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& target);

std::size_t masked_count(double ratio, std::size_t tokens);  // ceil(ratio * tokens)
// Exactly `count` ones among `tokens`, a pure function of the seed.
std::vector<std::uint8_t> token_mask(std::size_t tokens, std::size_t count, std::uint64_t seed);

struct MaeConfig {
  double mask_ratio = 0.75;
  double contrastive_weight = 0.1;
  double temperature = 0.07;
};

// Linear read-out of masked token outputs back to patch contents.
template <typename T>
struct MaeDecoder {
  Affine<T> audio_out;   // width -> audio patch dim
  Affine<T> visual_out;  // width -> visual patch dim

  static MaeDecoder make(const EncoderConfig& cfg, std::uint64_t seed);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct MaeStep {
  Var<T> loss;            // reconstruction + weight * contrastive
  Var<T> reconstruction;
  Var<T> contrastive;
  std::vector<std::uint8_t> mask;  // [B * (Na + Nv)]
};

// One forward pass of the joint masked-reconstruction objective. Per sample,
// masked_count(ratio, Na + Nv) tokens chosen by derive(seed, b) are replaced
// by the mask token after the modality layers; the decoder reconstructs the
// masked patches from the joint layer outputs. The contrastive term pairs the
// mean modality-layer outputs of the two streams. InvalidConfig unless
// 0 < ratio < 1 and the encoder stream is joint.
template <typename T>
MaeStep<T> mae_pretrain_step(const Tensor<T>& audio, const Tensor<T>& visual,
                             const CrossModalEncoder<T>& enc, const MaeDecoder<T>& dec,
                             const MaeConfig& cfg, std::uint64_t seed);

// ---- classifiers ----------------------------------------------------------

enum class ModelKind : std::uint8_t { kCnn, kEnsemble, kCrossModal, kCrossModalAudio, kCrossModalVisual };
std::string_view model_token(ModelKind k);
ModelKind parse_model(std::string_view s);  // InvalidConfig

struct ModelConfig {
  ModelKind kind = ModelKind::kCrossModal;
  Branch cnn_branch = Branch::kAudio;  // which modality a plain CNN reads
  CnnConfig audio_cnn = audio_cnn_config();
  CnnConfig visual_cnn = visual_cnn_config();
  std::size_t head_hidden = 64;
  EncoderConfig encoder;

  bool uses_audio() const;
  bool uses_visual() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelInput {
  std::optional<Tensor<T>> audio;
  std::optional<Tensor<T>> visual;
};

template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Var<T> logits(const ModelInput<T>& in) const = 0;
  virtual NamedParams<T> parameters() const = 0;
  const ModelConfig& config() const { return cfg_; }

 protected:
  explicit Classifier(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  ModelConfig cfg_;
};

template <typename T>
class CnnClassifier final : public Classifier<T> {
 public:
  CnnClassifier(const ModelConfig& cfg, std::uint64_t seed);
  Var<T> logits(const ModelInput<T>& in) const override;
  NamedParams<T> parameters() const override;

  CnnBackbone<T> backbone;
  MlpHead<T> head;
};

template <typename T>
class EnsembleClassifier final : public Classifier<T> {
 public:
  EnsembleClassifier(const ModelConfig& cfg, std::uint64_t seed);
  Var<T> logits(const ModelInput<T>& in) const override;
  NamedParams<T> parameters() const override;

  CnnBackbone<T> audio;
  CnnBackbone<T> visual;
  MlpHead<T> head;  // input width = audio embed + visual embed
};

template <typename T>
class CrossModalClassifier final : public Classifier<T> {
 public:
  CrossModalClassifier(const ModelConfig& cfg, std::uint64_t seed);
  Var<T> logits(const ModelInput<T>& in) const override;
  NamedParams<T> parameters() const override;

  CrossModalEncoder<T> encoder;
};

template <typename T>
std::unique_ptr<Classifier<T>> make_classifier(const ModelConfig& cfg, std::uint64_t seed);

// Row-wise softmax of [B, 4] logits.
template <typename T>
Tensor<T> probabilities(const Var<T>& logits);

}  // namespace pqc::models
