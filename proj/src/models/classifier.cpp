#include "pqc/models.hpp"

namespace pqc::models {
namespace {

template <typename T>
const Tensor<T>& need(const std::optional<Tensor<T>>& t, const char* what) {
  if (!t) throw ShapeMismatch(std::string("model needs ") + what + " input");
  return *t;
}

Stream stream_of(ModelKind k) {
  switch (k) {
    case ModelKind::kCrossModalAudio:
      return Stream::kAudio;
    case ModelKind::kCrossModalVisual:
      return Stream::kVisual;
    default:
      return Stream::kJoint;
  }
}

}  // namespace

std::string_view model_token(ModelKind k) {
  switch (k) {
    case ModelKind::kCnn:
      return "cnn";
    case ModelKind::kEnsemble:
      return "ensemble";
    case ModelKind::kCrossModal:
      return "crossmodal";
    case ModelKind::kCrossModalAudio:
      return "crossmodal-audio";
    case ModelKind::kCrossModalVisual:
      return "crossmodal-visual";
  }
  return "?";
}

ModelKind parse_model(std::string_view s) {
  for (auto k : {ModelKind::kCnn, ModelKind::kEnsemble, ModelKind::kCrossModal,
                 ModelKind::kCrossModalAudio, ModelKind::kCrossModalVisual}) {
    if (s == model_token(k)) return k;
  }
  throw InvalidConfig("unknown model '" + std::string(s) + "'");
}

bool ModelConfig::uses_audio() const {
  switch (kind) {
    case ModelKind::kCnn:
      return cnn_branch == Branch::kAudio;
    case ModelKind::kCrossModalVisual:
      return false;
    default:
      return true;
  }
}

bool ModelConfig::uses_visual() const {
  switch (kind) {
    case ModelKind::kCnn:
      return cnn_branch == Branch::kVisual;
    case ModelKind::kCrossModalAudio:
      return false;
    default:
      return true;
  }
}

template <typename T>
CnnClassifier<T>::CnnClassifier(const ModelConfig& cfg, std::uint64_t seed) : Classifier<T>(cfg) {
  Rng rng(seed);
  backbone = CnnBackbone<T>::make(cfg.cnn_branch == Branch::kAudio ? cfg.audio_cnn : cfg.visual_cnn,
                                  rng);
  head = MlpHead<T>::make(backbone.cfg.embed, cfg.head_hidden, kClasses, rng);
}

template <typename T>
Var<T> CnnClassifier<T>::logits(const ModelInput<T>& in) const {
  const auto& x = this->cfg_.cnn_branch == Branch::kAudio ? need(in.audio, "audio")
                                                           : need(in.visual, "visual");
  return head(backbone(Var<T>::constant(x)));
}

template <typename T>
NamedParams<T> CnnClassifier<T>::parameters() const {
  NamedParams<T> p;
  backbone.collect(std::string("cnn.") + std::string(branch_token(this->cfg_.cnn_branch)), p);
  head.collect("head", p);
  return p;
}

template <typename T>
EnsembleClassifier<T>::EnsembleClassifier(const ModelConfig& cfg, std::uint64_t seed)
    : Classifier<T>(cfg) {
  Rng rng(seed);
  audio = CnnBackbone<T>::make(cfg.audio_cnn, rng);
  visual = CnnBackbone<T>::make(cfg.visual_cnn, rng);
  head = MlpHead<T>::make(cfg.audio_cnn.embed + cfg.visual_cnn.embed, cfg.head_hidden, kClasses,
                          rng);
}

template <typename T>
Var<T> EnsembleClassifier<T>::logits(const ModelInput<T>& in) const {
  const Var<T> fa = audio(Var<T>::constant(need(in.audio, "audio")));
  const Var<T> fv = visual(Var<T>::constant(need(in.visual, "visual")));
  if (fa.shape()[0] != fv.shape()[0]) throw ShapeMismatch("audio and visual batch sizes differ");
  return head(concat<T>({fa, fv}, 1));
}

template <typename T>
NamedParams<T> EnsembleClassifier<T>::parameters() const {
  NamedParams<T> p;
  audio.collect("cnn.audio", p);
  visual.collect("cnn.visual", p);
  head.collect("head", p);
  return p;
}

template <typename T>
CrossModalClassifier<T>::CrossModalClassifier(const ModelConfig& cfg, std::uint64_t seed)
    : Classifier<T>(cfg), encoder(CrossModalEncoder<T>::make(cfg.encoder, stream_of(cfg.kind), seed)) {}

template <typename T>
Var<T> CrossModalClassifier<T>::logits(const ModelInput<T>& in) const {
  const Stream s = encoder.stream();
  std::optional<Tensor<T>> a, v;
  if (s != Stream::kVisual) a = need(in.audio, "audio");
  if (s != Stream::kAudio) v = need(in.visual, "visual");
  return encoder.forward(a, v).logits;
}

template <typename T>
NamedParams<T> CrossModalClassifier<T>::parameters() const {
  return encoder.parameters();
}

template <typename T>
std::unique_ptr<Classifier<T>> make_classifier(const ModelConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case ModelKind::kCnn:
      return std::make_unique<CnnClassifier<T>>(cfg, seed);
    case ModelKind::kEnsemble:
      return std::make_unique<EnsembleClassifier<T>>(cfg, seed);
    default:
      return std::make_unique<CrossModalClassifier<T>>(cfg, seed);
  }
}

template <typename T>
Tensor<T> probabilities(const Var<T>& logits) {
  return softmax(logits, logits.value().rank() - 1).value();
}

#define PQC_INSTANTIATE_CLASSIFIERS(T)                                                   \
  template class CnnClassifier<T>;                                                       \
  template class EnsembleClassifier<T>;                                                  \
  template class CrossModalClassifier<T>;                                                \
  template std::unique_ptr<Classifier<T>> make_classifier<T>(const ModelConfig&,         \
                                                             std::uint64_t);             \
  template Tensor<T> probabilities<T>(const Var<T>&);

PQC_INSTANTIATE_CLASSIFIERS(float)
PQC_INSTANTIATE_CLASSIFIERS(double)

#undef PQC_INSTANTIATE_CLASSIFIERS

}  // namespace pqc::models
