#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "pqc/train.hpp"

namespace pqc::train {

void TrainConfig::validate() const {
  if (epochs == 0 && pretrain_steps == 0) throw InvalidConfig("nothing to train: zero epochs");
  if (batch == 0) throw InvalidConfig("batch size must be at least 1");
  if (!(lr > 0.0)) throw InvalidConfig("learning rate must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidConfig("smoothing must lie in [0, 1)");
  for (double w : class_weights) {
    if (!(w > 0.0)) throw InvalidConfig("class weights must be positive");
  }
}

namespace {

std::vector<std::size_t> labels_of(const std::vector<Sample>& samples, std::size_t begin,
                                   std::size_t end) {
  std::vector<std::size_t> y;
  y.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) y.push_back(samples[i].label);
  return y;
}

NamedParams<float> head_parameters(const NamedParams<float>& all) {
  NamedParams<float> out;
  for (const auto& kv : all) {
    if (kv.first.rfind("head.", 0) == 0) out.push_back(kv);
  }
  return out;
}

void pretrain(models::CrossModalClassifier<float>& model, const corpus::Corpus& c,
              const std::vector<Sample>& samples, FeatureSource& features,
              const TrainConfig& cfg, TrainResult& result) {
  const auto& enc = model.encoder;
  if (enc.stream() != models::Stream::kJoint) {
    throw InvalidConfig("pretraining applies to the joint cross-modal model only");
  }
  const auto dec = models::MaeDecoder<float>::make(enc.config(), cfg.seed ^ 0x5eedULL);
  auto params = vars_of(enc.pretraining_parameters());
  NamedParams<float> dp;
  dec.collect("dec", dp);
  for (auto& v : vars_of(dp)) params.push_back(v);
  Adam<float> opt(params, {cfg.lr});
  Rng rng = Rng::derive(cfg.seed, 0xAE);
  const std::size_t B = std::min(cfg.batch, samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch(B);
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    for (std::size_t i = 0; i < B; ++i) {
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
      batch[i] = samples[order[i]];
    }
    const auto in = assemble_batch(model.config(), c, batch, 0, B, features);
    const auto out = models::mae_pretrain_step(*in.audio, *in.visual, enc, dec,
                                               models::MaeConfig{}, rng.next_u64());
    result.pretrain_loss.push_back(out.loss.value().item());
    backward(out.loss);
    opt.step();
  }
}

}  // namespace

TrainResult train(models::Classifier<float>& model, const corpus::Corpus& c,
                  const std::vector<Sample>& samples, FeatureSource& features,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw EmptyDataset("no training samples");
  TrainResult result;

  if (cfg.pretrain_steps > 0) {
    auto* cm = dynamic_cast<models::CrossModalClassifier<float>*>(&model);
    if (!cm) throw InvalidConfig("pretraining applies to the joint cross-modal model only");
    pretrain(*cm, c, samples, features, cfg, result);
  }

  const auto all = model.parameters();
  Adam<float> opt(vars_of(cfg.head_only ? head_parameters(all) : all), {cfg.lr});
  std::vector<std::size_t> order(samples.size());
  std::vector<Sample> shuffled(samples.size());
  const std::size_t per_epoch = (samples.size() + cfg.batch - 1) / cfg.batch;
  const double total_steps = static_cast<double>(per_epoch * cfg.epochs);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::derive(cfg.seed, epoch);
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = samples[order[i]];

    double total = 0.0;
    for (std::size_t begin = 0; begin < shuffled.size(); begin += cfg.batch) {
      const std::size_t end = std::min(begin + cfg.batch, shuffled.size());
      const auto in = assemble_batch(model.config(), c, shuffled, begin, end, features);
      const Var<float> loss = weighted_smoothed_ce(model.logits(in), labels_of(shuffled, begin, end),
                                                   cfg.class_weights, cfg.smoothing);
      total += static_cast<double>(loss.value().item()) * static_cast<double>(end - begin);
      backward(loss);
      if (cfg.cosine_decay) {
        opt.set_lr(cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps)));
      }
      opt.step();
      ++step;
    }
    result.epoch_loss.push_back(total / static_cast<double>(shuffled.size()));
  }
  return result;
}

std::vector<std::size_t> predict(const models::Classifier<float>& model, const corpus::Corpus& c,
                                 const std::vector<Sample>& samples, FeatureSource& features,
                                 std::size_t batch) {
  if (samples.empty()) throw EmptyDataset("no evaluation samples");
  if (batch == 0) throw InvalidConfig("batch size must be at least 1");
  const auto& cfg = model.config();
  constexpr std::size_t kUnused = static_cast<std::size_t>(-1);
  // Distinct model inputs, in first-seen order.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> slot;
  std::vector<Sample> unique;
  std::vector<std::size_t> slot_of(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto key = std::make_tuple(s.record, cfg.uses_audio() ? s.audio : kUnused,
                                     cfg.uses_visual() ? s.photo : kUnused);
    auto [it, fresh] = slot.emplace(key, unique.size());
    if (fresh) unique.push_back(s);
    slot_of[i] = it->second;
  }
  std::vector<std::size_t> unique_pred(unique.size());
  for (std::size_t begin = 0; begin < unique.size(); begin += batch) {
    const std::size_t end = std::min(begin + batch, unique.size());
    const auto in = assemble_batch(cfg, c, unique, begin, end, features);
    const auto logits = model.logits(in).value();
    for (std::size_t i = begin; i < end; ++i) {
      unique_pred[i] = argmax_class(logits.raw() + (i - begin) * kClasses);
    }
  }
  std::vector<std::size_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = unique_pred[slot_of[i]];
  return out;
}

ConfusionMatrix evaluate(const models::Classifier<float>& model, const corpus::Corpus& c,
                         const std::vector<Sample>& samples, FeatureSource& features,
                         std::size_t batch) {
  const auto pred = predict(model, c, samples, features, batch);
  ConfusionMatrix m;
  for (std::size_t i = 0; i < samples.size(); ++i) m.add(samples[i].label, pred[i]);
  return m;
}

}  // namespace pqc::train
