#pragma once

// Supervised training and evaluation of the classifiers on audio-visual pair
// instances, the class-weighted label-smoothed loss, confusion matrices,
// accuracy, and text/CSV reports.

#include <array>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pqc/corpus.hpp"
#include "pqc/models.hpp"
#include "pqc/optim.hpp"

namespace pqc::train {

inline constexpr std::size_t kClasses = corpus::kClasses;
using Weights = std::array<double, kClasses>;

// ---- loss -----------------------------------------------------------------

// Per sample the target is (1 - eps) * onehot + eps / 4; the loss is
// sum_b w[y_b] * CE(target_b, softmax(logits_b)) / sum_b w[y_b].
// DomainError for labels outside 0..3 or eps outside [0, 1).
template <typename T>
Var<T> weighted_smoothed_ce(const Var<T>& logits, const std::vector<std::size_t>& labels,
                            const Weights& weights, double eps);

// ---- metrics --------------------------------------------------------------

// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kClasses>, kClasses> counts{};

  void add(std::size_t actual, std::size_t predicted) { ++counts.at(actual).at(predicted); }
  std::size_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

// Trace over total. EmptyDataset when the matrix is empty.
double accuracy(const ConfusionMatrix& m);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_class(const float* scores, std::size_t n = kClasses);

// ---- data -----------------------------------------------------------------

// One training or test instance: an audio/photo pair of one record. Models
// that read a single modality ignore the other index.
struct Sample {
  std::size_t record = 0;  // index into the accompanying corpus
  std::size_t audio = 0;
  std::size_t photo = 0;
  std::size_t label = 0;
  bool operator==(const Sample&) const = default;
};

// Flattens per-record pair sets (aligned with c.records) into samples.
std::vector<Sample> samples_from_pairs(const corpus::Corpus& c,
                                       const std::vector<corpus::PairSet>& sets);

using FeaturePtr = std::shared_ptr<const Tensor<float>>;

class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual FeaturePtr audio(const corpus::PineappleRecord& r, std::size_t j) = 0;
  virtual FeaturePtr visual(const corpus::PineappleRecord& r, std::size_t k) = 0;
};

// Runs the audio and image chains on demand against a reference corpus and
// memoizes the results (least recently used beyond `budget_bytes`). Records
// are matched by id, so any split of the reference corpus can be served.
// Safe for concurrent use.
class FeatureStore final : public FeatureSource {
 public:
  explicit FeatureStore(corpus::Corpus reference, std::size_t budget_bytes = std::size_t(2) << 30);

  FeaturePtr audio(const corpus::PineappleRecord& r, std::size_t j) override;
  FeaturePtr visual(const corpus::PineappleRecord& r, std::size_t k) override;

  std::size_t cached_bytes() const;
  std::size_t computed() const;  // cache misses so far

 private:
  using Key = std::tuple<std::size_t, bool, std::size_t>;  // record, visual, index
  FeaturePtr lookup(const corpus::PineappleRecord& r, bool visual, std::size_t index);

  corpus::Corpus ref_;
  std::unordered_map<std::string, std::size_t> index_of_;
  std::size_t budget_;
  mutable std::mutex mu_;
  std::list<Key> lru_;  // front = most recent
  std::map<Key, std::pair<FeaturePtr, std::list<Key>::iterator>> cache_;
  std::size_t bytes_ = 0;
  std::size_t computed_ = 0;
};

// Stacks the features a model needs for samples[begin, end).
models::ModelInput<float> assemble_batch(const models::ModelConfig& cfg,
                                         const corpus::Corpus& c,
                                         const std::vector<Sample>& samples, std::size_t begin,
                                         std::size_t end, FeatureSource& features);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double lr = 1e-3;
  double smoothing = 0.1;
  // Cosine decay of the step size from lr to 0 over all supervised steps.
  bool cosine_decay = false;
  Weights class_weights{1.0, 1.0, 1.0, 1.0};
  std::uint64_t seed = 0;  // data order
  // Masked/contrastive steps before supervised training (joint cross-modal
  // models only).
  std::size_t pretrain_steps = 0;
  // Train only the classification head; the rest stays at its initial or
  // pretrained values.
  bool head_only = false;

  void validate() const;  // InvalidConfig
};

struct TrainResult {
  std::vector<double> epoch_loss;     // mean supervised loss per epoch
  std::vector<double> pretrain_loss;  // combined objective per pretraining step
};

// Mini-batch Adam on weighted_smoothed_ce over a per-epoch shuffle drawn
// from derive(cfg.seed, epoch). EmptyDataset for no samples.
TrainResult train(models::Classifier<float>& model, const corpus::Corpus& c,
                  const std::vector<Sample>& samples, FeatureSource& features,
                  const TrainConfig& cfg);

// ---- evaluation -----------------------------------------------------------

// Argmax prediction per sample; inputs shared by several samples (a
// unimodal model sees each soundtrack of the four-by-four test grid four
// times) are evaluated once.
std::vector<std::size_t> predict(const models::Classifier<float>& model, const corpus::Corpus& c,
                                 const std::vector<Sample>& samples, FeatureSource& features,
                                 std::size_t batch = 16);

ConfusionMatrix evaluate(const models::Classifier<float>& model, const corpus::Corpus& c,
                         const std::vector<Sample>& samples, FeatureSource& features,
                         std::size_t batch = 16);

// ---- reports --------------------------------------------------------------

struct ReportRow {
  std::string model;
  std::string factors;  // view factors for unimodal tables; may be empty
  std::string strategy;
  std::size_t samples = 0;
  double accuracy = 0.0;
};

struct TitledMatrix {
  std::string title;
  ConfusionMatrix matrix;
};

using ReportHeader = std::vector<std::pair<std::string, std::string>>;

// Header lines, an aligned table (model, [factors,] strategy, samples,
// accuracy to two decimals) and row-normalized confusion matrices. The
// factors column appears only when some row has factors; the matrix section
// only when matrices are given.
std::string format_report(const ReportHeader& header, const std::vector<ReportRow>& rows,
                          const std::vector<TitledMatrix>& matrices);
std::string format_csv(const std::vector<ReportRow>& rows);
std::string format_loss_trace(const std::vector<double>& epoch_loss);

}  // namespace pqc::train
