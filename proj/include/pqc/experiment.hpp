#pragma once

// Checkpoints, plain key=value configuration, and the experiment runner that
// walks the (model, strategy, S, seed) grid: split, sample, train, evaluate,
// and aggregate into reports.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pqc/corpus.hpp"
#include "pqc/models.hpp"
#include "pqc/train.hpp"

namespace pqc::experiment {

// ---- key=value configuration ----------------------------------------------

// Ordered so that echoing it is deterministic.
using KeyValues = std::map<std::string, std::string>;

// One `key = value` per line; '#' starts a comment; blank lines ignored.
// InvalidConfig on a line without '=' or a repeated key.
KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);  // MissingFile

// Typed readers; InvalidConfig when the value does not parse.
std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback);
double get_double(const KeyValues& kv, const std::string& key, double fallback);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
// Comma-separated list.
std::vector<std::string> get_list(const KeyValues& kv, const std::string& key,
                                  const std::vector<std::string>& fallback);

// Model architecture keys (model.*, cnn.*, encoder.*) applied over `base`.
models::ModelConfig model_config_from(const KeyValues& kv, models::ModelConfig base);
KeyValues model_config_keys(const models::ModelConfig& cfg);
corpus::SyntheticConfig synthetic_config_from(const KeyValues& kv, corpus::SyntheticConfig base);
KeyValues synthetic_config_keys(const corpus::SyntheticConfig& cfg);

// Architecture used by the desk-scale experiments: a narrow single-head
// encoder with one modality layer and one joint layer.
models::EncoderConfig desk_encoder();

// ---- checkpoints ----------------------------------------------------------

// `path` holds the parameters as consecutive PQCT tensors; `path`.index is
// text: a header line, the model configuration as `config key value` lines,
// then one `param name offset extent...` line per tensor.
void save_checkpoint(const std::filesystem::path& path, const models::Classifier<float>& model);
// MissingFile when either file is absent; MalformedCheckpoint when the index
// is inconsistent with the tensors or with the architecture it names.
std::unique_ptr<models::Classifier<float>> load_checkpoint(const std::filesystem::path& path);

// ---- experiment runner ----------------------------------------------------

struct ModelSpec {
  models::ModelKind kind = models::ModelKind::kCrossModal;
  models::Branch cnn_branch = models::Branch::kAudio;
  std::string name() const;  // cnn-audio, cnn-visual, or the kind token
  bool operator==(const ModelSpec&) const = default;
};
ModelSpec parse_model_spec(std::string_view token);  // InvalidConfig

struct ExperimentSpec {
  std::vector<ModelSpec> models;
  std::vector<corpus::Strategy> strategies;
  std::vector<std::size_t> samples_per_record;  // S values
  std::vector<std::uint64_t> seeds;
  models::ModelConfig architecture;  // kind and branch are taken from `models`
  train::TrainConfig training;       // seed and class weights are set per cell
  double train_fraction = 0.8;
  bool weight_classes = true;  // reciprocal class-size weights

  void validate(const corpus::Corpus& c) const;  // InvalidConfig, InfeasibleSampling
};

struct CellResult {
  ModelSpec model;
  corpus::Strategy strategy = corpus::Strategy::kRandom;
  std::size_t samples_per_record = 0;
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  train::ConfusionMatrix matrix;
  double accuracy = 0.0;
  std::vector<double> epoch_loss;
};

struct ExperimentResult {
  std::vector<CellResult> cells;        // grid order, seeds innermost
  std::vector<train::ReportRow> rows;   // mean accuracy over seeds
  std::vector<train::TitledMatrix> matrices;  // summed over seeds
};

// Per seed s the split uses derive(s, 1), sampling derive(s, 2), model
// initialization derive(s, 3) and the data order derive(s, 4); all models
// of one seed therefore see the same split and the same pairs per strategy.
// Cells run on up to `workers` threads; results do not depend on it.
ExperimentResult run_experiment(const ExperimentSpec& spec, const corpus::Corpus& c,
                                train::FeatureSource& features, std::size_t workers = 1);

// report.txt, report.csv, cells.csv and one loss trace per cell.
void write_reports(const std::filesystem::path& dir, const train::ReportHeader& header,
                   const ExperimentResult& result);

}  // namespace pqc::experiment
