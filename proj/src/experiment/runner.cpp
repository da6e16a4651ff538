#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "pqc/experiment.hpp"

namespace pqc::experiment {
namespace {

struct SeedData {
  corpus::Split split;
  std::vector<train::Sample> test;
  train::Weights weights{1.0, 1.0, 1.0, 1.0};
};

void require_disjoint(const corpus::Split& s) {
  std::set<std::string> train_ids;
  for (const auto& r : s.train.records) train_ids.insert(r.id);
  for (const auto& r : s.test.records) {
    if (train_ids.count(r.id)) {
      throw DuplicateId("record " + r.id + " is in both the training and the test split");
    }
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw MissingFile("cannot write " + path.string());
}

}  // namespace

std::string ModelSpec::name() const {
  if (kind == models::ModelKind::kCnn) return "cnn-" + std::string(models::branch_token(cnn_branch));
  return std::string(models::model_token(kind));
}

ModelSpec parse_model_spec(std::string_view token) {
  if (token == "cnn" || token == "cnn-audio") return {models::ModelKind::kCnn, models::Branch::kAudio};
  if (token == "cnn-visual") return {models::ModelKind::kCnn, models::Branch::kVisual};
  return {models::parse_model(token), models::Branch::kAudio};
}

void ExperimentSpec::validate(const corpus::Corpus& c) const {
  if (models.empty()) throw InvalidConfig("experiment needs at least one model");
  if (strategies.empty()) throw InvalidConfig("experiment needs at least one sampling strategy");
  if (samples_per_record.empty()) throw InvalidConfig("experiment needs at least one S value");
  if (seeds.empty()) throw InvalidConfig("experiment needs at least one seed");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidConfig("train fraction must lie in (0, 1)");
  }
  auto t = training;
  if (t.epochs == 0) throw InvalidConfig("experiment needs at least one epoch");
  t.validate();
  architecture.encoder.validate();
  for (std::size_t s : samples_per_record) {
    if (s == 0) throw InvalidConfig("S must be at least 1");
    for (const auto& r : c.records) {
      if (s > r.audio.size() * r.photos.size()) {
        throw InfeasibleSampling("S = " + std::to_string(s) + " exceeds the " +
                                 std::to_string(r.audio.size() * r.photos.size()) +
                                 " pairs of record " + r.id);
      }
    }
  }
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const corpus::Corpus& c,
                                train::FeatureSource& features, std::size_t workers) {
  spec.validate(c);

  std::vector<SeedData> per_seed;
  for (std::uint64_t seed : spec.seeds) {
    SeedData d;
    d.split = corpus::stratified_split(c, spec.train_fraction, Rng::derive(seed, 1).next_u64());
    require_disjoint(d.split);
    d.test = train::samples_from_pairs(d.split.test, corpus::build_test_pairs(d.split.test));
    if (spec.weight_classes) d.weights = corpus::class_weights(d.split.train).values();
    per_seed.push_back(std::move(d));
  }

  ExperimentResult result;
  for (const auto& m : spec.models) {
    for (auto strategy : spec.strategies) {
      for (std::size_t s : spec.samples_per_record) {
        for (std::uint64_t seed : spec.seeds) {
          CellResult cell;
          cell.model = m;
          cell.strategy = strategy;
          cell.samples_per_record = s;
          cell.seed = seed;
          result.cells.push_back(cell);
        }
      }
    }
  }

  auto run_cell = [&](std::size_t index) {
    CellResult& cell = result.cells[index];
    const SeedData& d = per_seed[index % spec.seeds.size()];
    corpus::SamplingConfig sc;
    sc.strategy = cell.strategy;
    sc.samples = cell.samples_per_record;
    sc.seed = Rng::derive(cell.seed, 2).next_u64();
    const auto samples =
        train::samples_from_pairs(d.split.train, corpus::sample_training_pairs(d.split.train, sc));

    models::ModelConfig mc = spec.architecture;
    mc.kind = cell.model.kind;
    mc.cnn_branch = cell.model.cnn_branch;
    auto model = models::make_classifier<float>(mc, Rng::derive(cell.seed, 3).next_u64());
    train::TrainConfig tc = spec.training;
    tc.seed = Rng::derive(cell.seed, 4).next_u64();
    tc.class_weights = d.weights;
    if (mc.kind != models::ModelKind::kCrossModal) tc.pretrain_steps = 0;

    cell.train_samples = samples.size();
    cell.epoch_loss = train::train(*model, d.split.train, samples, features, tc).epoch_loss;
    cell.matrix = train::evaluate(*model, d.split.test, d.test, features, tc.batch);
    cell.accuracy = train::accuracy(cell.matrix);
  };

  const std::size_t n = result.cells.size();
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  const std::size_t k = spec.seeds.size();
  for (std::size_t g = 0; g < n; g += k) {
    const CellResult& first = result.cells[g];
    train::ReportRow row;
    row.model = first.model.name();
    row.strategy = std::string(corpus::strategy_token(first.strategy));
    row.samples = first.train_samples;
    train::TitledMatrix tm;
    tm.title = row.model + " / " + row.strategy + " / S=" + std::to_string(first.samples_per_record);
    double sum = 0.0;
    for (std::size_t i = g; i < g + k; ++i) {
      sum += result.cells[i].accuracy;
      tm.matrix += result.cells[i].matrix;
    }
    row.accuracy = sum / static_cast<double>(k);
    result.rows.push_back(row);
    result.matrices.push_back(tm);
  }
  return result;
}

void write_reports(const std::filesystem::path& dir, const train::ReportHeader& header,
                   const ExperimentResult& result) {
  std::filesystem::create_directories(dir / "loss");
  write_text(dir / "report.txt", train::format_report(header, result.rows, result.matrices));
  write_text(dir / "report.csv", train::format_csv(result.rows));

  std::string cells = "model,strategy,samples_per_record,seed,train_samples,accuracy\n";
  char buf[64];
  for (const auto& c : result.cells) {
    std::snprintf(buf, sizeof buf, "%.6f", c.accuracy);
    const std::string strategy(corpus::strategy_token(c.strategy));
    cells += c.model.name() + ',' + strategy + ',' + std::to_string(c.samples_per_record) + ',' +
             std::to_string(c.seed) + ',' + std::to_string(c.train_samples) + ',' + buf + '\n';
    write_text(dir / "loss" /
                   (c.model.name() + '_' + strategy + "_S" + std::to_string(c.samples_per_record) +
                    "_seed" + std::to_string(c.seed) + ".csv"),
               train::format_loss_trace(c.epoch_loss));
  }
  write_text(dir / "cells.csv", cells);
}

}  // namespace pqc::experiment
