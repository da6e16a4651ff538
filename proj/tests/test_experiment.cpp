#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "model_fixtures.hpp"
#include "pqc/experiment.hpp"
#include "stub_features.hpp"

using namespace pqc;
using namespace pqc::experiment;
using pqc::testing::StubFeatures;
using pqc::testing::tiny_model;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pqc_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

corpus::Corpus synthetic(std::size_t records) {
  corpus::SyntheticConfig cfg;
  cfg.records = records;
  return corpus::generate_synthetic(cfg);
}

ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.models = {{models::ModelKind::kCrossModal, models::Branch::kAudio}};
  spec.strategies = {corpus::Strategy::kRandom, corpus::Strategy::kAudioMajor,
                     corpus::Strategy::kVisualMajor};
  spec.samples_per_record = {4, 8};
  spec.seeds = {1};
  spec.architecture = tiny_model(models::ModelKind::kCrossModal);
  spec.training.epochs = 1;
  spec.training.batch = 8;
  return spec;
}

}  // namespace

TEST_CASE("key=value configuration parses strictly") {
  const auto kv = parse_key_values("# comment\n epochs = 3 \n\nlr=0.01  # trailing\nmodel = a, b\n");
  CHECK(kv.size() == 3);
  CHECK(get_size(kv, "epochs", 0) == 3);
  CHECK(get_double(kv, "lr", 0) == 0.01);
  CHECK(get_list(kv, "model", {}) == std::vector<std::string>{"a", "b"});
  CHECK(get_size(kv, "batch", 16) == 16);
  CHECK(get_string(kv, "missing", "x") == "x");

  CHECK_THROWS_AS(parse_key_values("epochs 3\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_key_values(" = 2\n"), InvalidConfig);
  CHECK_THROWS_AS(get_size(parse_key_values("n = -1"), "n", 0), InvalidConfig);
  CHECK_THROWS_AS(get_size(parse_key_values("n = 3x"), "n", 0), InvalidConfig);
  CHECK_THROWS_AS(get_double(parse_key_values("x = fast"), "x", 0), InvalidConfig);
  CHECK_THROWS_AS(get_list(parse_key_values("l = a,,b"), "l", {}), InvalidConfig);
  CHECK_THROWS_AS(load_key_values("/nonexistent/pqc.conf"), MissingFile);
}

TEST_CASE("model and synthetic configurations round-trip through keys") {
  models::ModelConfig mc = tiny_model(models::ModelKind::kCnn, models::Branch::kVisual);
  mc.audio_cnn.input_center = -3.25;
  mc.encoder.position_embeddings = false;
  CHECK(model_config_from(model_config_keys(mc), {}) == mc);

  corpus::SyntheticConfig sc;
  sc.records = 12;
  sc.noise = 0.3;
  sc.proportions = {0.25, 0.25, 0.25, 0.25};
  CHECK(synthetic_config_from(synthetic_config_keys(sc), {}) == sc);

  auto kv = model_config_keys(mc);
  kv["cnn.audio.kernels"] = "3,4,3";
  CHECK_THROWS_AS(model_config_from(kv, {}), InvalidConfig);
  kv = model_config_keys(mc);
  kv["model.kind"] = "resnext";
  CHECK_THROWS_AS(model_config_from(kv, {}), InvalidConfig);
}

TEST_CASE("model spec tokens") {
  CHECK(parse_model_spec("cnn").name() == "cnn-audio");
  CHECK(parse_model_spec("cnn-visual").name() == "cnn-visual");
  CHECK(parse_model_spec("crossmodal-audio").name() == "crossmodal-audio");
  CHECK_THROWS_AS(parse_model_spec("svm"), InvalidConfig);
}

TEST_CASE("checkpoints restore every parameter") {
  const fs::path dir = scratch("ckpt");
  using models::ModelKind;
  Rng rng(5);
  const auto input = testing::tiny_input<float>(3, rng);
  for (auto kind : {ModelKind::kCnn, ModelKind::kEnsemble, ModelKind::kCrossModal,
                    ModelKind::kCrossModalAudio, ModelKind::kCrossModalVisual}) {
    CAPTURE(models::model_token(kind));
    auto cfg = tiny_model(kind, models::Branch::kVisual);
    auto model = models::make_classifier<float>(cfg, 17);
    save_checkpoint(dir / "m.ckpt", *model);
    auto loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(loaded->config() == model->config());
    const auto a = model->parameters();
    const auto b = loaded->parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second.value().storage() == b[i].second.value().storage());
    }
    models::ModelInput<float> in;
    if (cfg.uses_audio()) in.audio = input.audio;
    if (cfg.uses_visual()) in.visual = input.visual;
    CHECK(model->logits(in).value().storage() == loaded->logits(in).value().storage());
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  const fs::path dir = scratch("bad_ckpt");
  auto model = models::make_classifier<float>(tiny_model(models::ModelKind::kEnsemble), 1);
  save_checkpoint(dir / "m.ckpt", *model);
  const std::string index = slurp(dir / "m.ckpt.index");
  const std::string data = slurp(dir / "m.ckpt");
  auto write = [&](const std::string& idx, const std::string& bytes) {
    std::ofstream(dir / "x.ckpt.index", std::ios::binary) << idx;
    std::ofstream(dir / "x.ckpt", std::ios::binary) << bytes;
  };

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), MissingFile);

  write("not a checkpoint\n" + index.substr(index.find('\n') + 1), data);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  write(index, data.substr(0, data.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  write(index.substr(0, index.rfind("param")), data);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  std::string renamed = index;
  renamed.replace(renamed.find("head.fc2.w"), 10, "head.fc9.w");
  write(renamed, data);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  std::string reshaped = index;
  const auto line = reshaped.find("param head.fc2.b");
  reshaped.replace(reshaped.find('\n', line) - 1, 1, "5");
  write(reshaped, data);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  std::string junk = data;
  junk[0] = 'X';
  write(index, junk);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);

  write(index + "bogus line\n", data);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), MalformedCheckpoint);
}

TEST_CASE("experiment grid: one row per model, strategy and S") {
  const auto c = synthetic(80);
  StubFeatures f;
  auto spec = tiny_spec();
  spec.seeds = {1, 2};
  const auto r = run_experiment(spec, c, f);
  CHECK(r.cells.size() == 12);
  CHECK(r.rows.size() == 6);
  CHECK(r.matrices.size() == 6);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    CHECK(row.model == "crossmodal");
    CHECK(row.samples == 64 * (i % 2 == 0 ? 4 : 8));
    CHECK(row.accuracy == doctest::Approx((r.cells[2 * i].accuracy + r.cells[2 * i + 1].accuracy) / 2));
    CHECK(r.matrices[i].matrix.total() == 2 * 16 * 16);
  }
  CHECK(r.rows[0].strategy == "random");
  CHECK(r.rows[2].strategy == "audio-major");
  CHECK(r.rows[5].strategy == "visual-major");
  CHECK(r.matrices[3].title == "crossmodal / audio-major / S=8");
}

TEST_CASE("experiment sample totals on a 400-record training split") {
  const auto c = synthetic(500);
  StubFeatures f;
  ExperimentSpec spec = tiny_spec();
  spec.models = {{models::ModelKind::kCnn, models::Branch::kAudio}};
  spec.strategies = {corpus::Strategy::kAudioMajor};
  spec.samples_per_record = {4, 8, 16, 32};
  spec.architecture = tiny_model(models::ModelKind::kCnn);
  spec.training.batch = 64;
  const auto r = run_experiment(spec, c, f);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].samples == 1600);
  CHECK(r.rows[1].samples == 3200);
  CHECK(r.rows[2].samples == 6400);
  CHECK(r.rows[3].samples == 12800);
  for (const auto& m : r.matrices) CHECK(m.matrix.total() == 1600);
}

TEST_CASE("experiment reports are byte-identical across reruns and worker counts") {
  const auto c = synthetic(40);
  auto spec = tiny_spec();
  spec.seeds = {3, 4};
  const train::ReportHeader header{{"corpus", "synthetic"}};
  StubFeatures f1, f2;
  const auto a = run_experiment(spec, c, f1, 1);
  const auto b = run_experiment(spec, c, f2, 3);
  const fs::path da = scratch("rep_a"), db = scratch("rep_b");
  write_reports(da, header, a);
  write_reports(db, header, b);
  for (const char* name : {"report.txt", "report.csv", "cells.csv",
                           "loss/crossmodal_visual-major_S8_seed4.csv"}) {
    CAPTURE(name);
    const std::string ta = slurp(da / name);
    CHECK(!ta.empty());
    CHECK(ta == slurp(db / name));
  }
}

TEST_CASE("experiment specs are validated") {
  const auto c = synthetic(20);
  StubFeatures f;
  auto spec = tiny_spec();
  spec.samples_per_record = {321};
  CHECK_THROWS_AS(run_experiment(spec, c, f), InfeasibleSampling);
  spec = tiny_spec();
  spec.models.clear();
  CHECK_THROWS_AS(run_experiment(spec, c, f), InvalidConfig);
  spec = tiny_spec();
  spec.seeds.clear();
  CHECK_THROWS_AS(run_experiment(spec, c, f), InvalidConfig);
  spec = tiny_spec();
  spec.samples_per_record = {0};
  CHECK_THROWS_AS(run_experiment(spec, c, f), InvalidConfig);
  spec = tiny_spec();
  spec.train_fraction = 1.0;
  CHECK_THROWS_AS(run_experiment(spec, c, f), InvalidConfig);
}

TEST_CASE("experiment splits keep train and test records apart") {
  const auto c = synthetic(40);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = corpus::stratified_split(c, 0.8, Rng::derive(seed, 1).next_u64());
    for (const auto& t : s.test.records) {
      for (const auto& r : s.train.records) CHECK(t.id != r.id);
    }
  }
}
