#include "pqc/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pqc/audio.hpp"
#include "pqc/experiment.hpp"
#include "pqc/image.hpp"
#include "pqc/runtime.hpp"
#include "pqc/tensor_io.hpp"

namespace pqc::cli {
namespace {

namespace fs = std::filesystem;
using experiment::KeyValues;

// Flag values as given on the command line; empty when absent.
struct Flags {
  std::string config, corpus, records, seed, model, strategy, samples, epochs, batch, lr,
      smoothing, out;
  bool synthetic = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config file first, then flags on top.
KeyValues effective(const Flags& f) {
  KeyValues kv;
  if (!f.config.empty()) kv = experiment::load_key_values(f.config);
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv[key] = v;
  };
  put("corpus", f.corpus);
  put("synthetic.records", f.records);
  put("seed", f.seed);
  put("model", f.model);
  put("strategy", f.strategy);
  put("samples-per-record", f.samples);
  put("epochs", f.epochs);
  put("batch", f.batch);
  put("lr", f.lr);
  put("smoothing", f.smoothing);
  put("out", f.out);
  if (f.synthetic) kv["synthetic"] = "true";
  return kv;
}

bool wants_synthetic(const KeyValues& kv) {
  const std::string v = experiment::get_string(kv, "synthetic", "false");
  if (v != "true" && v != "false") throw InvalidConfig("synthetic: expected true or false");
  return v == "true";
}

corpus::Corpus resolve_corpus(const KeyValues& kv) {
  const bool synthetic = wants_synthetic(kv);
  if (kv.count("corpus") && synthetic) throw UsageError("give either --corpus or --synthetic");
  if (kv.count("corpus")) return corpus::load_corpus(kv.at("corpus"));
  if (synthetic) return corpus::generate_synthetic(experiment::synthetic_config_from(kv, {}));
  throw UsageError("no corpus: pass --corpus <manifest> or --synthetic");
}

fs::path require_out(const KeyValues& kv) {
  if (!kv.count("out")) throw UsageError("--out is required");
  return kv.at("out");
}

std::uint64_t seed_of(const KeyValues& kv) { return experiment::get_size(kv, "seed", 0); }

corpus::Split split_of(const corpus::Corpus& c, const KeyValues& kv) {
  return corpus::stratified_split(c, experiment::get_double(kv, "train_fraction", 0.8),
                                  Rng::derive(seed_of(kv), 1).next_u64());
}

corpus::SamplingConfig sampling_of(const KeyValues& kv) {
  corpus::SamplingConfig sc;
  sc.strategy = corpus::parse_strategy(experiment::get_string(kv, "strategy", "random"));
  sc.samples = experiment::get_size(kv, "samples-per-record", 8);
  sc.seed = Rng::derive(seed_of(kv), 2).next_u64();
  return sc;
}

models::ModelConfig architecture_of(const KeyValues& kv) {
  models::ModelConfig base;
  base.encoder = experiment::desk_encoder();
  return experiment::model_config_from(kv, base);
}

train::TrainConfig training_of(const KeyValues& kv) {
  train::TrainConfig t;
  t.epochs = experiment::get_size(kv, "epochs", t.epochs);
  t.batch = experiment::get_size(kv, "batch", t.batch);
  t.lr = experiment::get_double(kv, "lr", t.lr);
  t.smoothing = experiment::get_double(kv, "smoothing", t.smoothing);
  const std::string schedule = experiment::get_string(kv, "lr_schedule", "constant");
  if (schedule != "constant" && schedule != "cosine") {
    throw InvalidConfig("lr_schedule must be constant or cosine, got " + schedule);
  }
  t.cosine_decay = schedule == "cosine";
  t.pretrain_steps = experiment::get_size(kv, "pretrain_steps", 0);
  t.head_only = experiment::get_string(kv, "head_only", "false") == "true";
  t.validate();
  return t;
}

train::ReportHeader header_of(const KeyValues& kv, const KeyValues& extra = {}) {
  KeyValues all = kv;
  for (const auto& [k, v] : extra) all.emplace(k, v);
  all.erase("out");  // where the report lands does not change what it says
  return {all.begin(), all.end()};
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw MissingFile("cannot write " + path.string());
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const KeyValues& kv, std::ostream& out) {
  corpus::SyntheticConfig sc = experiment::synthetic_config_from(kv, {});
  if (kv.count("seed")) sc.seed = seed_of(kv);
  const auto c = corpus::generate_synthetic(sc);
  const fs::path manifest = corpus::materialize(c, require_out(kv));
  out << "wrote " << c.records.size() << " records, " << c.audio_count() << " soundtracks, "
      << c.photo_count() << " photos\nmanifest " << manifest.string() << '\n';
  return kExitOk;
}

int cmd_preprocess(const KeyValues& kv, std::ostream& out) {
  const auto c = resolve_corpus(kv);
  const fs::path dir = require_out(kv);
  fs::create_directories(dir);
  std::ostringstream index;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    fs::create_directories(dir / r.id);
    for (std::size_t j = 0; j < r.audio.size(); ++j) {
      char name[32];
      std::snprintf(name, sizeof name, "a%02zu.pqct", j);
      save_tensor(dir / r.id / name,
                  audio::preprocess_audio(corpus::media_bytes(c, i, corpus::Modality::kAudio, j)));
      index << r.id << " audio " << j << ' ' << r.id << '/' << name << '\n';
    }
    for (std::size_t k = 0; k < r.photos.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "p%02zu.pqct", k);
      save_tensor(dir / r.id / name,
                  image::preprocess_image(corpus::media_bytes(c, i, corpus::Modality::kVisual, k),
                                          corpus::crop_for(c, r.photos[k])));
      index << r.id << " photo " << k << ' ' << r.id << '/' << name << '\n';
    }
  }
  write_file(dir / "features.txt", index.str());
  out << "preprocessed " << c.audio_count() << " soundtracks and " << c.photo_count()
      << " photos into " << dir.string() << '\n';
  return kExitOk;
}

int cmd_split(const KeyValues& kv, std::ostream& out) {
  const auto c = resolve_corpus(kv);
  const auto s = split_of(c, kv);
  std::string text;
  for (const auto& r : s.train.records) text += "train " + r.id + '\n';
  for (const auto& r : s.test.records) text += "test " + r.id + '\n';
  write_file(require_out(kv) / "split.txt", text);
  const auto tr = s.train.class_counts();
  const auto te = s.test.class_counts();
  out << "class  train  test\n";
  for (std::size_t k = 0; k < corpus::kClasses; ++k) {
    char line[64];
    std::snprintf(line, sizeof line, "%-5s  %5zu  %4zu\n",
                  std::string(corpus::label_token(corpus::Label(k))).c_str(), tr[k], te[k]);
    out << line;
  }
  return kExitOk;
}

int cmd_sample(const KeyValues& kv, std::ostream& out) {
  const auto c = resolve_corpus(kv);
  const auto s = split_of(c, kv);
  const auto sets = corpus::sample_training_pairs(s.train, sampling_of(kv));
  std::string text = "record,audio,photo\n";
  std::size_t total = 0;
  for (const auto& set : sets) {
    for (const auto& p : set.pairs) {
      text += set.record_id + ',' + std::to_string(p.audio) + ',' + std::to_string(p.photo) + '\n';
      ++total;
    }
  }
  write_file(require_out(kv) / "pairs.csv", text);
  out << "sampled " << total << " pairs over " << sets.size() << " training records\n";
  return kExitOk;
}

int cmd_train(const KeyValues& kv, std::ostream& out) {
  const fs::path dir = require_out(kv);
  const auto c = resolve_corpus(kv);
  const auto spec = experiment::parse_model_spec(experiment::get_string(kv, "model", "crossmodal"));
  models::ModelConfig mc = architecture_of(kv);
  mc.kind = spec.kind;
  mc.cnn_branch = spec.cnn_branch;
  train::TrainConfig tc = training_of(kv);

  const auto s = split_of(c, kv);
  const auto samples = train::samples_from_pairs(
      s.train, corpus::sample_training_pairs(s.train, sampling_of(kv)));
  tc.class_weights = corpus::class_weights(s.train).values();
  tc.seed = Rng::derive(seed_of(kv), 4).next_u64();
  auto model = models::make_classifier<float>(mc, Rng::derive(seed_of(kv), 3).next_u64());
  train::FeatureStore features(c);
  const auto result = train::train(*model, s.train, samples, features, tc);

  fs::create_directories(dir);
  experiment::save_checkpoint(dir / "model.ckpt", *model);
  write_file(dir / "loss.csv", train::format_loss_trace(result.epoch_loss));
  out << "trained " << spec.name() << " on " << samples.size() << " pairs; final loss "
      << result.epoch_loss.back() << "\ncheckpoint " << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_eval(const KeyValues& kv, std::ostream& out) {
  if (!kv.count("model")) throw UsageError("--model <checkpoint> is required");
  const auto model = experiment::load_checkpoint(kv.at("model"));
  const auto c = resolve_corpus(kv);
  const auto s = split_of(c, kv);
  const auto test = train::samples_from_pairs(s.test, corpus::build_test_pairs(s.test));
  train::FeatureStore features(c);
  const auto m = train::evaluate(*model, s.test, test, features);
  const experiment::ModelSpec spec{model->config().kind, model->config().cnn_branch};
  train::ReportRow row{spec.name(), "", "-", test.size(), train::accuracy(m)};
  const std::string report =
      train::format_report(header_of(kv), {row}, {{spec.name() + " / test pairs", m}});
  if (kv.count("out")) write_file(fs::path(kv.at("out")) / "report.txt", report);
  out << report;
  return kExitOk;
}

std::vector<std::uint64_t> seeds_of(const KeyValues& kv) {
  std::vector<std::uint64_t> seeds;
  KeyValues one;
  for (const auto& s : experiment::get_list(kv, "seed", {"0"})) {
    one["seed"] = s;
    seeds.push_back(experiment::get_size(one, "seed", 0));
  }
  return seeds;
}

int cmd_experiment(const KeyValues& kv, std::ostream& out) {
  const fs::path dir = require_out(kv);
  const auto c = resolve_corpus(kv);
  experiment::ExperimentSpec spec;
  for (const auto& m : experiment::get_list(kv, "model", {"crossmodal"})) {
    spec.models.push_back(experiment::parse_model_spec(m));
  }
  for (const auto& s : experiment::get_list(kv, "strategy", {"random", "audio-major", "visual-major"})) {
    spec.strategies.push_back(corpus::parse_strategy(s));
  }
  KeyValues one;
  for (const auto& s : experiment::get_list(kv, "samples-per-record", {"4", "8", "16", "32"})) {
    one["S"] = s;
    spec.samples_per_record.push_back(experiment::get_size(one, "S", 0));
  }
  spec.seeds = seeds_of(kv);
  spec.architecture = architecture_of(kv);
  spec.training = training_of(kv);
  spec.train_fraction = experiment::get_double(kv, "train_fraction", 0.8);

  train::FeatureStore features(c);
  const auto result = experiment::run_experiment(spec, c, features, worker_threads());

  KeyValues extra = experiment::model_config_keys(spec.architecture);
  extra.erase("model.kind");
  extra.erase("model.branch");
  if (c.synthetic) {
    for (const auto& [k, v] : experiment::synthetic_config_keys(*c.synthetic)) extra.emplace(k, v);
  }
  extra.emplace("train_fraction", std::to_string(spec.train_fraction));
  const auto header = header_of(kv, extra);
  experiment::write_reports(dir, header, result);
  out << train::format_report(header, result.rows, {});
  return kExitOk;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key = value file; flags override it");
  sub->add_option("--corpus", f.corpus, "corpus manifest");
  sub->add_flag("--synthetic", f.synthetic, "use the synthetic generator as the corpus");
  sub->add_option("--records", f.records, "synthetic corpus size");
  sub->add_option("--out", f.out, "output directory");
}

void add_training(CLI::App* sub, Flags& f, bool lists) {
  const char* suffix = lists ? " (comma-separated list)" : "";
  sub->add_option("--model", f.model,
                  std::string("cnn|cnn-visual|ensemble|crossmodal|crossmodal-audio|crossmodal-visual") +
                      suffix);
  sub->add_option("--strategy", f.strategy, std::string("random|audio-major|visual-major") + suffix);
  sub->add_option("--samples-per-record", f.samples, std::string("pairs per training record (S)") + suffix);
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--batch", f.batch, "mini-batch size");
  sub->add_option("--lr", f.lr, "learning rate");
  sub->add_option("--smoothing", f.smoothing, "label smoothing in [0, 1)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pineapple shelf-life classification from tapping sounds and photos", "pqc"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus and its manifest");
  add_common(synth, f);
  synth->add_option("--seed", f.seed, "generator seed");

  auto* pre = app.add_subcommand("preprocess", "write Mel and image features as tensor files");
  add_common(pre, f);

  auto* split = app.add_subcommand("split", "stratified 4:1 train/test split");
  add_common(split, f);
  split->add_option("--seed", f.seed, "split seed");

  auto* sample = app.add_subcommand("sample", "sample training pairs on the training split");
  add_common(sample, f);
  sample->add_option("--seed", f.seed, "split and sampling seed");
  sample->add_option("--strategy", f.strategy, "random|audio-major|visual-major");
  sample->add_option("--samples-per-record", f.samples, "pairs per training record (S)");

  auto* tr = app.add_subcommand("train", "train one model and write a checkpoint");
  add_common(tr, f);
  add_training(tr, f, false);
  tr->add_option("--seed", f.seed, "run seed");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test pairs");
  add_common(ev, f);
  ev->add_option("--model", f.model, "checkpoint written by train");
  ev->add_option("--seed", f.seed, "split seed used in training");

  auto* ex = app.add_subcommand("experiment", "run the model x strategy x S x seed grid");
  add_common(ex, f);
  add_training(ex, f, true);
  ex->add_option("--seed", f.seed, "seeds (comma-separated list)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    const KeyValues kv = effective(f);
    if (synth->parsed()) return cmd_synth(kv, out);
    if (pre->parsed()) return cmd_preprocess(kv, out);
    if (split->parsed()) return cmd_split(kv, out);
    if (sample->parsed()) return cmd_sample(kv, out);
    if (tr->parsed()) return cmd_train(kv, out);
    if (ev->parsed()) return cmd_eval(kv, out);
    return cmd_experiment(kv, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidConfig& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace pqc::cli
