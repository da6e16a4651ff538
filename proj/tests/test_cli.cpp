#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pqc/cli.hpp"
#include "pqc/corpus.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run pqc_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = pqc::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pqc_cli_" + name);
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

// Small architecture so the CLI runs stay quick on real features.
fs::path tiny_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "tiny.conf";
  std::ofstream(p) << "encoder.patch = 32\nencoder.width = 8\nencoder.heads = 1\n"
                      "encoder.mlp_hidden = 8\nencoder.head_hidden = 8\n"
                   << extra;
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 1, help with 0") {
  CHECK(pqc_run({}).code == 1);
  CHECK(pqc_run({"frobnicate"}).code == 1);
  CHECK(pqc_run({"train", "--no-such-flag"}).code == 1);

  const auto help = pqc_run({"train", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--samples-per-record") != std::string::npos);
  CHECK(help.out.find("--smoothing") != std::string::npos);

  const fs::path d = scratch("usage");
  CHECK(pqc_run({"split", "--out", d.string()}).code == 1);  // no corpus
  CHECK(pqc_run({"sample", "--synthetic", "--records", "8", "--strategy", "sideways", "--out",
                 d.string()})
            .code == 1);
  CHECK(pqc_run({"train", "--synthetic", "--epochs", "many", "--out", d.string()}).code == 1);
  CHECK(pqc_run({"split", "--synthetic", "--corpus", "m.txt", "--out", d.string()}).code == 1);
  std::ofstream(d / "sched.conf") << "lr_schedule = step\n";
  CHECK(pqc_run({"train", "--config", (d / "sched.conf").string(), "--synthetic", "--records", "8",
                 "--out", d.string()})
            .code == 1);
}

TEST_CASE("data errors exit with 2") {
  const auto r = pqc_run({"eval", "--model", "missing.ckpt"});
  CHECK(r.code == 2);
  CHECK(r.err.find("MissingFile") != std::string::npos);

  const fs::path d = scratch("data");
  CHECK(pqc_run({"split", "--corpus", (d / "none.txt").string(), "--out", d.string()}).code == 2);
  std::ofstream(d / "bad.txt") << "record P1 H\naudio side 3 omnidirectional a.wav\n";
  CHECK(pqc_run({"split", "--corpus", (d / "bad.txt").string(), "--out", d.string()}).code == 2);
}

TEST_CASE("synth materializes a loadable corpus") {
  const fs::path d = scratch("synth");
  const auto r = pqc_run({"synth", "--records", "40", "--seed", "7", "--out", (d / "c").string()});
  REQUIRE(r.code == 0);
  const auto c = pqc::corpus::load_corpus(d / "c" / "manifest.txt");
  CHECK(c.records.size() == 40);
  CHECK(c.audio_count() == 800);
  CHECK(c.photo_count() == 640);
  CHECK(fs::exists(d / "c" / "P0040" / "p15.ppm"));
}

TEST_CASE("split and sample are reproducible") {
  const fs::path d = scratch("split");
  for (const char* out : {"a", "b"}) {
    REQUIRE(pqc_run({"split", "--synthetic", "--records", "30", "--seed", "4", "--out",
                     (d / out).string()})
                .code == 0);
    REQUIRE(pqc_run({"sample", "--synthetic", "--records", "30", "--seed", "4", "--strategy",
                     "audio-major", "--samples-per-record", "8", "--out", (d / out).string()})
                .code == 0);
  }
  CHECK(slurp(d / "a" / "split.txt") == slurp(d / "b" / "split.txt"));
  CHECK(slurp(d / "a" / "pairs.csv") == slurp(d / "b" / "pairs.csv"));

  const std::string split = slurp(d / "a" / "split.txt");
  CHECK(std::count(split.begin(), split.end(), '\n') == 30);
  const std::string pairs = slurp(d / "a" / "pairs.csv");
  CHECK(std::count(pairs.begin(), pairs.end(), '\n') == 1 + 24 * 8);
}

TEST_CASE("preprocess writes one tensor per media file") {
  const fs::path d = scratch("pre");
  REQUIRE(pqc_run({"preprocess", "--synthetic", "--records", "1", "--out", d.string()}).code == 0);
  CHECK(fs::exists(d / "P0001" / "a19.pqct"));
  CHECK(fs::exists(d / "P0001" / "p15.pqct"));
  const std::string index = slurp(d / "features.txt");
  CHECK(std::count(index.begin(), index.end(), '\n') == 36);
}

TEST_CASE("train writes a checkpoint that eval reads") {
  const fs::path d = scratch("train");
  const std::string conf = tiny_config(d).string();
  const auto t = pqc_run({"train", "--config", conf, "--synthetic", "--records", "10", "--model",
                          "crossmodal", "--strategy", "audio-major", "--samples-per-record", "2",
                          "--epochs", "2", "--seed", "3", "--out", (d / "run").string()});
  REQUIRE(t.code == 0);
  CHECK(fs::exists(d / "run" / "model.ckpt"));
  CHECK(fs::exists(d / "run" / "model.ckpt.index"));
  CHECK(slurp(d / "run" / "loss.csv").rfind("epoch,loss\n1,", 0) == 0);

  const auto e = pqc_run({"eval", "--model", (d / "run" / "model.ckpt").string(), "--synthetic",
                          "--records", "10", "--seed", "3", "--out", (d / "ev").string()});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("crossmodal  -         32       ") != std::string::npos);
  CHECK(e.out.find("confusion matrix (row-normalized): crossmodal / test pairs") != std::string::npos);
  CHECK(slurp(d / "ev" / "report.txt") == e.out);
}

TEST_CASE("experiment reports echo the effective configuration and reproduce exactly") {
  const fs::path d = scratch("exp");
  const std::string conf = tiny_config(d, "epochs = 1\nstrategy = random\nbatch = 8\n").string();
  auto args = [&](const std::string& out) {
    return std::vector<std::string>{"experiment", "--config", conf, "--synthetic", "--records",
                                    "10", "--model", "crossmodal-visual,cnn-audio", "--strategy",
                                    "audio-major,random", "--samples-per-record", "1",
                                    "--seed", "1,2", "--out", (d / out).string()};
  };
  const auto a = pqc_run(args("a"));
  REQUIRE(a.code == 0);
  REQUIRE(pqc_run(args("b")).code == 0);
  const std::string report = slurp(d / "a" / "report.txt");
  CHECK(report == slurp(d / "b" / "report.txt"));
  CHECK(slurp(d / "a" / "cells.csv") == slurp(d / "b" / "cells.csv"));

  // Flags override the file; file-only values are echoed too.
  CHECK(report.find("# strategy = audio-major,random\n") != std::string::npos);
  CHECK(report.find("# epochs = 1\n") != std::string::npos);
  CHECK(report.find("# encoder.width = 8\n") != std::string::npos);
  CHECK(report.find("# synthetic.records = 10\n") != std::string::npos);
  CHECK(report.find("crossmodal-visual  audio-major  8        ") != std::string::npos);
  CHECK(report.find("cnn-audio          random       8        ") != std::string::npos);
  const std::string cells = slurp(d / "a" / "cells.csv");
  CHECK(std::count(cells.begin(), cells.end(), '\n') == 1 + 2 * 2 * 2);
}

TEST_CASE("experiment rejects S beyond the pair count") {
  const fs::path d = scratch("infeasible");
  const auto r = pqc_run({"experiment", "--synthetic", "--records", "10", "--samples-per-record",
                          "400", "--out", d.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("InfeasibleSampling") != std::string::npos);
}
