#include <fstream>
#include <set>
#include <sstream>

#include "pqc/experiment.hpp"
#include "pqc/tensor_io.hpp"

namespace pqc::experiment {
namespace {

constexpr const char* kMagic = "pqc-checkpoint 1";

std::filesystem::path index_path(const std::filesystem::path& path) {
  return path.string() + ".index";
}

struct IndexEntry {
  std::string name;
  std::size_t offset = 0;
  Shape shape;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const models::Classifier<float>& model) {
  std::ofstream data(path, std::ios::binary);
  if (!data) throw MissingFile("cannot write " + path.string());
  std::ostringstream index;
  index << kMagic << '\n';
  for (const auto& [k, v] : model_config_keys(model.config())) index << "config " << k << ' ' << v << '\n';
  std::size_t offset = 0;
  for (const auto& [name, var] : model.parameters()) {
    write_tensor(data, var.value());
    index << "param " << name << ' ' << offset;
    for (std::size_t e : var.shape()) index << ' ' << e;
    index << '\n';
    offset += encoded_size(var.shape());
  }
  if (!data) throw MissingFile("short write to " + path.string());
  std::ofstream idx(index_path(path));
  idx << index.str();
  if (!idx) throw MissingFile("cannot write " + index_path(path).string());
}

std::unique_ptr<models::Classifier<float>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream idx(index_path(path));
  if (!idx) throw MissingFile("checkpoint index " + index_path(path).string() + " not found");
  std::ifstream data(path, std::ios::binary);
  if (!data) throw MissingFile("checkpoint " + path.string() + " not found");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(data)), {});

  std::string line;
  if (!std::getline(idx, line) || line != kMagic) {
    throw MalformedCheckpoint("index does not start with '" + std::string(kMagic) + "'");
  }
  KeyValues cfg;
  std::vector<IndexEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(idx, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    const std::string where = "index line " + std::to_string(line_no);
    if (tag == "config") {
      std::string key, value;
      if (!(ls >> key >> value)) throw MalformedCheckpoint(where + ": config needs a key and value");
      cfg[key] = value;
    } else if (tag == "param") {
      IndexEntry e;
      if (!(ls >> e.name >> e.offset)) throw MalformedCheckpoint(where + ": bad param entry");
      std::size_t extent = 0;
      while (ls >> extent) e.shape.push_back(extent);
      if (!ls.eof()) throw MalformedCheckpoint(where + ": bad extent");
      entries.push_back(std::move(e));
    } else {
      throw MalformedCheckpoint(where + ": unknown entry '" + tag + "'");
    }
  }

  models::ModelConfig mc;
  try {
    mc = model_config_from(cfg, mc);
  } catch (const InvalidConfig& e) {
    throw MalformedCheckpoint(std::string("configuration: ") + e.what());
  }
  auto model = models::make_classifier<float>(mc, 0);
  auto params = model->parameters();
  if (entries.size() != params.size()) {
    throw MalformedCheckpoint("index lists " + std::to_string(entries.size()) +
                              " tensors, the model has " + std::to_string(params.size()));
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const IndexEntry& e = entries[i];
    auto& [name, var] = params[i];
    if (e.name != name) throw MalformedCheckpoint("expected tensor " + name + ", found " + e.name);
    if (e.shape != var.shape()) {
      throw MalformedCheckpoint(name + " has shape " + shape_string(e.shape) + ", model wants " +
                                shape_string(var.shape()));
    }
    const std::size_t size = encoded_size(e.shape);
    if (e.offset > bytes.size() || bytes.size() - e.offset < size) {
      throw MalformedCheckpoint(name + " lies outside the tensor file");
    }
    Tensor<float> t;
    try {
      t = decode_tensor(std::vector<char>(bytes.begin() + e.offset, bytes.begin() + e.offset + size));
    } catch (const MalformedTensorFile& err) {
      throw MalformedCheckpoint(name + ": " + err.what());
    }
    if (t.shape() != e.shape) throw MalformedCheckpoint(name + ": stored shape differs from index");
    var.mutable_value() = std::move(t);
  }
  return model;
}

}  // namespace pqc::experiment
