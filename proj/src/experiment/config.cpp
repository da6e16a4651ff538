#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pqc/experiment.hpp"

namespace pqc::experiment {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidConfig(key + ": expected a number, got '" + v + "'");
}

// Field tables keep the reader and the writer in step.
template <typename Cfg>
struct Fields {
  std::vector<std::pair<const char*, std::size_t Cfg::*>> sizes;
  std::vector<std::pair<const char*, double Cfg::*>> doubles;
};

const Fields<models::CnnConfig>& cnn_fields() {
  using C = models::CnnConfig;
  static const Fields<C> f{{{"height", &C::height},
                            {"width", &C::width},
                            {"channels", &C::channels},
                            {"pool", &C::pool},
                            {"embed", &C::embed}},
                           {{"input_center", &C::input_center}, {"input_spread", &C::input_spread}}};
  return f;
}

const Fields<models::EncoderConfig>& encoder_fields() {
  using E = models::EncoderConfig;
  static const Fields<E> f{{{"audio_height", &E::audio_height},
                            {"audio_width", &E::audio_width},
                            {"image_height", &E::image_height},
                            {"image_width", &E::image_width},
                            {"image_channels", &E::image_channels},
                            {"patch", &E::patch},
                            {"width", &E::width},
                            {"heads", &E::heads},
                            {"mlp_hidden", &E::mlp_hidden},
                            {"modality_layers", &E::modality_layers},
                            {"joint_layers", &E::joint_layers},
                            {"head_hidden", &E::head_hidden}},
                           {{"audio_center", &E::audio_center}, {"audio_spread", &E::audio_spread}}};
  return f;
}

const Fields<corpus::SyntheticConfig>& synthetic_fields() {
  using S = corpus::SyntheticConfig;
  static const Fields<S> f{{{"records", &S::records},
                            {"audio_per_record", &S::audio_per_record},
                            {"photos_per_record", &S::photos_per_record},
                            {"photo_height", &S::photo_height},
                            {"photo_width", &S::photo_width}},
                           {{"audio_separability", &S::audio_separability},
                            {"visual_separability", &S::visual_separability},
                            {"noise", &S::noise},
                            {"audio_seconds", &S::audio_seconds}}};
  return f;
}

template <typename Cfg>
void read_fields(const KeyValues& kv, const std::string& prefix, const Fields<Cfg>& f, Cfg& cfg) {
  for (const auto& [name, member] : f.sizes) {
    cfg.*member = get_size(kv, prefix + name, cfg.*member);
  }
  for (const auto& [name, member] : f.doubles) {
    cfg.*member = get_double(kv, prefix + name, cfg.*member);
  }
}

template <typename Cfg>
void write_fields(KeyValues& kv, const std::string& prefix, const Fields<Cfg>& f, const Cfg& cfg) {
  for (const auto& [name, member] : f.sizes) kv[prefix + name] = std::to_string(cfg.*member);
  for (const auto& [name, member] : f.doubles) kv[prefix + name] = format_double(cfg.*member);
}

template <std::size_t N>
std::array<std::size_t, N> read_triple(const KeyValues& kv, const std::string& key,
                                       std::array<std::size_t, N> fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const auto parts = get_list(kv, key, {});
  if (parts.size() != N) throw InvalidConfig(key + ": expected " + std::to_string(N) + " values");
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_size(key, parts[i]);
  return out;
}

template <std::size_t N>
std::string join(const std::array<std::size_t, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

void read_cnn(const KeyValues& kv, const std::string& prefix, models::CnnConfig& c) {
  read_fields(kv, prefix, cnn_fields(), c);
  c.widths = read_triple(kv, prefix + "widths", c.widths);
  c.kernels = read_triple(kv, prefix + "kernels", c.kernels);
}

void write_cnn(KeyValues& kv, const std::string& prefix, const models::CnnConfig& c) {
  write_fields(kv, prefix, cnn_fields(), c);
  kv[prefix + "widths"] = join(c.widths);
  kv[prefix + "kernels"] = join(c.kernels);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidConfig(key + ": expected true or false, got '" + v + "'");
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw InvalidConfig("config line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, trim(std::string_view(t).substr(eq + 1))).second) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": repeated key " + key);
    }
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_size(key, it->second);
}

double get_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_double(key, it->second);
}

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::vector<std::string> get_list(const KeyValues& kv, const std::string& key,
                                  const std::vector<std::string>& fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw InvalidConfig(key + ": empty list element");
    out.push_back(item);
  }
  if (out.empty()) throw InvalidConfig(key + ": empty list");
  return out;
}

models::EncoderConfig desk_encoder() {
  models::EncoderConfig e;
  e.width = 16;
  e.heads = 1;
  e.mlp_hidden = 32;
  e.modality_layers = 1;
  e.joint_layers = 1;
  e.head_hidden = 32;
  return e;
}

models::ModelConfig model_config_from(const KeyValues& kv, models::ModelConfig base) {
  if (kv.count("model.kind")) base.kind = models::parse_model(kv.at("model.kind"));
  if (kv.count("model.branch")) {
    const std::string b = kv.at("model.branch");
    if (b == "audio") {
      base.cnn_branch = models::Branch::kAudio;
    } else if (b == "visual") {
      base.cnn_branch = models::Branch::kVisual;
    } else {
      throw InvalidConfig("model.branch: expected audio or visual, got '" + b + "'");
    }
  }
  base.head_hidden = get_size(kv, "model.head_hidden", base.head_hidden);
  read_cnn(kv, "cnn.audio.", base.audio_cnn);
  read_cnn(kv, "cnn.visual.", base.visual_cnn);
  read_fields(kv, "encoder.", encoder_fields(), base.encoder);
  if (kv.count("encoder.position_embeddings")) {
    base.encoder.position_embeddings =
        parse_bool("encoder.position_embeddings", kv.at("encoder.position_embeddings"));
  }
  base.audio_cnn.validate();
  base.visual_cnn.validate();
  base.encoder.validate();
  return base;
}

KeyValues model_config_keys(const models::ModelConfig& cfg) {
  KeyValues kv;
  kv["model.kind"] = std::string(models::model_token(cfg.kind));
  kv["model.branch"] = std::string(models::branch_token(cfg.cnn_branch));
  kv["model.head_hidden"] = std::to_string(cfg.head_hidden);
  write_cnn(kv, "cnn.audio.", cfg.audio_cnn);
  write_cnn(kv, "cnn.visual.", cfg.visual_cnn);
  write_fields(kv, "encoder.", encoder_fields(), cfg.encoder);
  kv["encoder.position_embeddings"] = cfg.encoder.position_embeddings ? "true" : "false";
  return kv;
}

corpus::SyntheticConfig synthetic_config_from(const KeyValues& kv, corpus::SyntheticConfig base) {
  read_fields(kv, "synthetic.", synthetic_fields(), base);
  base.seed = get_size(kv, "synthetic.seed", base.seed);
  for (std::size_t c = 0; c < corpus::kClasses; ++c) {
    const std::string key =
        "synthetic.proportion." + std::string(corpus::label_token(corpus::Label(c)));
    base.proportions[c] = get_double(kv, key, base.proportions[c]);
  }
  base.validate();
  return base;
}

KeyValues synthetic_config_keys(const corpus::SyntheticConfig& cfg) {
  KeyValues kv;
  write_fields(kv, "synthetic.", synthetic_fields(), cfg);
  kv["synthetic.seed"] = std::to_string(cfg.seed);
  for (std::size_t c = 0; c < corpus::kClasses; ++c) {
    kv["synthetic.proportion." + std::string(corpus::label_token(corpus::Label(c)))] =
        format_double(cfg.proportions[c]);
  }
  return kv;
}

}  // namespace pqc::experiment
