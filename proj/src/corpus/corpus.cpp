#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "pqc/corpus.hpp"

namespace pqc::corpus {
namespace {

constexpr std::string_view kLabelTokens[kClasses] = {"H", "SH", "SS", "S"};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t parse_count(std::string_view s, std::size_t line_no) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw MalformedManifest("line " + std::to_string(line_no) + ": expected a number, got '" +
                            std::string(s) + "'");
  }
  return v;
}

int parse_location(std::string_view s, std::size_t line_no) {
  if (s == "1") return 1;
  if (s == "2") return 2;
  throw MalformedManifest("line " + std::to_string(line_no) + ": location must be 1 or 2");
}

Surface parse_surface(std::string_view s, std::size_t line_no) {
  if (s == "side") return Surface::kSide;
  if (s == "bottom") return Surface::kBottom;
  throw MalformedManifest("line " + std::to_string(line_no) + ": unknown surface '" +
                          std::string(s) + "'");
}

}  // namespace

std::string_view label_token(Label l) { return kLabelTokens[ordinal(l)]; }

Label parse_label(std::string_view t) {
  for (std::size_t c = 0; c < kClasses; ++c) {
    if (t == kLabelTokens[c]) return static_cast<Label>(c);
  }
  throw UnknownLabel("'" + std::string(t) + "'");
}

std::string_view token(Surface s) { return s == Surface::kSide ? "side" : "bottom"; }
std::string_view token(MicType m) {
  switch (m) {
    case MicType::kUnidirectional:
      return "unidirectional";
    case MicType::kOmnidirectional:
      return "omnidirectional";
    default:
      return "none";
  }
}
std::string_view token(PhotoContent p) {
  switch (p) {
    case PhotoContent::kSide:
      return "side";
    case PhotoContent::kBottom:
      return "bottom";
    default:
      return "none";
  }
}

std::size_t Corpus::audio_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.audio.size();
  return n;
}

std::size_t Corpus::photo_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.photos.size();
  return n;
}

std::array<std::size_t, kClasses> Corpus::class_counts() const {
  std::array<std::size_t, kClasses> n{};
  for (const auto& r : records) ++n[ordinal(r.label)];
  return n;
}

Corpus parse_manifest(std::string_view text, const std::filesystem::path& root,
                      const FileProbe& probe) {
  Corpus c;
  c.origin = Origin::kManifest;
  c.root = root;
  std::optional<std::pair<std::size_t, std::size_t>> layout;
  std::set<std::string> ids;
  std::set<std::string> media_in_record;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto f = split_ws(line);
    if (f.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    if (f[0] == "layout") {
      if (f.size() != 3) throw MalformedManifest(where + "layout <J> <K>");
      layout = {parse_count(f[1], line_no), parse_count(f[2], line_no)};
      if (layout->first == 0 || layout->second == 0) {
        throw MalformedManifest(where + "layout counts must be positive");
      }
    } else if (f[0] == "crop") {
      if (f.size() != 6) throw MalformedManifest(where + "crop <location> <top> <left> <h> <w>");
      const image::Rect r{parse_count(f[2], line_no), parse_count(f[3], line_no),
                          parse_count(f[4], line_no), parse_count(f[5], line_no)};
      if (r.height == 0 || r.width == 0) throw MalformedManifest(where + "empty crop");
      c.crops[parse_location(f[1], line_no)] = r;
    } else if (f[0] == "record") {
      if (f.size() != 3) throw MalformedManifest(where + "record <id> <label>");
      std::string id(f[1]);
      if (!ids.insert(id).second) throw DuplicateId("record '" + id + "'");
      c.records.push_back({id, parse_label(f[2]), {}, {}});
      media_in_record.clear();
    } else if (f[0] == "audio" || f[0] == "photo") {
      if (c.records.empty()) throw MalformedManifest(where + "media line before any record");
      if (f.size() != 5) {
        throw MalformedManifest(where + std::string(f[0]) +
                                " <surface> <location> <type> <path>");
      }
      MediaMeta m;
      m.surface = parse_surface(f[1], line_no);
      m.location = parse_location(f[2], line_no);
      m.path = std::string(f[4]);
      if (f[0] == "audio") {
        m.modality = Modality::kAudio;
        if (f[3] == "unidirectional") {
          m.mic = MicType::kUnidirectional;
        } else if (f[3] == "omnidirectional") {
          m.mic = MicType::kOmnidirectional;
        } else {
          throw MalformedManifest(where + "unknown microphone type '" + std::string(f[3]) + "'");
        }
      } else {
        m.modality = Modality::kVisual;
        if (f[3] == "side") {
          m.content = PhotoContent::kSide;
        } else if (f[3] == "bottom") {
          m.content = PhotoContent::kBottom;
        } else {
          throw MalformedManifest(where + "unknown photo content '" + std::string(f[3]) + "'");
        }
      }
      if (!media_in_record.insert(m.path).second) {
        throw DuplicateId("media '" + m.path + "' repeated in record " + c.records.back().id);
      }
      if (probe && !probe(root / m.path)) throw MissingFile((root / m.path).string());
      auto& r = c.records.back();
      (m.modality == Modality::kAudio ? r.audio : r.photos).push_back(std::move(m));
    } else {
      throw MalformedManifest(where + "unknown directive '" + std::string(f[0]) + "'");
    }
  }

  for (const auto& r : c.records) {
    if (r.audio.empty() || r.photos.empty()) {
      throw MalformedManifest("record " + r.id + " needs at least one soundtrack and one photo");
    }
    if (layout && (r.audio.size() != layout->first || r.photos.size() != layout->second)) {
      throw MalformedManifest("record " + r.id + " has " + std::to_string(r.audio.size()) +
                              " soundtracks / " + std::to_string(r.photos.size()) +
                              " photos; layout declares " + std::to_string(layout->first) +
                              " / " + std::to_string(layout->second));
    }
  }
  return c;
}

Corpus load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw MissingFile(manifest_path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str(), manifest_path.parent_path(),
                        [](const std::filesystem::path& p) {
                          return std::filesystem::is_regular_file(p);
                        });
}

std::string format_manifest(const Corpus& c) {
  std::ostringstream os;
  os << "# pineapple corpus manifest\n";
  if (!c.records.empty()) {
    const std::size_t j = c.records.front().audio.size();
    const std::size_t k = c.records.front().photos.size();
    const bool uniform = std::all_of(c.records.begin(), c.records.end(), [&](const auto& r) {
      return r.audio.size() == j && r.photos.size() == k;
    });
    if (uniform) os << "layout " << j << ' ' << k << '\n';
  }
  for (const auto& [loc, r] : c.crops) {
    os << "crop " << loc << ' ' << r.top << ' ' << r.left << ' ' << r.height << ' ' << r.width
       << '\n';
  }
  for (const auto& r : c.records) {
    os << "record " << r.id << ' ' << label_token(r.label) << '\n';
    for (const auto& m : r.audio) {
      os << "audio " << token(m.surface) << ' ' << m.location << ' ' << token(m.mic) << ' '
         << m.path << '\n';
    }
    for (const auto& m : r.photos) {
      os << "photo " << token(m.surface) << ' ' << m.location << ' ' << token(m.content) << ' '
         << m.path << '\n';
    }
  }
  return os.str();
}

Bytes media_bytes(const Corpus& c, std::size_t record, Modality m, std::size_t index) {
  const auto& r = c.records.at(record);
  const auto& list = m == Modality::kAudio ? r.audio : r.photos;
  if (index >= list.size()) throw OutOfBounds("media index past end of record " + r.id);
  if (c.synthetic) {
    return m == Modality::kAudio ? render_audio(*c.synthetic, r, index)
                                 : render_photo(*c.synthetic, r, index);
  }
  return read_bytes(c.root / list[index].path);
}

std::optional<image::Rect> crop_for(const Corpus& c, const MediaMeta& photo) {
  if (auto it = c.crops.find(photo.location); it != c.crops.end()) return it->second;
  return std::nullopt;
}

}  // namespace pqc::corpus
