#include "pqc/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace pqc {
namespace {

static_assert(std::endian::native == std::endian::little,
              "PQCT I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is, const char* what) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw MalformedTensorFile(std::string("truncated ") + what);
  }
  return v;
}

}  // namespace

std::size_t encoded_size(const Shape& shape) {
  return 8 + 4 * shape.size() + 4 * numel(shape);
}

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  if (t.rank() > 0xFFFF) throw MalformedTensorFile("rank too large");
  os.write("PQCT", 4);
  put<std::uint16_t>(os, kPqctVersion);
  put<std::uint16_t>(os, static_cast<std::uint16_t>(t.rank()));
  for (std::size_t e : t.shape()) {
    if (e > 0xFFFFFFFFu) throw MalformedTensorFile("extent too large");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  }
  os.write(reinterpret_cast<const char*>(t.raw()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!os) throw MalformedTensorFile("write failed");
}

Tensor<float> read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PQCT", 4) != 0) {
    throw MalformedTensorFile("bad magic");
  }
  const auto version = get<std::uint16_t>(is, "version");
  if (version != kPqctVersion) {
    throw MalformedTensorFile("unsupported version " + std::to_string(version));
  }
  const auto rank = get<std::uint16_t>(is, "rank");
  if (rank == 0) throw MalformedTensorFile("rank 0");
  Shape shape(rank);
  for (auto& e : shape) {
    e = get<std::uint32_t>(is, "extent");
    if (e == 0) throw MalformedTensorFile("zero extent");
  }
  std::vector<float> data(numel(shape));
  if (!is.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw MalformedTensorFile("truncated payload");
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

std::vector<char> encode_tensor(const Tensor<float>& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Tensor<float> decode_tensor(const std::vector<char>& bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  Tensor<float> t = read_tensor(is);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw MalformedTensorFile("trailing bytes after payload");
  }
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MalformedTensorFile("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MalformedTensorFile("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace pqc
