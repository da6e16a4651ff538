#include "pqc/bytes.hpp"

#include <fstream>
#include <iterator>

#include "pqc/error.hpp"

namespace pqc {

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFile(path.string());
  return Bytes(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFile("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw MissingFile("write failed for " + path.string());
}

}  // namespace pqc
