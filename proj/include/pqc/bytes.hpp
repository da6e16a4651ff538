#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pqc {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// MissingFile when the path cannot be opened.
Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, ByteView bytes);

}  // namespace pqc
