#pragma once

// PQCT: "PQCT", u16 version (1), u16 rank, rank x u32 extents, then the
// payload as little-endian f32 in row-major order.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pqc/tensor.hpp"

namespace pqc {

inline constexpr std::uint16_t kPqctVersion = 1;

void write_tensor(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& is);

std::vector<char> encode_tensor(const Tensor<float>& t);
Tensor<float> decode_tensor(const std::vector<char>& bytes);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

// Size in bytes of the encoded form of a tensor with this shape.
std::size_t encoded_size(const Shape& shape);

}  // namespace pqc
