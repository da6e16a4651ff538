#pragma once

// Photo preprocessing: binary PPM decode, fixed-rectangle crop, bilinear
// resize to 224 x 224 and standardisation to [-1, 1].

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "pqc/bytes.hpp"
#include "pqc/tensor.hpp"

namespace pqc::image {

inline constexpr std::size_t kSize = 224;
inline constexpr float kMean = 0.5f;
inline constexpr float kStd = 0.5f;

// H x W x 3, interleaved, values in [0, 1].
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
};

// 224 x 224 x 3 after standardisation.
using VisualFeature = Tensor<float>;

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  bool operator==(const Rect&) const = default;
};

// Decoder for containers other than PPM (JPEG, PNG, ...). Must return
// 3-channel pixels in [0, 1].
using DecodeHook = std::function<ImageBuffer(ByteView)>;

// Native P6 (maxval <= 255). Other P-formats are rejected; anything else goes
// to `hook` when one is supplied.
ImageBuffer read_image(ByteView bytes, const DecodeHook& hook = {});
Bytes encode_ppm(const ImageBuffer& img);

ImageBuffer crop_region(const ImageBuffer& img, const Rect& rect);
ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_h = kSize,
                            std::size_t out_w = kSize);
VisualFeature standardize(const ImageBuffer& img);

// read -> crop (full frame when rect is empty) -> resize -> standardize.
VisualFeature preprocess_image(ByteView bytes, const std::optional<Rect>& rect = std::nullopt,
                               const DecodeHook& hook = {});

}  // namespace pqc::image
