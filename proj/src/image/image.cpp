#include "pqc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace pqc::image {
namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::size_t header_number(ByteView b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw MalformedImage("bad PPM header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::size_t>(b[pos++] - '0');
    if (v > (1u << 24)) throw MalformedImage("PPM header value too large");
  }
  return v;
}

}  // namespace

ImageBuffer read_image(ByteView b, const DecodeHook& hook) {
  if (b.size() >= 2 && b[0] == 'P' && b[1] >= '1' && b[1] <= '7') {
    switch (b[1]) {
      case '6':
        break;
      case '3':
        throw UnsupportedFormat("ASCII PPM (P3)");
      default:
        throw UnsupportedChannels(std::string("P") + static_cast<char>(b[1]) +
                                  " is not 3-channel colour");
    }
    std::size_t pos = 2;
    const std::size_t width = header_number(b, pos);
    const std::size_t height = header_number(b, pos);
    const std::size_t maxval = header_number(b, pos);
    if (width == 0 || height == 0) throw MalformedImage("zero image extent");
    if (maxval == 0) throw MalformedImage("zero maxval");
    if (maxval > 255) throw UnsupportedFormat("16-bit PPM");
    if (pos >= b.size() || !std::isspace(b[pos])) throw MalformedImage("bad PPM header");
    ++pos;
    const std::size_t n = width * height * 3;
    if (b.size() - pos < n) throw MalformedImage("truncated PPM payload");
    ImageBuffer img{height, width, std::vector<float>(n)};
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = std::min(1.0f, static_cast<float>(b[pos + i]) * scale);
    }
    return img;
  }
  if (!hook) throw MalformedImage("not a PPM file and no decoder hook given");
  ImageBuffer img = hook(b);
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width * 3) {
    throw UnsupportedChannels("decoder hook must return 3-channel pixels");
  }
  for (float v : img.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw MalformedImage("decoded pixel outside [0, 1]");
  }
  return img;
}

Bytes encode_ppm(const ImageBuffer& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + img.pixels.size());
  for (float v : img.pixels) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return out;
}

ImageBuffer crop_region(const ImageBuffer& img, const Rect& r) {
  if (r.height == 0 || r.width == 0 || r.top + r.height > img.height ||
      r.left + r.width > img.width) {
    throw OutOfBounds("rect (" + std::to_string(r.top) + "," + std::to_string(r.left) + "," +
                      std::to_string(r.height) + "," + std::to_string(r.width) +
                      ") outside " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " image");
  }
  ImageBuffer out{r.height, r.width, std::vector<float>(r.height * r.width * 3)};
  for (std::size_t y = 0; y < r.height; ++y) {
    const float* src = img.pixels.data() + ((r.top + y) * img.width + r.left) * 3;
    std::copy(src, src + r.width * 3, out.pixels.data() + y * r.width * 3);
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == 0 || img.width == 0 || out_h == 0 || out_w == 0) {
    throw MalformedImage("resize of an empty image");
  }
  struct Tap {
    std::size_t i0, i1;
    float w1;
  };
  // Half-pixel centres: source coordinate (d + 0.5) * in / out - 0.5.
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[d] = {i0, i1, static_cast<float>(s - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h);
  const auto tx = taps(img.width, out_w);
  ImageBuffer out{out_h, out_w, std::vector<float>(out_h * out_w * 3)};
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& [y0, y1, wy] = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& [x0, x1, wx] = tx[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = img.at(y0, x0, c) + wx * (img.at(y0, x1, c) - img.at(y0, x0, c));
        const float bot = img.at(y1, x0, c) + wx * (img.at(y1, x1, c) - img.at(y1, x0, c));
        out.pixels[(y * out_w + x) * 3 + c] = top + wy * (bot - top);
      }
    }
  }
  return out;
}

VisualFeature standardize(const ImageBuffer& img) {
  VisualFeature out({img.height, img.width, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out[i] = (img.pixels[i] - kMean) / kStd;
  return out;
}

VisualFeature preprocess_image(ByteView bytes, const std::optional<Rect>& rect,
                               const DecodeHook& hook) {
  const ImageBuffer img = read_image(bytes, hook);
  const ImageBuffer cropped =
      rect ? crop_region(img, *rect) : crop_region(img, Rect{0, 0, img.height, img.width});
  return standardize(resize_bilinear(cropped));
}

}  // namespace pqc::image
