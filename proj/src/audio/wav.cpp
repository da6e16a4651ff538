#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "pqc/audio.hpp"

namespace pqc::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16(ByteView b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
std::uint32_t u32(ByteView b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
bool tag(ByteView b, std::size_t at, const char* t) {
  return std::memcmp(b.data() + at, t, 4) == 0;
}

void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(Bytes& out, const char* t) { out.insert(out.end(), t, t + 4); }

}  // namespace

WaveBuffer read_wav(ByteView b) {
  if (b.size() < 12 || !tag(b, 0, "RIFF") || !tag(b, 8, "WAVE")) {
    throw MalformedWav("missing RIFF/WAVE header");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (tag(b, pos, "fmt ")) {
      if (size < 16 || body + size > b.size()) throw MalformedWav("short fmt chunk");
      std::uint16_t format = u16(b, body);
      channels = u16(b, body + 2);
      rate = u32(b, body + 4);
      const std::uint16_t block_align = u16(b, body + 12);
      bits = u16(b, body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw MalformedWav("short extensible fmt chunk");
        format = u16(b, body + 24);  // first two bytes of the subformat GUID
      }
      if (format != kFormatPcm) {
        throw UnsupportedFormat("codec " + std::to_string(format) + " is not PCM");
      }
      if (bits != 16) throw UnsupportedFormat(std::to_string(bits) + "-bit samples");
      if (channels != 1 && channels != 2) {
        throw UnsupportedFormat(std::to_string(channels) + " channels");
      }
      if (rate == 0) throw MalformedWav("zero sample rate");
      if (block_align != channels * 2) throw MalformedWav("inconsistent block align");
      have_fmt = true;
    } else if (tag(b, pos, "data")) {
      if (!have_fmt) throw MalformedWav("data chunk before fmt chunk");
      if (body + size > b.size()) throw MalformedWav("truncated data chunk");
      const std::size_t frame_bytes = 2u * channels;
      if (size % frame_bytes != 0) throw MalformedWav("partial sample frame");
      const std::size_t frames = size / frame_bytes;
      if (frames == 0) throw MalformedWav("no samples");
      WaveBuffer w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(u16(b, body + i * frame_bytes + 2 * c));
        }
        w.samples[i] = acc / (32768.0 * channels);
      }
      return w;
    }
    pos = body + size + (size & 1);  // chunks are word aligned
  }
  throw MalformedWav(have_fmt ? "no data chunk" : "no fmt chunk");
}

Bytes encode_wav(const std::vector<std::int16_t>& interleaved, int sample_rate,
                 int channels) {
  if (channels < 1 || channels > 2) throw UnsupportedFormat("channel count");
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  Bytes out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (std::int16_t s : interleaved) put16(out, static_cast<std::uint16_t>(s));
  return out;
}

Bytes encode_wav(const WaveBuffer& w) {
  std::vector<std::int16_t> pcm(w.samples.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    const double v = std::clamp(std::round(w.samples[i] * 32768.0), -32768.0, 32767.0);
    pcm[i] = static_cast<std::int16_t>(v);
  }
  return encode_wav(pcm, w.sample_rate, 1);
}

}  // namespace pqc::audio
