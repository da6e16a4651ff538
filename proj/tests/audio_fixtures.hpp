#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "pqc/audio.hpp"

namespace pqc::testing {

// 3 s at 48 kHz of silence with one full-scale sample at `at`.
inline Bytes impulse_wav(std::size_t at = 48000, std::size_t len = 144000) {
  std::vector<std::int16_t> pcm(len, 0);
  pcm[at] = 32767;
  return audio::encode_wav(pcm, audio::kIngestRate, 1);
}

inline audio::WaveBuffer tone(double hz, std::size_t len, int rate, double amp = 0.5) {
  audio::WaveBuffer w{std::vector<double>(len), rate};
  for (std::size_t n = 0; n < len; ++n) {
    w.samples[n] = amp * std::sin(2.0 * std::numbers::pi * hz * n / rate);
  }
  return w;
}

}  // namespace pqc::testing
