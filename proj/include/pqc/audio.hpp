#pragma once

// Tapping-sound preprocessing: WAV decode, min-max normalisation, peak
// detection, a 0.4 s crop around the peak, rational resampling to 22.05 kHz
// and a 1024 x 128 log-Mel map.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pqc/bytes.hpp"
#include "pqc/tensor.hpp"

namespace pqc::audio {

inline constexpr int kIngestRate = 48000;
inline constexpr int kTargetRate = 22050;
inline constexpr double kPreSeconds = 0.1;
inline constexpr double kPostSeconds = 0.3;

inline constexpr std::size_t kFrames = 1024;
inline constexpr std::size_t kMelBins = 128;
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kHop = 8;
inline constexpr double kEnergyFloor = 1e-10;
// Signal length that yields exactly kFrames centred frames.
inline constexpr std::size_t kMelInputLength = (kFrames - 1) * kHop;

struct WaveBuffer {
  std::vector<double> samples;
  int sample_rate = kIngestRate;
};

// Rows are time frames, columns Mel bins.
using AudioFeature = Tensor<float>;

// RIFF/WAVE, 16-bit PCM, mono or stereo (averaged). Samples scaled by 1/32768.
WaveBuffer read_wav(ByteView bytes);
// Interleaved 16-bit PCM to a canonical 44-byte-header WAV file.
Bytes encode_wav(const std::vector<std::int16_t>& interleaved, int sample_rate,
                 int channels = 1);
// Mono samples in [-1, 1] quantised to 16 bits (clipped, rounded).
Bytes encode_wav(const WaveBuffer& w);

WaveBuffer normalize_amplitude(const WaveBuffer& w);
std::size_t detect_peak(const WaveBuffer& w);
WaveBuffer crop_segment(const WaveBuffer& w, std::size_t peak);
WaveBuffer resample(const WaveBuffer& w, int target_rate = kTargetRate);
AudioFeature mel_spectrogram(const WaveBuffer& w);

AudioFeature preprocess_audio(ByteView bytes);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
  // kMelBins + 2 edge frequencies; filter m spans [edges[m], edges[m + 2]]
  // and peaks at edges[m + 1].
  std::vector<double> edges_hz;
  // kMelBins x (kFftSize / 2 + 1), row-major.
  std::vector<double> weights;
};
const MelFilterbank& mel_filterbank();

}  // namespace pqc::audio
