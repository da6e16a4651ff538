#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "pqc/audio.hpp"

namespace pqc::audio {
namespace {

constexpr std::size_t kBins = kFftSize / 2 + 1;

// FFTW planning is not thread-safe; execution on caller-owned buffers is.
struct RealFft {
  fftw_plan plan = nullptr;
  RealFft() {
    double* in = fftw_alloc_real(kFftSize);
    fftw_complex* out = fftw_alloc_complex(kBins);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~RealFft() { fftw_destroy_plan(plan); }
};

const RealFft& fft() {
  static std::mutex mu;
  std::lock_guard lock(mu);
  static const RealFft f;
  return f;
}

const std::vector<double>& hann() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFftSize);
    for (std::size_t n = 0; n < kFftSize; ++n) {
      v[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFftSize);
    }
    return v;
  }();
  return w;
}

// Centre-aligns the signal in exactly kMelInputLength samples: surplus is
// dropped evenly from both ends, shortfall is zero-filled evenly.
std::vector<double> fit_length(const std::vector<double>& x) {
  std::vector<double> out(kMelInputLength, 0.0);
  if (x.size() >= kMelInputLength) {
    const std::size_t skip = (x.size() - kMelInputLength) / 2;
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(skip), kMelInputLength, out.begin());
  } else {
    const std::size_t lead = (kMelInputLength - x.size()) / 2;
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(lead));
  }
  return out;
}

// Non-zero bin range of each triangle; the rest of a row is exactly zero.
const std::vector<std::pair<std::size_t, std::size_t>>& filter_support() {
  static const auto support = [] {
    const auto& fb = mel_filterbank();
    std::vector<std::pair<std::size_t, std::size_t>> out(kMelBins, {0, 0});
    for (std::size_t m = 0; m < kMelBins; ++m) {
      const double* wm = fb.weights.data() + m * kBins;
      std::size_t lo = kBins, hi = 0;
      for (std::size_t k = 0; k < kBins; ++k) {
        if (wm[k] != 0.0) {
          lo = std::min(lo, k);
          hi = k + 1;
        }
      }
      if (lo < hi) out[m] = {lo, hi};
    }
    return out;
  }();
  return support;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb = [] {
    MelFilterbank out;
    const double top = hz_to_mel(kTargetRate / 2.0);
    out.edges_hz.resize(kMelBins + 2);
    for (std::size_t i = 0; i < kMelBins + 2; ++i) {
      out.edges_hz[i] = mel_to_hz(top * static_cast<double>(i) / (kMelBins + 1));
    }
    out.weights.assign(kMelBins * kBins, 0.0);
    for (std::size_t m = 0; m < kMelBins; ++m) {
      const double lo = out.edges_hz[m], mid = out.edges_hz[m + 1], hi = out.edges_hz[m + 2];
      for (std::size_t k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * kTargetRate / kFftSize;
        double w = 0;
        if (f > lo && f <= mid) {
          w = (f - lo) / (mid - lo);
        } else if (f > mid && f < hi) {
          w = (hi - f) / (hi - mid);
        }
        out.weights[m * kBins + k] = w;
      }
    }
    return out;
  }();
  return fb;
}

AudioFeature mel_spectrogram(const WaveBuffer& w) {
  if (w.samples.empty()) throw DegenerateSignal("empty signal");
  const std::vector<double> x = fit_length(w.samples);
  const std::size_t half = kFftSize / 2;

  // Reflect padding (edge sample not repeated) so frame t is centred on t*hop.
  std::vector<double> padded(kMelInputLength + kFftSize);
  for (std::size_t i = 0; i < half; ++i) padded[i] = x[half - i];
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));
  for (std::size_t i = 0; i < half; ++i) {
    padded[half + kMelInputLength + i] = x[kMelInputLength - 2 - i];
  }

  const auto& win = hann();
  const auto& fb = mel_filterbank();
  const auto& support = filter_support();
  const RealFft& plan = fft();
  std::unique_ptr<double, FftwDeleter> frame(fftw_alloc_real(kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> spec(fftw_alloc_complex(kBins));
  std::vector<double> power(kBins);

  AudioFeature out({kFrames, kMelBins});
  for (std::size_t t = 0; t < kFrames; ++t) {
    const double* src = padded.data() + t * kHop;
    for (std::size_t n = 0; n < kFftSize; ++n) frame.get()[n] = src[n] * win[n];
    fftw_execute_dft_r2c(plan.plan, frame.get(), spec.get());
    for (std::size_t k = 0; k < kBins; ++k) {
      power[k] = spec.get()[k][0] * spec.get()[k][0] + spec.get()[k][1] * spec.get()[k][1];
    }
    for (std::size_t m = 0; m < kMelBins; ++m) {
      const double* wm = fb.weights.data() + m * kBins;
      double e = 0;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) e += wm[k] * power[k];
      out[t * kMelBins + m] = static_cast<float>(std::log(e + kEnergyFloor));
    }
  }
  return out;
}

AudioFeature preprocess_audio(ByteView bytes) {
  const WaveBuffer raw = read_wav(bytes);
  const WaveBuffer norm = normalize_amplitude(raw);
  const WaveBuffer seg = crop_segment(norm, detect_peak(norm));
  return mel_spectrogram(resample(seg));
}

}  // namespace pqc::audio
