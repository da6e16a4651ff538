#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include "pqc/audio.hpp"

namespace pqc::audio {
namespace {

// 48000 -> 22050 is 147/320 in lowest terms.
constexpr std::size_t kUp = 147;
constexpr std::size_t kDown = 320;
// Taps each side of the interpolation point, in input samples.
constexpr std::ptrdiff_t kHalfTaps = 64;
constexpr double kKaiserBeta = 8.0;
constexpr double kRolloff = 0.95;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// One normalised filter per fractional phase r/kUp. Phase r holds the weights
// for input offsets -kHalfTaps+1 .. kHalfTaps relative to floor(t).
struct PolyphaseBank {
  std::vector<std::vector<double>> phases;
};

const PolyphaseBank& bank() {
  static const PolyphaseBank b = [] {
    PolyphaseBank out;
    const double cutoff = kRolloff * static_cast<double>(kUp) / kDown;
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    out.phases.resize(kUp);
    for (std::size_t r = 0; r < kUp; ++r) {
      const double frac = static_cast<double>(r) / kUp;
      auto& h = out.phases[r];
      h.resize(2 * kHalfTaps);
      double total = 0;
      for (std::ptrdiff_t i = -kHalfTaps + 1; i <= kHalfTaps; ++i) {
        const double d = static_cast<double>(i) - frac;
        const double u = d / kHalfTaps;
        const double win = std::abs(u) >= 1.0
                               ? 0.0
                               : std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) /
                                     i0_beta;
        const double v = cutoff * sinc(cutoff * d) * win;
        h[static_cast<std::size_t>(i + kHalfTaps - 1)] = v;
        total += v;
      }
      for (double& v : h) v /= total;
    }
    return out;
  }();
  return b;
}

}  // namespace

WaveBuffer normalize_amplitude(const WaveBuffer& w) {
  if (w.samples.empty()) throw DegenerateSignal("empty signal");
  const auto [lo_it, hi_it] = std::minmax_element(w.samples.begin(), w.samples.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DegenerateSignal("constant signal cannot be normalised");
  WaveBuffer out{std::vector<double>(w.samples.size()), w.sample_rate};
  const double span = hi - lo;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    out.samples[i] = (w.samples[i] - lo) / span;
  }
  // Pin the extremes so the output spans [0, 1] exactly.
  out.samples[static_cast<std::size_t>(lo_it - w.samples.begin())] = 0.0;
  out.samples[static_cast<std::size_t>(hi_it - w.samples.begin())] = 1.0;
  return out;
}

std::size_t detect_peak(const WaveBuffer& w) {
  if (w.samples.empty()) throw DegenerateSignal("empty signal");
  return static_cast<std::size_t>(
      std::max_element(w.samples.begin(), w.samples.end()) - w.samples.begin());
}

WaveBuffer crop_segment(const WaveBuffer& w, std::size_t peak) {
  if (peak >= w.samples.size()) throw OutOfBounds("peak index past end of signal");
  const auto pre = static_cast<std::ptrdiff_t>(std::lround(kPreSeconds * w.sample_rate));
  const auto post = static_cast<std::ptrdiff_t>(std::lround(kPostSeconds * w.sample_rate));
  const auto begin = static_cast<std::ptrdiff_t>(peak) - pre;
  const auto n = static_cast<std::ptrdiff_t>(w.samples.size());
  WaveBuffer out{std::vector<double>(static_cast<std::size_t>(pre + post), 0.0), w.sample_rate};
  for (std::ptrdiff_t i = 0; i < pre + post; ++i) {
    const std::ptrdiff_t src = begin + i;
    if (src >= 0 && src < n) out.samples[static_cast<std::size_t>(i)] = w.samples[static_cast<std::size_t>(src)];
  }
  return out;
}

WaveBuffer resample(const WaveBuffer& w, int target_rate) {
  if (w.sample_rate != kIngestRate) {
    throw UnsupportedFormat("resampler expects 48000 Hz input, got " +
                            std::to_string(w.sample_rate));
  }
  if (target_rate != kTargetRate) {
    throw UnsupportedFormat("resampler produces 22050 Hz only");
  }
  if (w.samples.empty()) throw DegenerateSignal("empty signal");
  const std::size_t in_len = w.samples.size();
  // round(len * 147 / 320) in integers
  const std::size_t out_len = (in_len * kUp + kDown / 2) / kDown;
  const auto& phases = bank().phases;
  const auto last = static_cast<std::ptrdiff_t>(in_len) - 1;
  const double* x = w.samples.data();

  WaveBuffer out{std::vector<double>(out_len), target_rate};
  for (std::size_t n = 0; n < out_len; ++n) {
    // Input position n * 320 / 147 = q + r / 147.
    const std::size_t num = n * kDown;
    const auto q = static_cast<std::ptrdiff_t>(num / kUp);
    const std::size_t r = num % kUp;
    const auto& h = phases[r];
    // Filtering the deviation from a reference sample keeps constants exact.
    const double ref = x[std::min(q, last)];
    double acc = 0;
    for (std::ptrdiff_t i = -kHalfTaps + 1; i <= kHalfTaps; ++i) {
      const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(q + i, 0, last);
      acc += h[static_cast<std::size_t>(i + kHalfTaps - 1)] * (x[src] - ref);
    }
    out.samples[n] = ref + acc;
  }
  return out;
}

}  // namespace pqc::audio
