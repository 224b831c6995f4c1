#include "cycnpf/dsp/aperiodicity.hpp"

#include <cmath>

#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

namespace {
constexpr double kPowerFloor = 1e-20;
constexpr double kBandEdgesHz[kNumAperiodicityBands + 1] = {0.0, 3000.0, 8000.0, 12000.0};
}  // namespace

std::vector<double> band_aperiodicity(const Waveform& wave, int hop_size, int* num_frames_out) {
  // Rectangular-window power spectrum with no zero padding keeps
  // neighbouring bins close to independent, which the flatness statistic
  // assumes.
  constexpr int kFft = 512;
  constexpr int kWin = 512;
  if (static_cast<int>(wave.samples.size()) < kWin / 2 + 1)
    throw ShapeError("signal too short for one aperiodicity frame");

  const int pad = kWin / 2;
  const std::vector<double> padded = reflect_pad(wave.samples, pad);
  const int num_frames =
      static_cast<int>((static_cast<std::int64_t>(padded.size()) - kWin) / hop_size) + 1;

  const int bins = kFft / 2 + 1;
  std::vector<int> band_of(static_cast<std::size_t>(bins));
  const double nyquist = wave.sample_rate / 2.0;
  for (int b = 0; b < bins; ++b) {
    const double hz = nyquist * b / (bins - 1);
    int band = kNumAperiodicityBands - 1;
    for (int k = 0; k < kNumAperiodicityBands; ++k)
      if (hz >= kBandEdgesHz[k] && hz < kBandEdgesHz[k + 1]) band = k;
    band_of[static_cast<std::size_t>(b)] = band;
  }

  std::vector<double> coded(static_cast<std::size_t>(num_frames) * kNumAperiodicityBands, 1.0);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(kFft));
  for (int t = 0; t < num_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop_size;
    double frame_energy = 0.0;
    for (int i = 0; i < kWin; ++i) {
      buf[static_cast<std::size_t>(i)] = padded[start + i];
      frame_energy += padded[start + i] * padded[start + i];
    }
    for (int i = kWin; i < kFft; ++i) buf[static_cast<std::size_t>(i)] = 0.0;
    if (frame_energy < 1e-12) continue;  // keep the all-aperiodic fallback 1.0

    fft_inplace(buf, false);
    double log_sum[kNumAperiodicityBands] = {0, 0, 0};
    double lin_sum[kNumAperiodicityBands] = {0, 0, 0};
    int count[kNumAperiodicityBands] = {0, 0, 0};
    for (int b = 0; b < bins; ++b) {
      const double power = std::max(std::norm(buf[static_cast<std::size_t>(b)]), kPowerFloor);
      const int band = band_of[static_cast<std::size_t>(b)];
      log_sum[band] += std::log(power);
      lin_sum[band] += power;
      ++count[band];
    }
    for (int k = 0; k < kNumAperiodicityBands; ++k) {
      if (count[k] == 0) continue;
      const double geo = std::exp(log_sum[k] / count[k]);
      const double arith = lin_sum[k] / count[k];
      coded[static_cast<std::size_t>(t) * kNumAperiodicityBands + k] =
          arith > 0.0 ? std::min(1.0, geo / arith) : 1.0;
    }
  }
  if (num_frames_out) *num_frames_out = num_frames;
  return coded;
}

}  // namespace cycnpf::dsp
