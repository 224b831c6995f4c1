#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "cycnpf/dsp/wave.hpp"
#include "cycnpf/util.hpp"

namespace testsup {

inline constexpr double kPi = 3.14159265358979323846;

inline cycnpf::dsp::Waveform sine(double freq, double seconds, int sr = 24000, double amp = 0.5) {
  cycnpf::dsp::Waveform w;
  w.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  w.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w.samples[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * kPi * freq * i / sr);
  return w;
}

inline cycnpf::dsp::Waveform sawtooth(double freq, double seconds, int sr = 24000, double amp = 0.5) {
  cycnpf::dsp::Waveform w;
  w.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  w.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double phase = freq * i / sr;
    w.samples[static_cast<std::size_t>(i)] = amp * 2.0 * (phase - std::floor(phase + 0.5));
  }
  return w;
}

inline cycnpf::dsp::Waveform white_noise(double seconds, std::uint64_t seed, int sr = 24000,
                                         double amp = 0.3) {
  cycnpf::Rng rng(seed);
  cycnpf::dsp::Waveform w;
  w.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  w.samples.resize(static_cast<std::size_t>(n));
  for (auto& s : w.samples) s = amp * std::tanh(rng.normal());
  return w;
}

// Naive O(n^2) DFT magnitude of one already-windowed frame, bins 0..n/2.
inline std::vector<double> direct_dft_mag(const std::vector<double>& frame, int fft_size) {
  std::vector<double> mags(static_cast<std::size_t>(fft_size / 2 + 1));
  for (int k = 0; k <= fft_size / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int n = 0; n < static_cast<int>(frame.size()); ++n) {
      const double ang = -2.0 * kPi * k * n / fft_size;
      re += frame[static_cast<std::size_t>(n)] * std::cos(ang);
      im += frame[static_cast<std::size_t>(n)] * std::sin(ang);
    }
    mags[static_cast<std::size_t>(k)] = std::hypot(re, im);
  }
  return mags;
}

// Fresh scratch directory under the build tree.
inline std::string temp_dir(const std::string& tag) {
  const std::string dir = "cycnpf_test_" + tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsup
