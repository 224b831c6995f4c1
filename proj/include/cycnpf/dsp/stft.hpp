#pragma once

#include <complex>
#include <vector>

#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::dsp {

// Magnitude spectrogram, frames x (fft_size/2 + 1) bins, row-major.
struct Spectrogram {
  std::vector<double> mags;
  int num_frames = 0;
  int num_bins = 0;
  int fft_size = 0;
  int hop_size = 0;
  int win_size = 0;

  double& at(int t, int b) { return mags[static_cast<std::size_t>(t) * num_bins + b]; }
  double at(int t, int b) const { return mags[static_cast<std::size_t>(t) * num_bins + b]; }
};

// In-place iterative radix-2 complex FFT. n must be a power of two.
// inverse=true computes the unnormalized inverse transform (no 1/n).
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Periodic Hann window of length n: w[i] = 0.5 * (1 - cos(2*pi*i/n)).
std::vector<double> hann_window(int n);

// Centered STFT. The signal is reflect-padded by win_size/2 on both sides, so
// num_frames = floor(len / hop) + 1 for even windows. Frames shorter than the
// reflect pad (len < win/2 + 1) cannot be centered and raise ShapeError.
Spectrogram stft_magnitude(const Waveform& wave, int fft_size, int hop_size, int win_size);

// Same framing applied to a raw sample buffer (shared with the differentiable
// STFT used by the vocoder losses, which must agree bit-for-bit on framing).
std::vector<double> reflect_pad(const std::vector<double>& x, int pad);

}  // namespace cycnpf::dsp
