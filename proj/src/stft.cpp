#include "cycnpf/dsp/stft.hpp"

#include <cmath>

#include "cycnpf/detail/fft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }
}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  detail::fft_radix2(a, inverse);
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  return w;
}

std::vector<double> reflect_pad(const std::vector<double>& x, int pad) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < pad + 1)
    throw ShapeError("signal too short for one centered frame: length " + std::to_string(n) +
                     ", pad " + std::to_string(pad));
  std::vector<double> y(static_cast<std::size_t>(n + 2 * pad));
  for (std::int64_t i = 0; i < n + 2 * pad; ++i) {
    std::int64_t src = i - pad;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(src)];
  }
  return y;
}

Spectrogram stft_magnitude(const Waveform& wave, int fft_size, int hop_size, int win_size) {
  if (!(fft_size >= win_size && win_size >= hop_size && hop_size >= 1))
    throw ShapeError("stft requires fft >= win >= hop >= 1");
  if (!is_pow2(fft_size)) throw ShapeError("fft_size must be a power of two");

  const int pad = win_size / 2;
  const std::vector<double> padded = reflect_pad(wave.samples, pad);
  const std::vector<double> win = hann_window(win_size);

  const std::int64_t padded_len = static_cast<std::int64_t>(padded.size());
  const int num_frames = static_cast<int>((padded_len - win_size) / hop_size) + 1;

  Spectrogram spec;
  spec.fft_size = fft_size;
  spec.hop_size = hop_size;
  spec.win_size = win_size;
  spec.num_bins = fft_size / 2 + 1;
  spec.num_frames = num_frames;
  spec.mags.assign(static_cast<std::size_t>(num_frames) * spec.num_bins, 0.0);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft_size));
  for (int t = 0; t < num_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop_size;
    for (int i = 0; i < win_size; ++i)
      buf[static_cast<std::size_t>(i)] = padded[start + i] * win[static_cast<std::size_t>(i)];
    for (int i = win_size; i < fft_size; ++i) buf[static_cast<std::size_t>(i)] = 0.0;
    fft_inplace(buf, false);
    for (int b = 0; b < spec.num_bins; ++b)
      spec.at(t, b) = std::abs(buf[static_cast<std::size_t>(b)]);
  }
  return spec;
}

}  // namespace cycnpf::dsp
