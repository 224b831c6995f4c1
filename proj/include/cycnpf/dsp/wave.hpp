#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cycnpf::dsp {

// Mono waveform, samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 24000;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Clamp every sample into [-1, 1] in place.
void clip_waveform(Waveform& w);

// PCM16 mono little-endian WAV. Multi-channel or non-PCM16 files are rejected.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Windowed-sinc resampler. Kernel: sinc lowpass at 0.95 * min(in, out) Nyquist,
// Hann-windowed, 32 taps per side, evaluated at the exact rational phase of
// each output sample. Identity rates return the input unchanged.
Waveform resample(const Waveform& w, int target_rate);

}  // namespace cycnpf::dsp
