#pragma once

#include <vector>

#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::dsp {

// Per-band spectral flatness (geometric mean / arithmetic mean of the power
// spectrum), one value in [0, 1] per band: 0-3 kHz, 3-8 kHz, 8-12 kHz.
// Flat (noisy) frames approach 1, strongly harmonic frames approach 0.
// Frames with no energy return 1.0 in every band by convention.
// Output is row-major [num_frames x 3]; framing matches stft_magnitude.
std::vector<double> band_aperiodicity(const Waveform& wave, int hop_size, int* num_frames_out);

inline constexpr int kNumAperiodicityBands = 3;

}  // namespace cycnpf::dsp
