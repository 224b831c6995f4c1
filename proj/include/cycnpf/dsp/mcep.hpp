#pragma once

#include <vector>

#include "cycnpf/dsp/stft.hpp"

namespace cycnpf::dsp {

// First-order all-pass frequency warp on [0, pi]. alpha > 0 stretches the low
// end (mel-like). The inverse warp is the same map with -alpha.
double warp_frequency(double omega, double alpha);

// Warped-cepstrum analysis:
//   magnitude floor 1e-10 -> log -> cubic resample onto the grid whose
//   uniform warped frequencies map back through the inverse warp -> DCT-I
//   -> truncate to (order+1) coefficients c0..c_order.
// Reconstruction (mcep_to_envelope) evaluates
//   log env(omega) = c0 + 2 * sum_m c_m cos(m * warp(omega))
// on the linear bin grid and exponentiates.
//
// Output is row-major [num_frames x (order+1)].
std::vector<double> mcep_analyze(const Spectrogram& spec, int order, double alpha);

Spectrogram mcep_to_envelope(const std::vector<double>& mcep, int num_frames, int num_coefs,
                             double alpha, int fft_size);

inline constexpr double kMagnitudeFloor = 1e-10;

}  // namespace cycnpf::dsp
