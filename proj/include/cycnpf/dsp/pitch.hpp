#pragma once

#include <vector>

#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::dsp {

struct F0Config {
  double f_min = 70.0;
  double f_max = 400.0;
  int hop_size = 120;
  double window_s = 0.035;          // analysis window for the autocorrelation
  double voicing_threshold = 0.35;  // on the peak normalized autocorrelation
};

struct F0Result {
  std::vector<double> log_f0;  // natural log Hz, interpolated through unvoiced runs
  std::vector<double> uv;      // exactly 0.0 or 1.0
  bool all_unvoiced = false;   // warning: no voiced frame found; log_f0 = log(f_min)
};

// Normalized-autocorrelation pitch tracker. Frame centers follow the STFT
// convention (t * hop on the reflect-padded signal), so frame counts line up
// with the other analyzers. Voiced frames get parabolic lag refinement;
// unvoiced frames are filled by linear interpolation in the log domain with
// edge frames held.
F0Result extract_f0(const Waveform& wave, const F0Config& cfg);

}  // namespace cycnpf::dsp
