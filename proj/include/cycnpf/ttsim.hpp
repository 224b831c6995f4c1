#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cycnpf/dsp/features.hpp"
#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::ttsim {

enum class DurationMode { kOracle, kPredicted };

// Controls how "synthetic" features are derived from natural ones: spectral
// oversmoothing (kernel + variance shrink + noise) and temporal jitter of
// pseudo-phoneme segments. Oracle duration keeps the total frame count;
// predicted duration also rescales segment lengths.
struct DegradationProfile {
  std::string name = "default";
  int smooth_kernel_len = 15;  // odd, frames
  double gv_scale = 0.30;      // (0, 1]
  double noise_floor = 0.12;   // mcep-domain noise std
  int jitter_max = 6;         // frames
  int jitter_segment_len = 40;
  DurationMode duration_mode = DurationMode::kOracle;
  std::uint64_t seed = 7;

  void validate() const;
};

// Moving average over time, per-dimension variance shrink toward the mean by
// gv_scale (GV scales by gv_scale^2), then seeded Gaussian perturbation.
// Operates on the full [T x 46] mcep matrix.
std::vector<double> oversmooth(const std::vector<double>& mcep, int num_frames, int dims,
                               int smooth_kernel_len, double gv_scale, double noise_floor,
                               std::uint64_t seed);

// Pseudo-phoneme boundaries: nominal every jitter_segment_len frames, snapped
// to the c0 energy valley within +-25% of the segment length.
std::vector<int> segment_boundaries(const dsp::FeatureSequence& f, int segment_len);

// Segment-wise temporal jitter. Oracle mode keeps the total frame count and
// shifts interior boundaries by uniform(-jitter_max, +jitter_max) with linear
// time-rescaling inside each segment; predicted mode additionally rescales
// each segment length by a seeded factor in [0.8, 1.25]. U/V is resampled
// nearest-neighbour, everything else linearly.
dsp::FeatureSequence time_jitter(const dsp::FeatureSequence& f, int jitter_segment_len,
                                 int jitter_max, DurationMode mode, std::uint64_t seed);

// Full feature-domain degradation: oversmooth the mcep, then jitter.
dsp::FeatureSequence degrade(const dsp::FeatureSequence& natural,
                             const DegradationProfile& profile);

// Cepstral-emphasis post-filter: c'_d = (1 + beta) * c_d for d >= 2, c1
// untouched, c0 compensated so the mean log envelope of the frame is
// preserved exactly.
std::vector<double> conventional_postfilter(const std::vector<double>& mcep, int num_frames,
                                            int dims, double beta, double alpha, int fft_size);

// Pseudo-speaker variant for vocoder pretraining: pitch shift by resampling
// followed by an overlap-add time restretch, then an STFT-domain envelope
// frequency warp for the formant scale. Identity settings return the input.
dsp::Waveform make_speaker_variant(const dsp::Waveform& wave, double pitch_shift_semitones,
                                   double formant_scale);

}  // namespace cycnpf::ttsim
