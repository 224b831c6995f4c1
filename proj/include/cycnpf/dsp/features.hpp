#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cycnpf/dsp/pitch.hpp"
#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::dsp {

inline constexpr int kMcepOrder = 45;      // shape coefficients c1..c45
inline constexpr int kMcepDim = kMcepOrder + 1;  // with c0
inline constexpr int kApDim = 3;
inline constexpr int kConditioningDim = kMcepOrder + 1 + 1 + kApDim;  // 50

struct AnalysisConfig {
  int sample_rate = 24000;
  int fft_size = 1024;
  int win_size = 600;  // 25 ms at 24 kHz
  int hop_size = 120;  // 5 ms at 24 kHz
  int mcep_order = kMcepOrder;
  double alpha = 0.466;
  F0Config f0;

  // Stable identifier of the feature layout a model was trained against.
  std::uint64_t schema_hash() const;
};

// Per-frame acoustic features: mcep [T x 46] (c0 + 45 shape coefficients),
// continuous log F0, binary U/V, 3-band coded aperiodicity.
struct FeatureSequence {
  std::vector<double> mcep;      // [T x 46]
  std::vector<double> log_f0;    // [T]
  std::vector<double> uv;        // [T], exactly 0 or 1
  std::vector<double> coded_ap;  // [T x 3]
  int num_frames = 0;
  int hop_size = 120;
  int sample_rate = 24000;
  double alpha = 0.466;

  double& mcep_at(int t, int d) { return mcep[static_cast<std::size_t>(t) * kMcepDim + d]; }
  double mcep_at(int t, int d) const { return mcep[static_cast<std::size_t>(t) * kMcepDim + d]; }

  // 50-dim conditioning view per frame: c1..c45, log_f0, uv, ap0..ap2.
  // c0 is kept out of the conditioning on purpose (resynthesis only).
  std::vector<float> conditioning_row(int t) const;
  std::vector<float> conditioning_matrix() const;  // [T x 50]

  // Shape coefficients c1..c45 as a [T x 45] matrix (metric + Cycle-VC domain).
  std::vector<double> shape_mcep() const;
  void set_shape_mcep(const std::vector<double>& shape);  // keeps c0
};

// Runs all analyzers with a shared hop and truncates every stream to the
// minimum frame count. A disagreement of more than 2 frames between analyzers
// signals a configuration bug and raises ShapeError.
FeatureSequence assemble_features(const Waveform& wave, const AnalysisConfig& cfg,
                                  bool* all_unvoiced_warning = nullptr);

// "CNPF1" feature file: magic, then u32 num_frames, hop, sample_rate,
// stream dims {46, 1, 1, 3}, then row-major f32 payloads per stream.
void write_features(const std::string& path, const FeatureSequence& f);
FeatureSequence read_features(const std::string& path, double alpha);

// Nearest-frame-hold expansion of the conditioning view to sample rate:
// each frame repeated hop times, total length num_frames * hop. Shared by
// both vocoders so their conditioning is directly comparable.
std::vector<float> upsample_conditioning(const FeatureSequence& f, int hop);

}  // namespace cycnpf::dsp
