#pragma once

#include <cstdint>
#include <vector>

#include "cycnpf/dsp/stft.hpp"

namespace cycnpf::metrics {

// Warping path between two sequences: starts at (0,0), ends at
// (Tx-1, Ty-1), steps from {(1,0), (0,1), (1,1)}.
struct AlignmentPath {
  std::vector<std::pair<int, int>> pairs;
};

// Mel-cepstral distortion in dB over the 45 shape coefficients (c0 excluded
// by taking [T x 45] inputs): mean over frames of
// (10 * sqrt(2) / ln 10) * ||c_x - c_y||_2. With pre_aligned=false the pair
// is first aligned by DTW on z-scored coefficients.
double mcd(const std::vector<double>& x, int tx, const std::vector<double>& y, int ty, int dims,
           bool pre_aligned);

inline constexpr double kMcdConstant = 6.141851463713754;  // 10*sqrt(2)/ln(10)

// Log spectral distortion in dB: mean over frames of
// sqrt(mean over bins of (20*log10(|X|/|Y|))^2), both magnitudes floored
// at 1e-10.
double lsd(const dsp::Spectrogram& x, const dsp::Spectrogram& y);

// Log global-variance distance: per-dimension population variance over
// frames, floored at 1e-12, then sqrt(mean over dims of
// (ln GV_x - ln GV_y)^2). Needs at least 2 frames per sequence.
double lgd(const std::vector<double>& x, int tx, const std::vector<double>& y, int ty, int dims);

// DTW under squared-Euclidean local cost. Ties prefer (1,1), then (1,0),
// then (0,1) so paths are deterministic. Total path cost sums the local cost
// of every node on the path.
AlignmentPath dtw_align(const std::vector<double>& x, int tx, const std::vector<double>& y,
                        int ty, int dims, int band = 0);

double dtw_path_cost(const std::vector<double>& x, const std::vector<double>& y, int dims,
                     const AlignmentPath& path);

// Materialize the warp: frame j of the output is X[i] for the path pair
// (i, j), the last such i when j repeats.
std::vector<double> warp_to_target(const std::vector<double>& x, int tx, int dims,
                                   const AlignmentPath& path, int target_len);

// z-score per dimension using statistics of the concatenation of both
// sequences (keeps the alignment symmetric in its arguments).
void zscore_pair(std::vector<double>& x, std::vector<double>& y, int dims);

// DTW invocation counter, used by the pipeline routing tests.
std::uint64_t dtw_call_count();
void reset_dtw_call_count();

}  // namespace cycnpf::metrics
