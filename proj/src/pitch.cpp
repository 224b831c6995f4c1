#include "cycnpf/dsp/pitch.hpp"

#include <algorithm>
#include <cmath>

#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

F0Result extract_f0(const Waveform& wave, const F0Config& cfg) {
  if (!(cfg.f_min > 0.0 && cfg.f_min < cfg.f_max && cfg.f_max < wave.sample_rate / 2.0))
    throw ShapeError("extract_f0 requires 0 < f_min < f_max < Nyquist");

  const int sr = wave.sample_rate;
  const int win = std::max(2, static_cast<int>(std::lround(cfg.window_s * sr)));
  const int lag_min = std::max(1, static_cast<int>(std::floor(sr / cfg.f_max)));
  const int lag_max = static_cast<int>(std::ceil(sr / cfg.f_min));

  // Pad so every frame has win samples plus lag_max lookahead; frame centers
  // share the STFT convention (t * hop after a win/2 reflect pad).
  const int pad_left = win / 2;
  const int pad_right = win / 2 + lag_max;
  const std::int64_t n = static_cast<std::int64_t>(wave.samples.size());
  if (n < pad_left + 1 || n < pad_right + 1)
    throw ShapeError("signal too short for one F0 analysis frame");

  std::vector<double> x(static_cast<std::size_t>(n + pad_left + pad_right));
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.size()); ++i) {
    std::int64_t src = i - pad_left;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    x[static_cast<std::size_t>(i)] = wave.samples[static_cast<std::size_t>(src)];
  }

  const int num_frames = static_cast<int>(n / cfg.hop_size) + 1;
  F0Result res;
  res.log_f0.assign(static_cast<std::size_t>(num_frames), 0.0);
  res.uv.assign(static_cast<std::size_t>(num_frames), 0.0);
  std::vector<double> f0(static_cast<std::size_t>(num_frames), 0.0);

  std::vector<double> nac(static_cast<std::size_t>(lag_max + 2), 0.0);
  for (int t = 0; t < num_frames; ++t) {
    const double* frame = &x[static_cast<std::size_t>(t) * cfg.hop_size];
    double e0 = 0.0;
    for (int i = 0; i < win; ++i) e0 += frame[i] * frame[i];
    if (e0 <= 0.0) continue;  // silent frame stays unvoiced

    // normalized autocorrelation over the candidate lag band
    int best_lag = 0;
    double best_nac = 0.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double cross = 0.0, e1 = 0.0;
      const double* shifted = frame + lag;
      for (int i = 0; i < win; ++i) {
        cross += frame[i] * shifted[i];
        e1 += shifted[i] * shifted[i];
      }
      const double denom = std::sqrt(e0 * e1);
      const double v = denom > 0.0 ? cross / denom : 0.0;
      nac[static_cast<std::size_t>(lag)] = v;
      if (v > best_nac) {
        best_nac = v;
        best_lag = lag;
      }
    }
    if (best_lag == 0 || best_nac < cfg.voicing_threshold) continue;

    // parabolic refinement around the peak
    double lag_refined = best_lag;
    if (best_lag > lag_min && best_lag < lag_max) {
      const double ym = nac[static_cast<std::size_t>(best_lag - 1)];
      const double y0 = nac[static_cast<std::size_t>(best_lag)];
      const double yp = nac[static_cast<std::size_t>(best_lag + 1)];
      const double denom = ym - 2.0 * y0 + yp;
      if (std::fabs(denom) > 1e-12) {
        const double delta = 0.5 * (ym - yp) / denom;
        if (std::fabs(delta) <= 1.0) lag_refined += delta;
      }
    }
    res.uv[static_cast<std::size_t>(t)] = 1.0;
    f0[static_cast<std::size_t>(t)] = sr / lag_refined;
  }

  // interpolate log F0 through unvoiced runs, edges held
  int first_voiced = -1, last_voiced = -1;
  for (int t = 0; t < num_frames; ++t)
    if (res.uv[static_cast<std::size_t>(t)] > 0.5) {
      if (first_voiced < 0) first_voiced = t;
      last_voiced = t;
    }

  if (first_voiced < 0) {
    res.all_unvoiced = true;
    std::fill(res.log_f0.begin(), res.log_f0.end(), std::log(cfg.f_min));
    return res;
  }

  for (int t = 0; t < num_frames; ++t) {
    if (res.uv[static_cast<std::size_t>(t)] > 0.5)
      res.log_f0[static_cast<std::size_t>(t)] = std::log(f0[static_cast<std::size_t>(t)]);
  }
  for (int t = 0; t < first_voiced; ++t)
    res.log_f0[static_cast<std::size_t>(t)] = res.log_f0[static_cast<std::size_t>(first_voiced)];
  for (int t = last_voiced + 1; t < num_frames; ++t)
    res.log_f0[static_cast<std::size_t>(t)] = res.log_f0[static_cast<std::size_t>(last_voiced)];

  int prev = first_voiced;
  for (int t = first_voiced + 1; t <= last_voiced; ++t) {
    if (res.uv[static_cast<std::size_t>(t)] < 0.5) continue;
    for (int u = prev + 1; u < t; ++u) {
      const double w = static_cast<double>(u - prev) / (t - prev);
      res.log_f0[static_cast<std::size_t>(u)] =
          (1.0 - w) * res.log_f0[static_cast<std::size_t>(prev)] +
          w * res.log_f0[static_cast<std::size_t>(t)];
    }
    prev = t;
  }
  return res;
}

}  // namespace cycnpf::dsp
