#include "cycnpf/ttsim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "cycnpf/detail/fft.hpp"
#include "cycnpf/dsp/mcep.hpp"
#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::ttsim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void DegradationProfile::validate() const {
  if (!(gv_scale > 0.0 && gv_scale <= 1.0)) throw ConfigError("gv_scale must be in (0, 1]");
  if (jitter_max < 0) throw ConfigError("jitter_max must be >= 0");
  if (smooth_kernel_len < 1 || smooth_kernel_len % 2 == 0)
    throw ConfigError("smooth_kernel_len must be odd and >= 1");
  if (jitter_max >= jitter_segment_len / 2)
    throw ConfigError("jitter_max must be < jitter_segment_len / 2");
  if (noise_floor < 0.0) throw ConfigError("noise_floor must be >= 0");
}

std::vector<double> oversmooth(const std::vector<double>& mcep, int num_frames, int dims,
                               int smooth_kernel_len, double gv_scale, double noise_floor,
                               std::uint64_t seed) {
  if (smooth_kernel_len < 1 || smooth_kernel_len % 2 == 0)
    throw ConfigError("smooth_kernel_len must be odd and >= 1");
  if (!(gv_scale > 0.0 && gv_scale <= 1.0)) throw ConfigError("gv_scale must be in (0, 1]");

  std::vector<double> out(mcep.size());
  const int half = smooth_kernel_len / 2;

  // moving average with edge truncation
  for (int t = 0; t < num_frames; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(num_frames - 1, t + half);
    const double inv = 1.0 / (hi - lo + 1);
    for (int d = 0; d < dims; ++d) {
      double acc = 0.0;
      for (int u = lo; u <= hi; ++u) acc += mcep[static_cast<std::size_t>(u) * dims + d];
      out[static_cast<std::size_t>(t) * dims + d] = acc * inv;
    }
  }

  // per-dimension shrink toward the mean
  if (gv_scale < 1.0) {
    for (int d = 0; d < dims; ++d) {
      double mean = 0.0;
      for (int t = 0; t < num_frames; ++t) mean += out[static_cast<std::size_t>(t) * dims + d];
      mean /= num_frames;
      for (int t = 0; t < num_frames; ++t) {
        double& v = out[static_cast<std::size_t>(t) * dims + d];
        v = mean + gv_scale * (v - mean);
      }
    }
  }

  if (noise_floor > 0.0) {
    Rng rng(seed);
    for (double& v : out) v += noise_floor * rng.normal();
  }
  return out;
}

std::vector<int> segment_boundaries(const dsp::FeatureSequence& f, int segment_len) {
  std::vector<int> bounds;
  bounds.push_back(0);
  const int slack = std::max(1, segment_len / 4);
  int nominal = segment_len;
  while (nominal < f.num_frames - segment_len / 2) {
    int best = nominal;
    double best_energy = f.mcep_at(std::clamp(nominal, 0, f.num_frames - 1), 0);
    for (int cand = std::max(bounds.back() + 1, nominal - slack);
         cand <= std::min(f.num_frames - 2, nominal + slack); ++cand) {
      const double e = f.mcep_at(cand, 0);
      if (e < best_energy) {
        best_energy = e;
        best = cand;
      }
    }
    bounds.push_back(best);
    nominal = best + segment_len;
  }
  bounds.push_back(f.num_frames);
  return bounds;
}

namespace {

// Linear (or nearest for U/V) resample of a feature block from the source
// segment [src0, src1) onto dst_len frames.
void resample_segment(const dsp::FeatureSequence& src, int src0, int src1,
                      dsp::FeatureSequence& dst, int dst0, int dst_len) {
  const int src_len = src1 - src0;
  for (int j = 0; j < dst_len; ++j) {
    double pos;
    if (dst_len == 1) {
      pos = 0.0;
    } else {
      pos = static_cast<double>(j) * (src_len - 1) / (dst_len - 1);
    }
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, src_len - 1);
    const double w = pos - i0;
    const int s0 = src0 + i0;
    const int s1 = src0 + i1;
    const int t = dst0 + j;
    for (int d = 0; d < dsp::kMcepDim; ++d)
      dst.mcep[static_cast<std::size_t>(t) * dsp::kMcepDim + d] =
          (1.0 - w) * src.mcep[static_cast<std::size_t>(s0) * dsp::kMcepDim + d] +
          w * src.mcep[static_cast<std::size_t>(s1) * dsp::kMcepDim + d];
    dst.log_f0[static_cast<std::size_t>(t)] =
        (1.0 - w) * src.log_f0[static_cast<std::size_t>(s0)] +
        w * src.log_f0[static_cast<std::size_t>(s1)];
    dst.uv[static_cast<std::size_t>(t)] =
        src.uv[static_cast<std::size_t>(w < 0.5 ? s0 : s1)];  // keep binary
    for (int d = 0; d < dsp::kApDim; ++d)
      dst.coded_ap[static_cast<std::size_t>(t) * dsp::kApDim + d] =
          (1.0 - w) * src.coded_ap[static_cast<std::size_t>(s0) * dsp::kApDim + d] +
          w * src.coded_ap[static_cast<std::size_t>(s1) * dsp::kApDim + d];
  }
}

}  // namespace

dsp::FeatureSequence time_jitter(const dsp::FeatureSequence& f, int jitter_segment_len,
                                 int jitter_max, DurationMode mode, std::uint64_t seed) {
  if (jitter_max >= jitter_segment_len / 2)
    throw ConfigError("jitter_max must be < jitter_segment_len / 2");

  const std::vector<int> bounds = segment_boundaries(f, jitter_segment_len);
  const int num_segments = static_cast<int>(bounds.size()) - 1;
  Rng rng(seed);

  // Perturbed source boundaries: interior boundaries move, endpoints stay.
  std::vector<int> src_bounds = bounds;
  if (jitter_max > 0) {
    for (int k = 1; k < num_segments; ++k) {
      const int shift = static_cast<int>(rng.uniform_int(-jitter_max, jitter_max));
      const int lo = src_bounds[static_cast<std::size_t>(k - 1)] + 1;
      const int hi = bounds[static_cast<std::size_t>(k + 1)] - 1;
      src_bounds[static_cast<std::size_t>(k)] =
          std::clamp(bounds[static_cast<std::size_t>(k)] + shift, lo, hi);
    }
  }

  // Destination lengths: oracle mode keeps the nominal segmentation (total
  // preserved); predicted mode rescales each segment.
  std::vector<int> dst_len(static_cast<std::size_t>(num_segments));
  for (int k = 0; k < num_segments; ++k) {
    const int nominal = bounds[static_cast<std::size_t>(k + 1)] - bounds[static_cast<std::size_t>(k)];
    if (mode == DurationMode::kOracle) {
      dst_len[static_cast<std::size_t>(k)] = nominal;
    } else {
      const double factor = rng.uniform(0.8, 1.25);
      dst_len[static_cast<std::size_t>(k)] = std::max(1, static_cast<int>(std::lround(nominal * factor)));
    }
  }

  int total = 0;
  for (int v : dst_len) total += v;

  dsp::FeatureSequence out;
  out.num_frames = total;
  out.hop_size = f.hop_size;
  out.sample_rate = f.sample_rate;
  out.alpha = f.alpha;
  out.mcep.assign(static_cast<std::size_t>(total) * dsp::kMcepDim, 0.0);
  out.log_f0.assign(static_cast<std::size_t>(total), 0.0);
  out.uv.assign(static_cast<std::size_t>(total), 0.0);
  out.coded_ap.assign(static_cast<std::size_t>(total) * dsp::kApDim, 0.0);

  int dst0 = 0;
  for (int k = 0; k < num_segments; ++k) {
    const int s0 = src_bounds[static_cast<std::size_t>(k)];
    const int s1 = std::max(s0 + 1, src_bounds[static_cast<std::size_t>(k + 1)]);
    resample_segment(f, s0, std::min(s1, f.num_frames), out, dst0, dst_len[static_cast<std::size_t>(k)]);
    dst0 += dst_len[static_cast<std::size_t>(k)];
  }
  return out;
}

dsp::FeatureSequence degrade(const dsp::FeatureSequence& natural,
                             const DegradationProfile& profile) {
  profile.validate();
  dsp::FeatureSequence smoothed = natural;
  smoothed.mcep = oversmooth(natural.mcep, natural.num_frames, dsp::kMcepDim,
                             profile.smooth_kernel_len, profile.gv_scale, profile.noise_floor,
                             profile.seed);
  return time_jitter(smoothed, profile.jitter_segment_len, profile.jitter_max,
                     profile.duration_mode, profile.seed ^ 0x5eedULL);
}

std::vector<double> conventional_postfilter(const std::vector<double>& mcep, int num_frames,
                                            int dims, double beta, double alpha, int fft_size) {
  if (beta < 0.0) throw ConfigError("postfilter beta must be >= 0");
  // mean over linear bins of cos(m * warp(w)) -- the c0 compensation weights
  const int bins = fft_size / 2 + 1;
  std::vector<double> g(static_cast<std::size_t>(dims), 0.0);
  for (int b = 0; b < bins; ++b) {
    const double warped = dsp::warp_frequency(kPi * b / (bins - 1), alpha);
    for (int m = 2; m < dims; ++m) g[static_cast<std::size_t>(m)] += std::cos(m * warped);
  }
  for (int m = 2; m < dims; ++m) g[static_cast<std::size_t>(m)] /= bins;

  std::vector<double> out = mcep;
  for (int t = 0; t < num_frames; ++t) {
    double* c = &out[static_cast<std::size_t>(t) * dims];
    double delta0 = 0.0;
    for (int m = 2; m < dims; ++m) {
      const double boosted = (1.0 + beta) * c[m];
      delta0 += 2.0 * (boosted - c[m]) * g[static_cast<std::size_t>(m)];
      c[m] = boosted;
    }
    c[0] -= delta0;  // keep mean log envelope unchanged
  }
  return out;
}

namespace {

// Overlap-add time stretch at constant pitch: output duration = input * factor.
// Hann cross-faded 40 ms grains, analysis positions chosen by a +-5 ms
// normalized cross-correlation search.
dsp::Waveform sola_stretch(const dsp::Waveform& in, double factor) {
  const int sr = in.sample_rate;
  const int grain = std::max(64, sr / 25);       // 40 ms
  const int hop_out = grain / 2;                 // 50% overlap
  const int search = std::max(8, sr / 200);      // 5 ms
  const std::int64_t n = static_cast<std::int64_t>(in.samples.size());
  const std::int64_t out_len = static_cast<std::int64_t>(std::llround(n * factor));

  dsp::Waveform out;
  out.sample_rate = sr;
  out.samples.assign(static_cast<std::size_t>(out_len) + grain, 0.0);
  std::vector<double> weight(out.samples.size(), 0.0);
  const std::vector<double> win = dsp::hann_window(grain);

  const int num_grains = static_cast<int>(out_len / hop_out) + 1;
  for (int k = 0; k < num_grains; ++k) {
    const std::int64_t t_out = static_cast<std::int64_t>(k) * hop_out;
    std::int64_t t_in = static_cast<std::int64_t>(std::llround(t_out / factor));

    // correlate against what is already written to keep grains phase-aligned
    if (k > 0) {
      double best = -1e300;
      std::int64_t best_off = 0;
      for (std::int64_t off = -search; off <= search; ++off) {
        const std::int64_t cand = t_in + off;
        if (cand < 0 || cand + grain > n) continue;
        double corr = 0.0;
        for (int i = 0; i < hop_out; ++i) {
          const std::size_t oi = static_cast<std::size_t>(t_out + i);
          if (weight[oi] <= 0.0) break;
          corr += out.samples[oi] / std::max(weight[oi], 1e-9) *
                  in.samples[static_cast<std::size_t>(cand + i)];
        }
        if (corr > best) {
          best = corr;
          best_off = off;
        }
      }
      t_in += best_off;
    }
    t_in = std::clamp<std::int64_t>(t_in, 0, std::max<std::int64_t>(0, n - grain));
    for (int i = 0; i < grain && t_in + i < n; ++i) {
      const std::size_t oi = static_cast<std::size_t>(t_out + i);
      if (oi >= out.samples.size()) break;
      out.samples[oi] += in.samples[static_cast<std::size_t>(t_in + i)] * win[static_cast<std::size_t>(i)];
      weight[oi] += win[static_cast<std::size_t>(i)];
    }
  }
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    if (weight[i] > 1e-9) out.samples[i] /= weight[i];
  out.samples.resize(static_cast<std::size_t>(out_len));
  dsp::clip_waveform(out);
  return out;
}

// Frequency-scale the magnitude spectrum of every frame, keeping the phase.
dsp::Waveform formant_warp(const dsp::Waveform& in, double scale) {
  constexpr int kFft = 1024;
  constexpr int kHop = 256;
  const std::int64_t n = static_cast<std::int64_t>(in.samples.size());
  if (n < kFft) return in;

  const std::vector<double> win = dsp::hann_window(kFft);
  dsp::Waveform out;
  out.sample_rate = in.sample_rate;
  out.samples.assign(in.samples.size(), 0.0);
  std::vector<double> weight(in.samples.size(), 0.0);

  std::vector<std::complex<double>> buf(kFft);
  const int bins = kFft / 2 + 1;
  std::vector<double> mag(static_cast<std::size_t>(bins));
  for (std::int64_t start = 0; start + kFft <= n; start += kHop) {
    for (int i = 0; i < kFft; ++i)
      buf[static_cast<std::size_t>(i)] =
          in.samples[static_cast<std::size_t>(start + i)] * win[static_cast<std::size_t>(i)];
    detail::fft_radix2(buf, false);
    for (int b = 0; b < bins; ++b) mag[static_cast<std::size_t>(b)] = std::abs(buf[static_cast<std::size_t>(b)]);
    for (int b = 0; b < bins; ++b) {
      const double src = b / scale;
      const int s0 = static_cast<int>(std::floor(src));
      double m;
      if (s0 >= bins - 1) {
        m = mag[static_cast<std::size_t>(bins - 1)];
      } else if (s0 < 0) {
        m = mag[0];
      } else {
        const double w = src - s0;
        m = (1.0 - w) * mag[static_cast<std::size_t>(s0)] + w * mag[static_cast<std::size_t>(s0 + 1)];
      }
      const double old = std::abs(buf[static_cast<std::size_t>(b)]);
      const double gain = old > 1e-12 ? m / old : 0.0;
      buf[static_cast<std::size_t>(b)] *= gain;
      if (b > 0 && b < kFft / 2) buf[static_cast<std::size_t>(kFft - b)] = std::conj(buf[static_cast<std::size_t>(b)]);
    }
    detail::fft_radix2(buf, true);
    for (int i = 0; i < kFft; ++i) {
      const std::size_t oi = static_cast<std::size_t>(start + i);
      out.samples[oi] += buf[static_cast<std::size_t>(i)].real() / kFft * win[static_cast<std::size_t>(i)];
      weight[oi] += win[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
    }
  }
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    if (weight[i] > 1e-9) out.samples[i] /= weight[i];
  dsp::clip_waveform(out);
  return out;
}

}  // namespace

dsp::Waveform make_speaker_variant(const dsp::Waveform& wave, double pitch_shift_semitones,
                                   double formant_scale) {
  if (std::fabs(pitch_shift_semitones) > 6.0)
    throw ConfigError("pitch shift must be within +-6 semitones");
  if (!(formant_scale >= 0.85 && formant_scale <= 1.15))
    throw ConfigError("formant scale must be in [0.85, 1.15]");

  dsp::Waveform out = wave;
  const double s = std::pow(2.0, pitch_shift_semitones / 12.0);
  if (std::fabs(s - 1.0) > 1e-9) {
    // resample so pitch scales by s (duration scales by 1/s), then stretch
    // the duration back at constant pitch
    dsp::Waveform shifted = dsp::resample(out, static_cast<int>(std::lround(out.sample_rate / s)));
    shifted.sample_rate = out.sample_rate;
    out = sola_stretch(shifted, static_cast<double>(wave.samples.size()) / shifted.samples.size());
  }
  if (std::fabs(formant_scale - 1.0) > 1e-9) out = formant_warp(out, formant_scale);
  return out;
}

}  // namespace cycnpf::ttsim
