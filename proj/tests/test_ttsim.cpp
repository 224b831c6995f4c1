#include "doctest.h"

#include <cmath>

#include "cycnpf/dsp/features.hpp"
#include "cycnpf/dsp/mcep.hpp"
#include "cycnpf/dsp/pitch.hpp"
#include "cycnpf/metrics.hpp"
#include "cycnpf/ttsim.hpp"
#include "cycnpf/util.hpp"
#include "support.hpp"

using namespace cycnpf;

namespace {

dsp::FeatureSequence analyzed(double f0, double seconds, std::uint64_t seed) {
  auto wave = testsup::sawtooth(f0, seconds);
  Rng rng(seed);
  for (auto& s : wave.samples) s += 0.01 * rng.normal();
  dsp::clip_waveform(wave);
  return dsp::assemble_features(wave, dsp::AnalysisConfig{});
}

std::vector<double> per_dim_gv(const std::vector<double>& m, int frames, int dims) {
  std::vector<double> gv(static_cast<std::size_t>(dims), 0.0);
  for (int d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (int t = 0; t < frames; ++t) mean += m[static_cast<std::size_t>(t) * dims + d];
    mean /= frames;
    double var = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double v = m[static_cast<std::size_t>(t) * dims + d] - mean;
      var += v * v;
    }
    gv[static_cast<std::size_t>(d)] = var / frames;
  }
  return gv;
}

}  // namespace

TEST_CASE("oversmooth: identity profile returns the input") {
  const auto f = analyzed(130.0, 0.6, 1);
  const auto out = ttsim::oversmooth(f.mcep, f.num_frames, dsp::kMcepDim, 1, 1.0, 0.0, 9);
  CHECK(out == f.mcep);
}

TEST_CASE("oversmooth: gv_scale shrinks per-dim variance quadratically") {
  const auto f = analyzed(150.0, 1.0, 2);
  REQUIRE(f.num_frames >= 150);
  const auto out = ttsim::oversmooth(f.mcep, f.num_frames, dsp::kMcepDim, 1, 0.25, 0.0, 9);
  const auto gv_in = per_dim_gv(f.mcep, f.num_frames, dsp::kMcepDim);
  const auto gv_out = per_dim_gv(out, f.num_frames, dsp::kMcepDim);
  for (int d = 1; d < dsp::kMcepDim; ++d) {
    if (gv_in[static_cast<std::size_t>(d)] < 1e-10) continue;
    CHECK(gv_out[static_cast<std::size_t>(d)] / gv_in[static_cast<std::size_t>(d)] ==
          doctest::Approx(0.0625).epsilon(0.05));
  }
}

TEST_CASE("oversmooth: default profile strictly reduces GV in every dim") {
  const auto f = analyzed(120.0, 1.0, 3);
  const auto out = ttsim::oversmooth(f.mcep, f.num_frames, dsp::kMcepDim, 9, 0.5, 0.0, 9);
  const auto gv_in = per_dim_gv(f.mcep, f.num_frames, dsp::kMcepDim);
  const auto gv_out = per_dim_gv(out, f.num_frames, dsp::kMcepDim);
  for (int d = 0; d < dsp::kMcepDim; ++d)
    if (gv_in[static_cast<std::size_t>(d)] > 1e-10)
      CHECK(gv_out[static_cast<std::size_t>(d)] < gv_in[static_cast<std::size_t>(d)]);
}

TEST_CASE("time_jitter: zero jitter in oracle mode is the identity") {
  const auto f = analyzed(140.0, 0.8, 4);
  const auto out = ttsim::time_jitter(f, 40, 0, ttsim::DurationMode::kOracle, 11);
  CHECK(out.num_frames == f.num_frames);
  CHECK(out.mcep == f.mcep);
  CHECK(out.log_f0 == f.log_f0);
  CHECK(out.uv == f.uv);
  CHECK(out.coded_ap == f.coded_ap);
}

TEST_CASE("time_jitter: oracle mode preserves frame count for 100 seeds") {
  const auto f = analyzed(110.0, 0.9, 5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto out = ttsim::time_jitter(f, 40, 6, ttsim::DurationMode::kOracle, seed);
    CHECK(out.num_frames == f.num_frames);
    CHECK(out.uv.size() == static_cast<std::size_t>(out.num_frames));
    CHECK(out.coded_ap.size() == static_cast<std::size_t>(out.num_frames) * dsp::kApDim);
    for (double v : out.uv) CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("time_jitter: predicted mode changes length deterministically, DTW sees warping") {
  const auto f = analyzed(125.0, 1.0, 6);
  const auto a = ttsim::time_jitter(f, 40, 6, ttsim::DurationMode::kPredicted, 17);
  const auto b = ttsim::time_jitter(f, 40, 6, ttsim::DurationMode::kPredicted, 17);
  CHECK(a.num_frames == b.num_frames);
  CHECK(a.mcep == b.mcep);

  std::vector<double> xs = f.shape_mcep();
  std::vector<double> ys = a.shape_mcep();
  metrics::zscore_pair(xs, ys, dsp::kMcepOrder);
  const auto path = metrics::dtw_align(xs, f.num_frames, ys, a.num_frames, dsp::kMcepOrder);
  int non_diagonal = 0;
  for (std::size_t k = 1; k < path.pairs.size(); ++k) {
    const int di = path.pairs[k].first - path.pairs[k - 1].first;
    const int dj = path.pairs[k].second - path.pairs[k - 1].second;
    if (di != dj) ++non_diagonal;
  }
  CHECK(non_diagonal > 0);
}

TEST_CASE("time_jitter: rejects jitter_max >= segment/2") {
  const auto f = analyzed(140.0, 0.5, 7);
  CHECK_THROWS_AS(ttsim::time_jitter(f, 10, 5, ttsim::DurationMode::kOracle, 1), ConfigError);
}

TEST_CASE("degrade: seed-deterministic end to end") {
  const auto f = analyzed(135.0, 0.7, 8);
  ttsim::DegradationProfile profile;
  const auto a = ttsim::degrade(f, profile);
  const auto b = ttsim::degrade(f, profile);
  CHECK(a.mcep == b.mcep);
  CHECK(a.log_f0 == b.log_f0);
  CHECK(a.num_frames == b.num_frames);
}

TEST_CASE("conventional_postfilter: beta 0 identity, beta 0.4 scales c2..c45") {
  const auto f = analyzed(120.0, 0.5, 9);
  const auto same = ttsim::conventional_postfilter(f.mcep, f.num_frames, dsp::kMcepDim, 0.0,
                                                   f.alpha, 1024);
  CHECK(same == f.mcep);

  const auto boosted = ttsim::conventional_postfilter(f.mcep, f.num_frames, dsp::kMcepDim, 0.4,
                                                      f.alpha, 1024);
  for (int t = 0; t < f.num_frames; ++t) {
    CHECK(boosted[static_cast<std::size_t>(t) * dsp::kMcepDim + 1] ==
          f.mcep[static_cast<std::size_t>(t) * dsp::kMcepDim + 1]);  // c1 untouched
    for (int d = 2; d < dsp::kMcepDim; ++d)
      CHECK(boosted[static_cast<std::size_t>(t) * dsp::kMcepDim + d] ==
            doctest::Approx(1.4 * f.mcep[static_cast<std::size_t>(t) * dsp::kMcepDim + d]).epsilon(1e-12));
  }
}

TEST_CASE("conventional_postfilter: preserves mean log envelope per frame") {
  const auto f = analyzed(160.0, 0.5, 10);
  const int fft = 1024;
  const auto boosted = ttsim::conventional_postfilter(f.mcep, f.num_frames, dsp::kMcepDim, 0.4,
                                                      f.alpha, fft);
  const auto env_in = dsp::mcep_to_envelope(f.mcep, f.num_frames, dsp::kMcepDim, f.alpha, fft);
  const auto env_out = dsp::mcep_to_envelope(boosted, f.num_frames, dsp::kMcepDim, f.alpha, fft);
  for (int t = 0; t < f.num_frames; ++t) {
    double in_mean = 0.0, out_mean = 0.0;
    for (int b = 0; b < env_in.num_bins; ++b) {
      in_mean += std::log(env_in.at(t, b));
      out_mean += std::log(env_out.at(t, b));
    }
    CHECK(out_mean / env_in.num_bins ==
          doctest::Approx(in_mean / env_in.num_bins).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("conventional_postfilter: strictly raises GV for d >= 2 when beta > 0") {
  const auto f = analyzed(145.0, 0.6, 11);
  const auto boosted = ttsim::conventional_postfilter(f.mcep, f.num_frames, dsp::kMcepDim, 0.4,
                                                      f.alpha, 1024);
  const auto gv_in = per_dim_gv(f.mcep, f.num_frames, dsp::kMcepDim);
  const auto gv_out = per_dim_gv(boosted, f.num_frames, dsp::kMcepDim);
  for (int d = 2; d < dsp::kMcepDim; ++d)
    if (gv_in[static_cast<std::size_t>(d)] > 1e-12)
      CHECK(gv_out[static_cast<std::size_t>(d)] > gv_in[static_cast<std::size_t>(d)]);
}

TEST_CASE("make_speaker_variant: identity settings return the input") {
  const auto wave = testsup::sawtooth(120.0, 0.4);
  const auto out = ttsim::make_speaker_variant(wave, 0.0, 1.0);
  REQUIRE(out.samples.size() == wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i)
    CHECK(std::fabs(out.samples[i] - wave.samples[i]) <= 1e-4);
}

TEST_CASE("make_speaker_variant: +6 semitones moves a 100 Hz tone to ~141.4 Hz") {
  const auto wave = testsup::sawtooth(100.0, 1.0);
  const auto shifted = ttsim::make_speaker_variant(wave, 6.0, 1.0);
  dsp::F0Config cfg;
  const auto res = dsp::extract_f0(shifted, cfg);
  std::vector<double> voiced;
  for (std::size_t t = 0; t < res.uv.size(); ++t)
    if (res.uv[t] > 0.5) voiced.push_back(std::exp(res.log_f0[t]));
  REQUIRE(voiced.size() > res.uv.size() / 2);
  std::sort(voiced.begin(), voiced.end());
  CHECK(voiced[voiced.size() / 2] == doctest::Approx(141.42).epsilon(0.03));
}

TEST_CASE("make_speaker_variant: different shifts are acoustically separated") {
  auto wave = testsup::sawtooth(130.0, 0.8);
  Rng rng(12);
  for (auto& s : wave.samples) s += 0.01 * rng.normal();
  dsp::clip_waveform(wave);
  const auto a = ttsim::make_speaker_variant(wave, 3.0, 1.08);
  const auto b = ttsim::make_speaker_variant(wave, -3.0, 0.93);
  dsp::AnalysisConfig cfg;
  const auto fa = dsp::assemble_features(a, cfg);
  const auto fb = dsp::assemble_features(b, cfg);
  const double dist = metrics::mcd(fa.shape_mcep(), fa.num_frames, fb.shape_mcep(), fb.num_frames,
                                   dsp::kMcepOrder, false);
  CHECK(dist > 1.0);
}

TEST_CASE("segment_boundaries: cover the sequence, strictly increasing") {
  const auto f = analyzed(150.0, 1.0, 13);
  const auto bounds = ttsim::segment_boundaries(f, 40);
  REQUIRE(bounds.size() >= 2);
  CHECK(bounds.front() == 0);
  CHECK(bounds.back() == f.num_frames);
  for (std::size_t k = 1; k < bounds.size(); ++k) CHECK(bounds[k] > bounds[k - 1]);
}
