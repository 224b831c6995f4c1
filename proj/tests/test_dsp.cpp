#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "cycnpf/dsp/aperiodicity.hpp"
#include "cycnpf/dsp/features.hpp"
#include "cycnpf/dsp/mcep.hpp"
#include "cycnpf/dsp/mulaw.hpp"
#include "cycnpf/dsp/pitch.hpp"
#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/dsp/wave.hpp"
#include "cycnpf/util.hpp"
#include "support.hpp"

using namespace cycnpf;

namespace {

dsp::Spectrogram flat_spectrogram(int frames, int fft_size, double value) {
  dsp::Spectrogram s;
  s.fft_size = fft_size;
  s.num_bins = fft_size / 2 + 1;
  s.num_frames = frames;
  s.hop_size = 120;
  s.win_size = 600;
  s.mags.assign(static_cast<std::size_t>(frames) * s.num_bins, value);
  return s;
}

}  // namespace

TEST_CASE("stft: pure tone peaks at the expected bin") {
  const auto wave = testsup::sine(750.0, 1.0);
  const auto spec = dsp::stft_magnitude(wave, 1024, 120, 600);
  CHECK(spec.num_frames == 201);  // floor(24000/120) + 1
  for (int t = 2; t < spec.num_frames - 2; ++t) {
    int arg = 0;
    for (int b = 1; b < spec.num_bins; ++b)
      if (spec.at(t, b) > spec.at(t, arg)) arg = b;
    CHECK(arg == 32);  // round(750 * 1024 / 24000)
  }
}

TEST_CASE("stft: zeros in, zeros out") {
  dsp::Waveform w;
  w.samples.assign(24000, 0.0);
  const auto spec = dsp::stft_magnitude(w, 1024, 120, 600);
  double mx = 0.0;
  for (double m : spec.mags) mx = std::max(mx, m);
  CHECK(mx == 0.0);
}

TEST_CASE("stft: magnitudes match a direct DFT on one frame") {
  auto wave = testsup::white_noise(0.2, 42);
  const int fft = 512, hop = 120, win = 480;
  const auto spec = dsp::stft_magnitude(wave, fft, hop, win);

  const int t = 10;
  const auto padded = dsp::reflect_pad(wave.samples, win / 2);
  const auto window = dsp::hann_window(win);
  std::vector<double> frame(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i)
    frame[static_cast<std::size_t>(i)] = padded[static_cast<std::size_t>(t) * hop + i] * window[static_cast<std::size_t>(i)];
  const auto oracle = testsup::direct_dft_mag(frame, fft);

  double parseval_fft = 0.0, frame_energy = 0.0;
  for (int b = 0; b < spec.num_bins; ++b) {
    CHECK(spec.at(t, b) == doctest::Approx(oracle[static_cast<std::size_t>(b)]).epsilon(1e-9));
    const double m2 = spec.at(t, b) * spec.at(t, b);
    parseval_fft += (b == 0 || b == fft / 2) ? m2 : 2.0 * m2;
  }
  for (double v : frame) frame_energy += v * v;
  CHECK(parseval_fft / fft == doctest::Approx(frame_energy).epsilon(1e-9));
}

TEST_CASE("stft: too-short signal raises") {
  dsp::Waveform w;
  w.samples.assign(10, 0.1);
  CHECK_THROWS_AS(dsp::stft_magnitude(w, 1024, 120, 600), ShapeError);
}

TEST_CASE("stft: sign-flip invariance") {
  auto wave = testsup::white_noise(0.3, 7);
  auto flipped = wave;
  for (auto& s : flipped.samples) s = -s;
  const auto a = dsp::stft_magnitude(wave, 1024, 120, 600);
  const auto b = dsp::stft_magnitude(flipped, 1024, 120, 600);
  for (std::size_t i = 0; i < a.mags.size(); ++i)
    CHECK(a.mags[i] == doctest::Approx(b.mags[i]).epsilon(1e-6));
}

TEST_CASE("mcep: flat spectrum gives c0 = ln k and zero shape") {
  const double k = 2.5;
  const auto spec = flat_spectrogram(3, 1024, k);
  const auto mcep = dsp::mcep_analyze(spec, 45, 0.466);
  for (int t = 0; t < 3; ++t) {
    CHECK(mcep[static_cast<std::size_t>(t) * 46] == doctest::Approx(std::log(k)).epsilon(1e-9));
    for (int d = 1; d <= 45; ++d)
      CHECK(std::fabs(mcep[static_cast<std::size_t>(t) * 46 + d]) < 1e-6);
  }
}

TEST_CASE("mcep: log-scale equivariance") {
  auto wave = testsup::white_noise(0.2, 11);
  auto spec = dsp::stft_magnitude(wave, 1024, 120, 600);
  const auto base = dsp::mcep_analyze(spec, 45, 0.466);
  const double s = 3.7;
  for (double& m : spec.mags) m *= s;
  const auto scaled = dsp::mcep_analyze(spec, 45, 0.466);
  for (int t = 0; t < spec.num_frames; ++t) {
    CHECK(scaled[static_cast<std::size_t>(t) * 46] - base[static_cast<std::size_t>(t) * 46] ==
          doctest::Approx(std::log(s)).epsilon(1e-6));
    for (int d = 1; d <= 45; ++d)
      CHECK(scaled[static_cast<std::size_t>(t) * 46 + d] ==
            doctest::Approx(base[static_cast<std::size_t>(t) * 46 + d]).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("mcep: envelope of a constant cepstrum is constant") {
  std::vector<double> mcep(46, 0.0);
  mcep[0] = std::log(2.0);
  const auto env = dsp::mcep_to_envelope(mcep, 1, 46, 0.466, 1024);
  for (double v : env.mags) CHECK(v == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("mcep: analyze/envelope identity on flat input") {
  const auto spec = flat_spectrogram(1, 1024, 0.8);
  const auto mcep = dsp::mcep_analyze(spec, 45, 0.466);
  const auto env = dsp::mcep_to_envelope(mcep, 1, 46, 0.466, 1024);
  for (double v : env.mags) CHECK(v == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("mcep: envelope matches an independent series summation") {
  std::vector<double> mcep(46, 0.0);
  mcep[0] = -0.4;
  mcep[1] = 0.9;
  mcep[2] = -0.35;
  mcep[7] = 0.1;
  const double alpha = 0.466;
  const int fft = 512;
  const auto env = dsp::mcep_to_envelope(mcep, 1, 46, alpha, fft);
  for (int b = 0; b < env.num_bins; ++b) {
    const double warped = dsp::warp_frequency(testsup::kPi * b / (env.num_bins - 1), alpha);
    double log_env = mcep[0];
    for (int m = 1; m < 46; ++m) log_env += 2.0 * mcep[static_cast<std::size_t>(m)] * std::cos(m * warped);
    CHECK(env.at(0, b) == doctest::Approx(std::exp(log_env)).epsilon(1e-12));
  }
}

TEST_CASE("mcep: re-analysis round trip stays within the pinned bound") {
  // mcep -> envelope -> mcep is the identity on the band-limited family the
  // analyzer produces; bound frozen from a 100-frame pilot corpus
  auto wave = testsup::white_noise(0.6, 3);
  const auto spec = dsp::stft_magnitude(wave, 1024, 120, 600);
  REQUIRE(spec.num_frames >= 100);
  const auto m1 = dsp::mcep_analyze(spec, 45, 0.466);
  const auto env1 = dsp::mcep_to_envelope(m1, spec.num_frames, 46, 0.466, 1024);
  const auto m2 = dsp::mcep_analyze(env1, 45, 0.466);
  double worst = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) worst = std::max(worst, std::fabs(m1[i] - m2[i]));
  CHECK(worst < 2e-3);
}

TEST_CASE("warp_frequency: inverse composition and monotonicity") {
  const double alpha = 0.466;
  double prev = -1.0;
  for (int i = 0; i <= 64; ++i) {
    const double w = testsup::kPi * i / 64;
    const double round = dsp::warp_frequency(dsp::warp_frequency(w, alpha), -alpha);
    CHECK(round == doctest::Approx(w).epsilon(1e-10).scale(1.0));
    const double warped = dsp::warp_frequency(w, alpha);
    CHECK(warped > prev);
    prev = warped;
  }
}

TEST_CASE("f0: 100 Hz sawtooth tracked within 2 Hz and mostly voiced") {
  const auto wave = testsup::sawtooth(100.0, 1.0);
  dsp::F0Config cfg;
  const auto res = dsp::extract_f0(wave, cfg);
  std::vector<double> voiced_f0;
  int voiced = 0;
  for (std::size_t t = 0; t < res.uv.size(); ++t)
    if (res.uv[t] > 0.5) {
      ++voiced;
      voiced_f0.push_back(std::exp(res.log_f0[t]));
    }
  CHECK(static_cast<double>(voiced) / res.uv.size() >= 0.9);
  std::sort(voiced_f0.begin(), voiced_f0.end());
  const double median = voiced_f0[voiced_f0.size() / 2];
  CHECK(std::fabs(median - 100.0) <= 2.0);
}

TEST_CASE("f0: white noise is mostly unvoiced") {
  const auto wave = testsup::white_noise(1.0, 5);
  const auto res = dsp::extract_f0(wave, dsp::F0Config{});
  int voiced = 0;
  for (double v : res.uv) voiced += v > 0.5;
  CHECK(voiced * 2 < static_cast<int>(res.uv.size()));
}

TEST_CASE("f0: silence gives all-unvoiced with the warning flag") {
  dsp::Waveform w;
  w.samples.assign(24000, 0.0);
  const auto res = dsp::extract_f0(w, dsp::F0Config{});
  CHECK(res.all_unvoiced);
  for (double v : res.uv) CHECK(v == 0.0);
  for (double v : res.log_f0) CHECK(v == doctest::Approx(std::log(70.0)));
}

TEST_CASE("f0: amplitude invariance under power-of-two scaling") {
  const auto wave = testsup::sawtooth(140.0, 0.7);
  auto half = wave;
  for (auto& s : half.samples) s *= 0.5;
  const auto a = dsp::extract_f0(wave, dsp::F0Config{});
  const auto b = dsp::extract_f0(half, dsp::F0Config{});
  REQUIRE(a.uv.size() == b.uv.size());
  for (std::size_t t = 0; t < a.uv.size(); ++t) {
    CHECK(a.uv[t] == b.uv[t]);
    CHECK(a.log_f0[t] == b.log_f0[t]);
  }
}

TEST_CASE("band aperiodicity: tone vs noise ordering, noise level, zeros fallback") {
  int frames_tone = 0, frames_noise = 0, frames_zero = 0;
  const auto tone = dsp::band_aperiodicity(testsup::sine(500.0, 0.5), 120, &frames_tone);
  const auto noise = dsp::band_aperiodicity(testsup::white_noise(0.5, 9), 120, &frames_noise);

  auto band_mean = [](const std::vector<double>& ap, int frames, int band) {
    double acc = 0.0;
    for (int t = 0; t < frames; ++t) acc += ap[static_cast<std::size_t>(t) * 3 + band];
    return acc / frames;
  };
  CHECK(band_mean(tone, frames_tone, 0) < band_mean(noise, frames_noise, 0));
  for (int band = 0; band < 3; ++band) CHECK(band_mean(noise, frames_noise, band) >= 0.5);

  dsp::Waveform zeros;
  zeros.samples.assign(12000, 0.0);
  const auto z = dsp::band_aperiodicity(zeros, 120, &frames_zero);
  for (double v : z) CHECK(v == 1.0);
}

TEST_CASE("mulaw: pinned code points") {
  CHECK(dsp::mulaw_encode(0.0) == 128);
  CHECK(dsp::mulaw_encode(1.0) == 255);
  CHECK(dsp::mulaw_encode(-1.0) == 0);
  CHECK(dsp::mulaw_encode(2.0) == 255);  // clipping contract
  CHECK(dsp::mulaw_encode(-2.0) == 0);
}

TEST_CASE("mulaw: encode(decode(c)) is the identity on codes") {
  for (int c = 0; c < 256; ++c)
    CHECK(dsp::mulaw_encode(dsp::mulaw_decode(static_cast<std::uint8_t>(c))) == c);
}

TEST_CASE("mulaw: round-trip error bounded over a dense grid") {
  double worst = 0.0;
  const int n = 1000000;
  for (int i = 0; i <= n; ++i) {
    const double x = -1.0 + 2.0 * i / n;
    const double back = dsp::mulaw_decode(dsp::mulaw_encode(x));
    worst = std::max(worst, std::fabs(back - x));
  }
  CHECK(worst <= 0.025);
}

TEST_CASE("assemble_features: frame count, width, determinism") {
  const auto wave = testsup::sawtooth(120.0, 1.0);
  dsp::AnalysisConfig cfg;
  const auto f1 = dsp::assemble_features(wave, cfg);
  CHECK(std::abs(f1.num_frames - 200) <= 1);
  CHECK(f1.conditioning_row(0).size() == 50);

  const auto f2 = dsp::assemble_features(wave, cfg);
  CHECK(f1.mcep == f2.mcep);
  CHECK(f1.log_f0 == f2.log_f0);
  CHECK(f1.uv == f2.uv);
  CHECK(f1.coded_ap == f2.coded_ap);
}

TEST_CASE("feature file: round trip preserves every stream") {
  const auto wave = testsup::sawtooth(150.0, 0.5);
  dsp::AnalysisConfig cfg;
  const auto f = dsp::assemble_features(wave, cfg);
  const std::string dir = testsup::temp_dir("featfile");
  dsp::write_features(dir + "/x.feat", f);
  const auto g = dsp::read_features(dir + "/x.feat", cfg.alpha);
  CHECK(g.num_frames == f.num_frames);
  CHECK(g.hop_size == f.hop_size);
  CHECK(g.sample_rate == f.sample_rate);
  // payloads are stored as f32
  for (std::size_t i = 0; i < f.mcep.size(); ++i)
    CHECK(g.mcep[i] == doctest::Approx(f.mcep[i]).epsilon(1e-6).scale(1.0));
  for (std::size_t i = 0; i < f.uv.size(); ++i) CHECK(g.uv[i] == f.uv[i]);
}

TEST_CASE("upsample_conditioning: hold expansion and exact downsample recovery") {
  const auto wave = testsup::sawtooth(110.0, 0.3);
  dsp::AnalysisConfig cfg;
  const auto f = dsp::assemble_features(wave, cfg);
  const auto up = dsp::upsample_conditioning(f, 4);
  CHECK(up.size() == static_cast<std::size_t>(f.num_frames) * 4 * 50);
  const auto frames = f.conditioning_matrix();
  for (int t = 0; t < f.num_frames; ++t)
    for (int s = 0; s < 4; ++s)
      for (int d = 0; d < 50; ++d)
        CHECK(up[(static_cast<std::size_t>(t) * 4 + s) * 50 + d] ==
              frames[static_cast<std::size_t>(t) * 50 + d]);
}

TEST_CASE("wav io: round trip at 16-bit precision") {
  const auto wave = testsup::sine(330.0, 0.2);
  const std::string dir = testsup::temp_dir("wav");
  dsp::write_wav(dir + "/x.wav", wave);
  const auto back = dsp::read_wav(dir + "/x.wav");
  CHECK(back.sample_rate == wave.sample_rate);
  REQUIRE(back.samples.size() == wave.samples.size());
  for (std::size_t i = 0; i < wave.samples.size(); ++i)
    CHECK(back.samples[i] == doctest::Approx(wave.samples[i]).epsilon(1e-4).scale(1.0));
}

TEST_CASE("resample: tone survives a downsample at the right frequency") {
  const auto wave = testsup::sine(440.0, 0.5, 48000);
  const auto down = dsp::resample(wave, 24000);
  CHECK(down.sample_rate == 24000);
  CHECK(down.samples.size() == wave.samples.size() / 2);
  const auto spec = dsp::stft_magnitude(down, 2048, 256, 1024);
  int arg = 0;
  const int t = spec.num_frames / 2;
  for (int b = 1; b < spec.num_bins; ++b)
    if (spec.at(t, b) > spec.at(t, arg)) arg = b;
  CHECK(std::abs(arg - static_cast<int>(std::lround(440.0 * 2048 / 24000))) <= 1);
}
