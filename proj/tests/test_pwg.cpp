#include "doctest.h"

#include <cmath>

#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/pwg.hpp"
#include "cycnpf/util.hpp"
#include "support.hpp"

using namespace cycnpf;

namespace {

pwg::PwgConfig tiny_config() {
  pwg::PwgConfig cfg;
  cfg.dims.gen_layers = 6;
  cfg.dims.gen_cycles = 2;
  cfg.dims.gen_channels = 8;
  cfg.dims.skip_channels = 8;
  cfg.dims.disc_layers = 4;
  cfg.dims.disc_channels = 8;
  cfg.segment_samples = 1200;
  cfg.resolutions = {{256, 60, 240}, {512, 120, 480}};
  return cfg;
}

dsp::FeatureSequence analyzed(double f0, double seconds, std::uint64_t seed) {
  auto wave = testsup::sawtooth(f0, seconds);
  Rng rng(seed);
  for (auto& s : wave.samples) s += 0.01 * rng.normal();
  dsp::clip_waveform(wave);
  return dsp::assemble_features(wave, dsp::AnalysisConfig{});
}

// Direct-DFT reimplementation of the multi-resolution loss.
pwg::MultiResStftLoss stft_loss_oracle(const dsp::Waveform& x, const dsp::Waveform& y,
                                       const std::vector<pwg::StftResolution>& res) {
  pwg::MultiResStftLoss out;
  for (const auto& r : res) {
    const auto px = dsp::reflect_pad(x.samples, r.win / 2);
    const auto py = dsp::reflect_pad(y.samples, r.win / 2);
    const auto window = dsp::hann_window(r.win);
    const int frames = static_cast<int>((px.size() - r.win) / r.hop) + 1;
    double num = 0.0, den = 0.0, lm = 0.0;
    int count = 0;
    for (int t = 0; t < frames; ++t) {
      std::vector<double> fx(static_cast<std::size_t>(r.win)), fy(static_cast<std::size_t>(r.win));
      for (int i = 0; i < r.win; ++i) {
        fx[static_cast<std::size_t>(i)] = px[static_cast<std::size_t>(t) * r.hop + i] * window[static_cast<std::size_t>(i)];
        fy[static_cast<std::size_t>(i)] = py[static_cast<std::size_t>(t) * r.hop + i] * window[static_cast<std::size_t>(i)];
      }
      const auto mx = testsup::direct_dft_mag(fx, r.fft);
      const auto my = testsup::direct_dft_mag(fy, r.fft);
      for (std::size_t b = 0; b < mx.size(); ++b) {
        const double d = mx[b] - my[b];
        num += d * d;
        den += mx[b] * mx[b];
        lm += std::fabs(std::log(std::max(mx[b], 1e-7)) - std::log(std::max(my[b], 1e-7)));
        ++count;
      }
    }
    out.spectral_convergence += std::sqrt(num) / std::sqrt(std::max(den, 1e-30));
    out.log_mag_l1 += lm / count;
  }
  out.spectral_convergence /= static_cast<double>(res.size());
  out.log_mag_l1 /= static_cast<double>(res.size());
  out.total = out.spectral_convergence + out.log_mag_l1;
  return out;
}

}  // namespace

TEST_CASE("pwg_generate: length preservation and noise determinism") {
  auto model = pwg::make_model(tiny_config(), 1, 3);
  for (double seconds : {0.05, 0.3}) {
    const auto feats = analyzed(140.0, seconds, 1);
    const auto a = pwg::generate(*model, feats, 42);
    const auto b = pwg::generate(*model, feats, 42);
    CHECK(a.samples.size() == static_cast<std::size_t>(feats.num_frames) * 120);
    CHECK(a.samples == b.samples);
  }
  const auto feats = analyzed(140.0, 0.1, 1);
  std::vector<float> bad_noise(10, 0.0f);
  CHECK_THROWS_AS(pwg::generate_from_noise(*model, bad_noise, feats), ShapeError);
}

TEST_CASE("pwg generator: conditioning reach is bounded by the receptive radius") {
  auto cfg = tiny_config();
  auto model = pwg::make_model(cfg, 1, 5);
  const auto feats = analyzed(150.0, 0.2, 2);
  const int hop = 120;
  const int radius = cfg.dims.gen_receptive_radius();

  Rng rng(9);
  std::vector<float> noise(static_cast<std::size_t>(feats.num_frames) * hop);
  for (auto& v : noise) v = static_cast<float>(rng.normal());
  const auto base = pwg::generate_from_noise(*model, noise, feats);

  dsp::FeatureSequence bumped = feats;
  const int frame = feats.num_frames / 2;
  for (int d = 1; d <= 45; ++d) bumped.mcep_at(frame, d) += 0.5;
  const auto after = pwg::generate_from_noise(*model, noise, bumped);

  const int lo = frame * hop - radius;
  const int hi = (frame + 1) * hop + radius;
  for (int i = 0; i < static_cast<int>(base.samples.size()); ++i) {
    if (i < lo || i >= hi)
      CHECK(base.samples[static_cast<std::size_t>(i)] == after.samples[static_cast<std::size_t>(i)]);
  }
  bool changed = false;
  for (int i = std::max(0, lo); i < hi && i < static_cast<int>(base.samples.size()); ++i)
    changed = changed || base.samples[static_cast<std::size_t>(i)] != after.samples[static_cast<std::size_t>(i)];
  CHECK(changed);
}

TEST_CASE("pwg generator: halves with receptive margin match the full pass") {
  auto cfg = tiny_config();
  auto model = pwg::make_model(cfg, 1, 6);
  const auto feats = analyzed(130.0, 0.2, 3);
  const int hop = 120;
  const int total = feats.num_frames * hop;
  const int radius = cfg.dims.gen_receptive_radius();
  const int margin_frames = (radius + hop - 1) / hop + 1;

  Rng rng(10);
  std::vector<float> noise(static_cast<std::size_t>(total));
  for (auto& v : noise) v = static_cast<float>(rng.normal());
  const auto full = pwg::generate_from_noise(*model, noise, feats);

  // left half plus margin
  const int half_frames = feats.num_frames / 2;
  const int left_frames = half_frames + margin_frames;
  dsp::FeatureSequence left = feats;
  left.num_frames = left_frames;
  left.mcep.resize(static_cast<std::size_t>(left_frames) * dsp::kMcepDim);
  left.log_f0.resize(static_cast<std::size_t>(left_frames));
  left.uv.resize(static_cast<std::size_t>(left_frames));
  left.coded_ap.resize(static_cast<std::size_t>(left_frames) * dsp::kApDim);
  std::vector<float> left_noise(noise.begin(), noise.begin() + static_cast<std::size_t>(left_frames) * hop);
  const auto left_out = pwg::generate_from_noise(*model, left_noise, left);

  for (int i = 0; i < half_frames * hop; ++i)
    CHECK(left_out.samples[static_cast<std::size_t>(i)] ==
          doctest::Approx(full.samples[static_cast<std::size_t>(i)]).epsilon(1e-6).scale(1.0));
}

TEST_CASE("multires_stft_loss: identity, scaling closed form, DFT oracle") {
  const auto x = testsup::sawtooth(140.0, 0.15);
  const auto res = tiny_config().resolutions;

  const auto zero = pwg::multires_stft_loss(x, x, res);
  CHECK(zero.spectral_convergence == 0.0);
  CHECK(zero.log_mag_l1 == 0.0);
  CHECK(zero.total == 0.0);

  // y = 2x against reference x: SC = ||X - 2X|| / ||X|| = 1, LM = ln 2
  auto doubled = x;
  for (auto& s : doubled.samples) s *= 2.0;
  doubled.samples[0] = std::min(1.0, doubled.samples[0]);  // keep unclipped content
  auto y = x;
  for (auto& s : y.samples) s *= 0.5;
  auto x2 = y;
  for (auto& s : x2.samples) s *= 2.0;  // exactly 2y without clipping
  const auto scaled = pwg::multires_stft_loss(y, x2, res);
  CHECK(scaled.spectral_convergence == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(scaled.log_mag_l1 == doctest::Approx(std::log(2.0)).epsilon(2e-3));

  const auto noise = testsup::white_noise(0.15, 4);
  const auto got = pwg::multires_stft_loss(x, noise, res);
  const auto want = stft_loss_oracle(x, noise, res);
  CHECK(got.spectral_convergence == doctest::Approx(want.spectral_convergence).epsilon(1e-9));
  CHECK(got.log_mag_l1 == doctest::Approx(want.log_mag_l1).epsilon(1e-9));
  CHECK(got.total == doctest::Approx(want.total).epsilon(1e-9));
  CHECK(got.total >= 0.0);
}

TEST_CASE("tape stft loss equals the plain evaluation") {
  auto model = pwg::make_model(tiny_config(), 1, 7);
  const auto x = testsup::sawtooth(120.0, 0.1);
  const auto n = testsup::white_noise(0.1, 5);
  const auto plain = pwg::multires_stft_loss(x, n, model->cfg.resolutions);

  std::vector<float> xf(x.samples.begin(), x.samples.end());
  std::vector<float> nf(n.samples.begin(), n.samples.end());
  const int xn = static_cast<int>(xf.size());
  const int nn = static_cast<int>(nf.size());
  auto x_var = ad::constant<float>({xn}, std::move(xf));
  auto n_var = ad::constant<float>({nn}, std::move(nf));
  ad::Var<float> acc;
  for (const auto& r : model->cfg.resolutions) {
    auto parts = nets::stft_loss_one<float>(x_var, n_var, r.fft, r.hop, r.win);
    auto one = ad::add(parts.sc, parts.log_mag);
    acc = acc ? ad::add(acc, one) : one;
  }
  const double tape_total = ad::scale(acc, 1.0f / static_cast<float>(model->cfg.resolutions.size()))->scalar();
  CHECK(tape_total == doctest::Approx(plain.total).epsilon(1e-4));
}

TEST_CASE("lsgan_losses: constant-discriminator closed forms") {
  auto model = pwg::make_model(tiny_config(), 1, 8);
  // zero every discriminator weight; the final bias sets D everywhere
  for (auto& w : model->params.disc_w) std::fill(w->val.begin(), w->val.end(), 0.0f);
  for (auto& b : model->params.disc_b) std::fill(b->val.begin(), b->val.end(), 0.0f);
  auto final_bias = model->params.disc_b.back();

  const auto real = testsup::sawtooth(120.0, 0.05);
  const auto fake = testsup::white_noise(0.05, 6);

  final_bias->val[0] = 0.5f;  // D == 0.5 everywhere
  auto l = pwg::lsgan_losses(*model, real, fake);
  CHECK(l.d_loss == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(l.g_adv_loss == doctest::Approx(0.25).epsilon(1e-6));

  final_bias->val[0] = 1.0f;  // D == 1: d_loss = 0 + 1, g_adv = 0
  l = pwg::lsgan_losses(*model, real, fake);
  CHECK(l.d_loss == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(l.g_adv_loss == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));

  final_bias->val[0] = 0.0f;  // D == 0: d_loss = 1 + 0
  l = pwg::lsgan_losses(*model, real, fake);
  CHECK(l.d_loss == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(l.g_adv_loss == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gradient isolation: d_loss on detached fake reaches no generator parameter") {
  auto model = pwg::make_model(tiny_config(), 1, 9);
  const auto feats = analyzed(135.0, 0.05, 7);
  const auto fake = pwg::generate(*model, feats, 3);
  const auto real = testsup::sawtooth(135.0, 0.05);

  std::vector<float> real_rows(real.samples.size());
  for (std::size_t i = 0; i < real_rows.size(); ++i) real_rows[i] = static_cast<float>(real.samples[i]);
  std::vector<float> fake_rows(fake.samples.size());
  for (std::size_t i = 0; i < fake_rows.size(); ++i) fake_rows[i] = static_cast<float>(fake.samples[i]);
  const int n = static_cast<int>(std::min(real_rows.size(), fake_rows.size()));
  real_rows.resize(static_cast<std::size_t>(n));
  fake_rows.resize(static_cast<std::size_t>(n));

  auto d_real = nets::pwg_discriminator_tape<float>(model->params, model->cfg.dims,
                                                    ad::constant<float>({n, 1}, std::move(real_rows)));
  auto d_fake = nets::pwg_discriminator_tape<float>(model->params, model->cfg.dims,
                                                    ad::constant<float>({n, 1}, std::move(fake_rows)));
  auto d_loss = ad::add(ad::mean(ad::square(ad::add_const(d_real, -1.0f))),
                        ad::mean(ad::square(d_fake)));
  model->graph.backward(d_loss);

  bool disc_grads_nonzero = false;
  for (const auto& [name, p] : model->graph.params()) {
    if (name.rfind("gen.", 0) == 0) {
      for (float g : p->grad) CHECK(g == 0.0f);
    } else {
      for (float g : p->grad) disc_grads_nonzero = disc_grads_nonzero || g != 0.0f;
    }
  }
  CHECK(disc_grads_nonzero);
}

TEST_CASE("train: warm-up reduces the stft loss; lambda_adv=0 never trains the discriminator") {
  auto cfg = tiny_config();
  cfg.warmup_steps = 1000;  // stay in pure regression for this test
  cfg.gen_lr = 2e-3;
  auto model = pwg::make_model(cfg, 1, 10);
  const auto feats = analyzed(125.0, 0.3, 8);
  auto wave = testsup::sawtooth(125.0, 0.3);
  dsp::clip_waveform(wave);

  std::vector<float> disc_before;
  for (const auto& [name, p] : model->graph.params())
    if (name.rfind("disc.", 0) == 0) disc_before.insert(disc_before.end(), p->val.begin(), p->val.end());

  const auto stats = pwg::train(*model, {{feats, wave}}, 120, 55);
  CHECK(stats.last_window_stft < stats.first_window_stft);

  std::vector<float> disc_after;
  for (const auto& [name, p] : model->graph.params())
    if (name.rfind("disc.", 0) == 0) disc_after.insert(disc_after.end(), p->val.begin(), p->val.end());
  CHECK(disc_before == disc_after);  // warm-up phase leaves the discriminator untouched
}

TEST_CASE("checkpoint: round trip, optional discriminator load") {
  auto model = pwg::make_model(tiny_config(), 0x77, 11);
  const std::string dir = testsup::temp_dir("pwg_ckpt");
  pwg::save(*model, dir + "/m");

  auto full = pwg::load(dir + "/m", 0x77, true);
  for (const auto& [name, p] : model->graph.params())
    CHECK(full->graph.get(name)->val == p->val);

  auto gen_only = pwg::load(dir + "/m", 0x77, false);
  CHECK_FALSE(gen_only->has_discriminator);
  for (const auto& [name, p] : model->graph.params())
    if (name.rfind("gen.", 0) == 0) CHECK(gen_only->graph.get(name)->val == p->val);

  CHECK_THROWS_AS(pwg::load(dir + "/m", 0x99, true), DataError);
}
