#include "cycnpf/pwg.hpp"

#include <algorithm>
#include <cmath>

#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::pwg {

ModelPtr make_model(const PwgConfig& cfg, std::uint64_t schema_hash, std::uint64_t seed) {
  auto model = std::make_unique<PwgModel>();
  model->cfg = cfg;
  model->schema_hash = schema_hash;
  Rng rng(seed);
  model->params = nets::register_pwg(model->graph, cfg.dims, rng);
  return model;
}

namespace {

ad::Var<float> noise_rows_var(const std::vector<float>& noise) {
  return ad::constant<float>({static_cast<int>(noise.size()), 1}, std::vector<float>(noise));
}

std::vector<float> draw_noise(std::size_t n, Rng& rng) {
  std::vector<float> noise(n);
  for (auto& v : noise) v = static_cast<float>(rng.normal());
  return noise;
}

}  // namespace

dsp::Waveform generate_from_noise(const PwgModel& model, const std::vector<float>& noise,
                                  const dsp::FeatureSequence& features) {
  const int hop = model.cfg.hop_size;
  const std::size_t total = static_cast<std::size_t>(features.num_frames) * hop;
  if (noise.size() != total)
    throw ShapeError("pwg_generate: noise length " + std::to_string(noise.size()) +
                     " != conditioning length " + std::to_string(total));
  const std::vector<float> cond = dsp::upsample_conditioning(features, hop);
  auto out = nets::pwg_generator_tape<float>(model.params, model.cfg.dims, noise_rows_var(noise),
                                             cond);
  dsp::Waveform w;
  w.sample_rate = features.sample_rate;
  w.samples.assign(out->val.begin(), out->val.end());
  dsp::clip_waveform(w);
  return w;
}

dsp::Waveform generate(const PwgModel& model, const dsp::FeatureSequence& features,
                       std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t total = static_cast<std::size_t>(features.num_frames) * model.cfg.hop_size;
  return generate_from_noise(model, draw_noise(total, rng), features);
}

MultiResStftLoss multires_stft_loss(const dsp::Waveform& x, const dsp::Waveform& y,
                                    const std::vector<StftResolution>& resolutions) {
  if (x.samples.size() != y.samples.size())
    throw ShapeError("multires_stft_loss: waveform lengths differ");
  MultiResStftLoss out;
  for (const auto& res : resolutions) {
    const dsp::Spectrogram mx = dsp::stft_magnitude(x, res.fft, res.hop, res.win);
    const dsp::Spectrogram my = dsp::stft_magnitude(y, res.fft, res.hop, res.win);
    double num = 0.0, den = 0.0, lm = 0.0;
    for (std::size_t i = 0; i < mx.mags.size(); ++i) {
      const double d = mx.mags[i] - my.mags[i];
      num += d * d;
      den += mx.mags[i] * mx.mags[i];
      lm += std::fabs(std::log(std::max(mx.mags[i], 1e-7)) - std::log(std::max(my.mags[i], 1e-7)));
    }
    const double sc = std::sqrt(num) / std::sqrt(std::max(den, 1e-30));
    out.spectral_convergence += sc;
    out.log_mag_l1 += lm / static_cast<double>(mx.mags.size());
  }
  const double inv = 1.0 / static_cast<double>(resolutions.size());
  out.spectral_convergence *= inv;
  out.log_mag_l1 *= inv;
  out.total = out.spectral_convergence + out.log_mag_l1;
  return out;
}

namespace {

ad::Var<float> wave_rows(const dsp::Waveform& w) {
  std::vector<float> rows(w.samples.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<float>(w.samples[i]);
  const int n = static_cast<int>(rows.size());
  return ad::constant<float>({n, 1}, std::move(rows));
}

ad::Var<float> stft_total_tape(const PwgModel& model, const ad::Var<float>& fake_flat,
                               const std::vector<float>& real) {
  auto real_var = ad::constant<float>({static_cast<int>(real.size())}, std::vector<float>(real));
  ad::Var<float> acc;
  for (const auto& res : model.cfg.resolutions) {
    auto parts = nets::stft_loss_one<float>(real_var, fake_flat, res.fft, res.hop, res.win);
    auto one = ad::add(parts.sc, parts.log_mag);
    acc = acc ? ad::add(acc, one) : one;
  }
  return ad::scale(acc, 1.0f / static_cast<float>(model.cfg.resolutions.size()));
}

// [T x 1] -> [T] view for the STFT ops
ad::Var<float> flatten_column(const ad::Var<float>& x) {
  auto out = ad::make_node<float>({x->shape[0]}, {x});
  std::copy(x->val.begin(), x->val.end(), out->val.begin());
  out->backward_fn = [](ad::Tensor<float>& self) {
    auto& x = *self.parents[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < x.numel(); ++i) x.grad[i] += self.grad[i];
  };
  return out;
}

}  // namespace

LsganLosses lsgan_losses(const PwgModel& model, const dsp::Waveform& real,
                         const dsp::Waveform& fake) {
  if (real.samples.size() != fake.samples.size())
    throw ShapeError("lsgan_losses: waveform lengths differ");
  auto d_real = nets::pwg_discriminator_tape<float>(model.params, model.cfg.dims, wave_rows(real));
  auto d_fake = nets::pwg_discriminator_tape<float>(model.params, model.cfg.dims, wave_rows(fake));
  LsganLosses out;
  out.d_loss = static_cast<double>(
      ad::add(ad::mean(ad::square(ad::add_const(d_real, -1.0f))), ad::mean(ad::square(d_fake)))
          ->scalar());
  out.g_adv_loss =
      static_cast<double>(ad::mean(ad::square(ad::add_const(d_fake, -1.0f)))->scalar());
  return out;
}

TrainStats train(PwgModel& model,
                 const std::vector<std::pair<dsp::FeatureSequence, dsp::Waveform>>& dataset,
                 long steps, std::uint64_t seed) {
  if (dataset.empty()) throw TrainError("pwg training needs data");
  const int hop = model.cfg.hop_size;

  struct Item {
    std::vector<float> wave;
    std::vector<float> cond;
    int samples = 0;
  };
  std::vector<Item> items;
  for (const auto& [features, wave] : dataset) {
    Item it;
    it.samples = std::min<int>(features.num_frames * hop, static_cast<int>(wave.samples.size()));
    it.samples = (it.samples / hop) * hop;
    if (it.samples < hop) throw TrainError("pwg training clip shorter than one frame");
    it.wave.resize(static_cast<std::size_t>(it.samples));
    for (int i = 0; i < it.samples; ++i) it.wave[static_cast<std::size_t>(i)] = static_cast<float>(wave.samples[static_cast<std::size_t>(i)]);
    it.cond = dsp::upsample_conditioning(features, hop);
    it.cond.resize(static_cast<std::size_t>(it.samples) * dsp::kConditioningDim);
    items.push_back(std::move(it));
  }

  // Two optimizers over one registry: each step updates only its own
  // name-prefixed parameter group.
  ad::AdamState<float> gen_opt, disc_opt;
  ad::AdamConfig gen_cfg, disc_cfg;
  gen_cfg.lr = model.cfg.gen_lr;
  disc_cfg.lr = model.cfg.disc_lr;

  Rng rng(seed);
  TrainStats stats;
  double window_loss = 0.0;
  long window_count = 0;
  const long window = 50;
  double first_window = -1.0;

  for (long step = 0; step < steps; ++step) {
    const auto& it = items[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(items.size()) - 1))];
    const int seg = std::min(model.cfg.segment_samples, it.samples);
    const int max_off = it.samples - seg;
    const int off = max_off > 0 ? static_cast<int>(rng.uniform_int(0, max_off)) : 0;

    std::vector<float> real(it.wave.begin() + off, it.wave.begin() + off + seg);
    std::vector<float> cond(it.cond.begin() + static_cast<std::size_t>(off) * dsp::kConditioningDim,
                            it.cond.begin() + static_cast<std::size_t>(off + seg) * dsp::kConditioningDim);
    const std::vector<float> noise = draw_noise(static_cast<std::size_t>(seg), rng);

    auto fake_rows = nets::pwg_generator_tape<float>(model.params, model.cfg.dims,
                                                     noise_rows_var(noise), cond);
    auto fake_flat = flatten_column(fake_rows);
    auto gen_loss = stft_total_tape(model, fake_flat, real);
    const bool adversarial = model.global_step >= model.cfg.warmup_steps;
    if (adversarial) {
      auto d_fake = nets::pwg_discriminator_tape<float>(model.params, model.cfg.dims, fake_rows);
      auto g_adv = ad::mean(ad::square(ad::add_const(d_fake, -1.0f)));
      gen_loss = ad::add(gen_loss, ad::scale(g_adv, static_cast<float>(model.cfg.lambda_adv)));
    }
    const double stft_v = static_cast<double>(gen_loss->scalar());
    if (!std::isfinite(stft_v))
      throw TrainError("non-finite pwg generator loss at step " + std::to_string(model.global_step));
    model.graph.backward(gen_loss);
    ad::adam_step(model.graph, gen_opt, gen_cfg, "gen.");

    if (adversarial) {
      auto real_rows = ad::constant<float>({seg, 1}, std::vector<float>(real));
      auto fake_detached = ad::detach(fake_rows);
      auto d_real = nets::pwg_discriminator_tape<float>(model.params, model.cfg.dims, real_rows);
      auto d_fake = nets::pwg_discriminator_tape<float>(model.params, model.cfg.dims, fake_detached);
      auto d_loss = ad::add(ad::mean(ad::square(ad::add_const(d_real, -1.0f))),
                            ad::mean(ad::square(d_fake)));
      if (!std::isfinite(static_cast<double>(d_loss->scalar())))
        throw TrainError("non-finite pwg discriminator loss at step " + std::to_string(model.global_step));
      model.graph.backward(d_loss);
      ad::adam_step(model.graph, disc_opt, disc_cfg, "disc.");
    }
    ++model.global_step;

    window_loss += stft_v;
    if (++window_count == window || step + 1 == steps) {
      const double mean_loss = window_loss / window_count;
      model.stft_loss_history.push_back(mean_loss);
      if (first_window < 0.0) first_window = mean_loss;
      stats.last_window_stft = mean_loss;
      window_loss = 0.0;
      window_count = 0;
    }
  }
  stats.first_window_stft = first_window < 0.0 ? 0.0 : first_window;
  return stats;
}

void save(const PwgModel& model, const std::string& base_path) {
  nlohmann::json hp;
  hp["gen_layers"] = model.cfg.dims.gen_layers;
  hp["gen_cycles"] = model.cfg.dims.gen_cycles;
  hp["gen_channels"] = model.cfg.dims.gen_channels;
  hp["skip_channels"] = model.cfg.dims.skip_channels;
  hp["aux_channels"] = model.cfg.dims.aux_channels;
  hp["disc_layers"] = model.cfg.dims.disc_layers;
  hp["disc_channels"] = model.cfg.dims.disc_channels;
  hp["leaky_slope"] = model.cfg.dims.leaky_slope;
  hp["hop_size"] = model.cfg.hop_size;
  hp["lambda_adv"] = model.cfg.lambda_adv;
  hp["warmup_steps"] = model.cfg.warmup_steps;
  hp["gen_lr"] = model.cfg.gen_lr;
  hp["disc_lr"] = model.cfg.disc_lr;
  hp["segment_samples"] = model.cfg.segment_samples;
  auto& res = hp["resolutions"] = nlohmann::json::array();
  for (const auto& r : model.cfg.resolutions) res.push_back({r.fft, r.hop, r.win});
  hp["schema_hash"] = model.schema_hash;
  hp["global_step"] = model.global_step;
  hp["stft_loss_history"] = model.stft_loss_history;
  ad::save_checkpoint(base_path, "pwg", hp, model.graph);
}

ModelPtr load(const std::string& base_path, std::uint64_t expected_schema_hash,
              bool load_discriminator) {
  const ad::CheckpointData ckpt = ad::load_checkpoint(base_path);
  if (ckpt.kind != "pwg") throw DataError("checkpoint kind is '" + ckpt.kind + "', expected 'pwg'");
  PwgConfig cfg;
  cfg.dims.gen_layers = ckpt.hparams.at("gen_layers").get<int>();
  cfg.dims.gen_cycles = ckpt.hparams.at("gen_cycles").get<int>();
  cfg.dims.gen_channels = ckpt.hparams.at("gen_channels").get<int>();
  cfg.dims.skip_channels = ckpt.hparams.at("skip_channels").get<int>();
  cfg.dims.aux_channels = ckpt.hparams.at("aux_channels").get<int>();
  cfg.dims.disc_layers = ckpt.hparams.at("disc_layers").get<int>();
  cfg.dims.disc_channels = ckpt.hparams.at("disc_channels").get<int>();
  cfg.dims.leaky_slope = ckpt.hparams.at("leaky_slope").get<double>();
  cfg.hop_size = ckpt.hparams.at("hop_size").get<int>();
  cfg.lambda_adv = ckpt.hparams.value("lambda_adv", cfg.lambda_adv);
  cfg.warmup_steps = ckpt.hparams.value("warmup_steps", cfg.warmup_steps);
  cfg.gen_lr = ckpt.hparams.value("gen_lr", cfg.gen_lr);
  cfg.disc_lr = ckpt.hparams.value("disc_lr", cfg.disc_lr);
  cfg.segment_samples = ckpt.hparams.value("segment_samples", cfg.segment_samples);
  cfg.resolutions.clear();
  for (const auto& r : ckpt.hparams.at("resolutions"))
    cfg.resolutions.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>()});

  const std::uint64_t stored_hash = ckpt.hparams.at("schema_hash").get<std::uint64_t>();
  if (expected_schema_hash != 0 && stored_hash != expected_schema_hash)
    throw DataError("pwg checkpoint feature schema does not match the configured analyzers");

  auto model = make_model(cfg, stored_hash, 0);
  ad::apply_checkpoint(ckpt, model->graph, load_discriminator ? "" : "gen.");
  model->has_discriminator = load_discriminator;
  model->global_step = ckpt.hparams.value("global_step", 0L);
  model->stft_loss_history = ckpt.hparams.value("stft_loss_history", std::vector<double>{});
  return model;
}

}  // namespace cycnpf::pwg
