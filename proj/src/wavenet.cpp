#include "cycnpf/wavenet.hpp"

#include <algorithm>
#include <cmath>

#include "cycnpf/dsp/mulaw.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::wavenet {

int receptive_field(const WaveNetConfig& cfg) { return cfg.dims.receptive_field(); }

ModelPtr make_model(const WaveNetConfig& cfg, std::uint64_t schema_hash, std::uint64_t seed) {
  auto model = std::make_unique<WaveNetModel>();
  model->cfg = cfg;
  model->schema_hash = schema_hash;
  Rng rng(seed);
  model->params = nets::register_wavenet(model->graph, cfg.dims, rng);
  return model;
}

namespace {

std::vector<int> encode_wave(const dsp::Waveform& w, std::size_t count) {
  std::vector<int> codes(count);
  for (std::size_t i = 0; i < count; ++i) codes[i] = dsp::mulaw_encode(w.samples[i]);
  return codes;
}

// input_codes[t] = codes[t-1]; the first position uses prev_code (encode(0)
// at an utterance head, the true neighbour inside a segment).
std::vector<int> shift_codes(const std::vector<int>& codes, int prev_code) {
  std::vector<int> out(codes.size());
  if (codes.empty()) return out;
  out[0] = prev_code;
  for (std::size_t i = 1; i < codes.size(); ++i) out[i] = codes[i - 1];
  return out;
}

}  // namespace

std::vector<float> teacher_logits(const WaveNetModel& model, const std::vector<int>& codes,
                                  const std::vector<float>& cond) {
  const int silence = dsp::mulaw_encode(0.0);
  auto logits = nets::wavenet_teacher_tape<float>(model.params, model.cfg.dims,
                                                  shift_codes(codes, silence), cond);
  return logits->val;
}

TrainStats train(WaveNetModel& model,
                 const std::vector<std::pair<dsp::FeatureSequence, dsp::Waveform>>& dataset,
                 long steps, std::uint64_t seed) {
  if (dataset.empty()) throw TrainError("wavenet training needs data");
  const int hop = model.cfg.hop_size;
  const int silence = dsp::mulaw_encode(0.0);

  struct Item {
    std::vector<int> codes;
    std::vector<float> cond;
    int samples = 0;
  };
  std::vector<Item> items;
  for (const auto& [features, wave] : dataset) {
    Item it;
    it.samples = std::min<int>(features.num_frames * hop, static_cast<int>(wave.samples.size()));
    it.samples = (it.samples / hop) * hop;
    if (it.samples < hop) throw TrainError("wavenet training clip shorter than one frame");
    it.codes = encode_wave(wave, static_cast<std::size_t>(it.samples));
    it.cond = dsp::upsample_conditioning(features, hop);
    it.cond.resize(static_cast<std::size_t>(it.samples) * dsp::kConditioningDim);
    items.push_back(std::move(it));
  }

  ad::AdamState<float> opt;
  ad::AdamConfig opt_cfg;
  opt_cfg.lr = model.cfg.lr;
  Rng rng(seed);

  TrainStats stats;
  double window_loss = 0.0;
  long window_count = 0;
  const long window = 100;
  double first_window = -1.0;

  for (long step = 0; step < steps; ++step) {
    const auto& it = items[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(items.size()) - 1))];
    const int seg = std::min(model.cfg.segment_samples, it.samples);
    const int max_off = it.samples - seg;
    const int off = max_off > 0 ? static_cast<int>(rng.uniform_int(0, max_off)) : 0;

    std::vector<int> codes(it.codes.begin() + off, it.codes.begin() + off + seg);
    std::vector<float> cond(it.cond.begin() + static_cast<std::size_t>(off) * dsp::kConditioningDim,
                            it.cond.begin() + static_cast<std::size_t>(off + seg) * dsp::kConditioningDim);
    const int prev = off > 0 ? it.codes[static_cast<std::size_t>(off - 1)] : silence;

    auto logits = nets::wavenet_teacher_tape<float>(model.params, model.cfg.dims,
                                                    shift_codes(codes, prev), cond);
    auto loss = ad::softmax_cross_entropy(logits, codes);
    const double loss_v = static_cast<double>(loss->scalar());
    if (!std::isfinite(loss_v))
      throw TrainError("non-finite wavenet loss at step " + std::to_string(model.global_step));

    model.graph.backward(loss);
    ad::adam_step(model.graph, opt, opt_cfg);
    ++model.global_step;

    window_loss += loss_v;
    if (++window_count == window || step + 1 == steps) {
      const double mean_loss = window_loss / window_count;
      model.loss_history.push_back(mean_loss);
      if (first_window < 0.0) first_window = mean_loss;
      stats.last_window_loss = mean_loss;
      window_loss = 0.0;
      window_count = 0;
    }
  }
  stats.first_window_loss = first_window < 0.0 ? 0.0 : first_window;
  if (!dataset.empty()) stats.top1_accuracy = teacher_top1_accuracy(model, dataset[0].first, dataset[0].second);
  return stats;
}

double teacher_top1_accuracy(const WaveNetModel& model, const dsp::FeatureSequence& features,
                             const dsp::Waveform& wave) {
  const int hop = model.cfg.hop_size;
  int samples = std::min<int>(features.num_frames * hop, static_cast<int>(wave.samples.size()));
  samples = (samples / hop) * hop;
  const std::vector<int> codes = encode_wave(wave, static_cast<std::size_t>(samples));
  std::vector<float> cond = dsp::upsample_conditioning(features, hop);
  cond.resize(static_cast<std::size_t>(samples) * dsp::kConditioningDim);
  const std::vector<float> logits = teacher_logits(model, codes, cond);

  const int classes = model.cfg.dims.quantization;
  long correct = 0;
  for (int t = 0; t < samples; ++t) {
    const float* row = &logits[static_cast<std::size_t>(t) * classes];
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    if (best == codes[static_cast<std::size_t>(t)]) ++correct;
  }
  return static_cast<double>(correct) / samples;
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

// Per-layer ring buffer of the layer's input activations, sized to the
// dilation so lookback costs O(1) per sample.
struct LayerState {
  std::vector<float> ring;  // [dilation x R]
  int dilation = 1;
  long filled = 0;

  void init(int d, int channels) {
    dilation = d;
    ring.assign(static_cast<std::size_t>(d) * channels, 0.0f);
    filled = 0;
  }
  const float* past(long t, int channels) const {
    // input at time t - dilation; zeros before the sequence start
    if (t - dilation < 0) return nullptr;
    return &ring[static_cast<std::size_t>((t - dilation) % dilation) * channels];
  }
  void push(long t, const float* x, int channels) {
    std::copy(x, x + channels, ring.begin() + static_cast<std::size_t>(t % dilation) * channels);
    filled = t + 1;
  }
};

int sample_code(const float* logits, int classes, Sampling mode, double temperature, Rng& rng) {
  if (mode == Sampling::kArgmax) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (logits[c] > logits[best]) best = c;
    return best;
  }
  // categorical with temperature, inverse-CDF on the softmax
  double mx = logits[0];
  for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(logits[c]));
  std::vector<double> p(static_cast<std::size_t>(classes));
  double z = 0.0;
  const double inv_t = 1.0 / std::max(temperature, 1e-6);
  for (int c = 0; c < classes; ++c) {
    p[static_cast<std::size_t>(c)] = std::exp((logits[c] - mx) * inv_t);
    z += p[static_cast<std::size_t>(c)];
  }
  double u = rng.uniform() * z;
  for (int c = 0; c < classes; ++c) {
    u -= p[static_cast<std::size_t>(c)];
    if (u <= 0.0) return c;
  }
  return classes - 1;
}

}  // namespace

dsp::Waveform generate(const WaveNetModel& model, const dsp::FeatureSequence& features,
                       std::uint64_t seed) {
  const auto& dims = model.cfg.dims;
  const int r = dims.residual_channels;
  const int s = dims.skip_channels;
  const int classes = dims.quantization;
  const int hop = model.cfg.hop_size;
  const long total = static_cast<long>(features.num_frames) * hop;
  const auto dils = dims.flat_dilations();
  const int num_layers = static_cast<int>(dils.size());

  const std::vector<float> cond = dsp::upsample_conditioning(features, hop);

  std::vector<LayerState> states(static_cast<std::size_t>(num_layers));
  for (int l = 0; l < num_layers; ++l) states[static_cast<std::size_t>(l)].init(dils[static_cast<std::size_t>(l)], r);

  // 2R-wide conditioning projection per sample position is recomputed per
  // frame only (nearest-frame hold keeps it constant within a frame)
  std::vector<std::vector<float>> cond_proj(static_cast<std::size_t>(num_layers),
                                            std::vector<float>(static_cast<std::size_t>(2) * r));

  dsp::Waveform out;
  out.sample_rate = features.sample_rate;
  out.samples.assign(static_cast<std::size_t>(total), 0.0);

  Rng rng(seed);
  int prev_code = dsp::mulaw_encode(0.0);

  std::vector<float> x(static_cast<std::size_t>(r));
  std::vector<float> xin(static_cast<std::size_t>(r));
  std::vector<float> z(static_cast<std::size_t>(2) * r);
  std::vector<float> gated(static_cast<std::size_t>(r));
  std::vector<float> skip_vec(static_cast<std::size_t>(s));
  std::vector<float> res_vec(static_cast<std::size_t>(r));
  std::vector<float> skip_sum(static_cast<std::size_t>(s));
  std::vector<float> hmid(static_cast<std::size_t>(s));
  std::vector<float> logits(static_cast<std::size_t>(classes));

  const auto& p = model.params;
  for (long t = 0; t < total; ++t) {
    if (t % hop == 0) {
      const float* crow = &cond[static_cast<std::size_t>(t) * dsp::kConditioningDim];
      for (int l = 0; l < num_layers; ++l) {
        float* proj = cond_proj[static_cast<std::size_t>(l)].data();
        std::fill(proj, proj + 2 * r, 0.0f);
        const float* cw = p.layers[static_cast<std::size_t>(l)].cond_w->val.data();
        for (int i = 0; i < dims.aux_channels; ++i) {
          const float cv = crow[i];
          const float* wr = &cw[static_cast<std::size_t>(i) * 2 * r];
          for (int o = 0; o < 2 * r; ++o) proj[o] += cv * wr[o];
        }
      }
    }

    const float* emb = &p.embed->val[static_cast<std::size_t>(prev_code) * r];
    std::copy(emb, emb + r, x.begin());
    std::fill(skip_sum.begin(), skip_sum.end(), 0.0f);

    for (int l = 0; l < num_layers; ++l) {
      auto& layer = p.layers[static_cast<std::size_t>(l)];
      auto& state = states[static_cast<std::size_t>(l)];
      std::copy(x.begin(), x.end(), xin.begin());

      // accumulation order mirrors the teacher tape ops exactly, so argmax
      // generation and teacher-forced scoring agree bit for bit:
      // conv (bias, tap0, tap1), then + cond, then gate, then linear heads
      const float* db = layer.dil_b->val.data();
      const float* proj = cond_proj[static_cast<std::size_t>(l)].data();
      for (int o = 0; o < 2 * r; ++o) z[static_cast<std::size_t>(o)] = db[o];
      const float* past = state.past(t, r);
      const float* w = layer.dil_w->val.data();
      if (past) {
        for (int i = 0; i < r; ++i) {
          const float xv = past[i];
          const float* wr = &w[static_cast<std::size_t>(i) * 2 * r];
          for (int o = 0; o < 2 * r; ++o) z[static_cast<std::size_t>(o)] += xv * wr[o];
        }
      }
      const float* w1 = &w[static_cast<std::size_t>(r) * 2 * r];
      for (int i = 0; i < r; ++i) {
        const float xv = xin[static_cast<std::size_t>(i)];
        const float* wr = &w1[static_cast<std::size_t>(i) * 2 * r];
        for (int o = 0; o < 2 * r; ++o) z[static_cast<std::size_t>(o)] += xv * wr[o];
      }
      for (int o = 0; o < 2 * r; ++o) z[static_cast<std::size_t>(o)] += proj[o];
      for (int c = 0; c < r; ++c)
        gated[static_cast<std::size_t>(c)] =
            std::tanh(z[static_cast<std::size_t>(c)]) *
            (1.0f / (1.0f + std::exp(-z[static_cast<std::size_t>(r + c)])));

      const float* sw = layer.skip_w->val.data();
      const float* sb = layer.skip_b->val.data();
      for (int o = 0; o < s; ++o) skip_vec[static_cast<std::size_t>(o)] = sb[o];
      for (int i = 0; i < r; ++i) {
        const float gv = gated[static_cast<std::size_t>(i)];
        const float* wr = &sw[static_cast<std::size_t>(i) * s];
        for (int o = 0; o < s; ++o) skip_vec[static_cast<std::size_t>(o)] += gv * wr[o];
      }
      if (l == 0) {
        std::copy(skip_vec.begin(), skip_vec.end(), skip_sum.begin());
      } else {
        for (int o = 0; o < s; ++o) skip_sum[static_cast<std::size_t>(o)] += skip_vec[static_cast<std::size_t>(o)];
      }

      state.push(t, xin.data(), r);
      if (l + 1 < num_layers) {
        const float* rw = layer.res_w->val.data();
        const float* rb = layer.res_b->val.data();
        for (int o = 0; o < r; ++o) res_vec[static_cast<std::size_t>(o)] = rb[o];
        for (int i = 0; i < r; ++i) {
          const float gv = gated[static_cast<std::size_t>(i)];
          const float* wr = &rw[static_cast<std::size_t>(i) * r];
          for (int o = 0; o < r; ++o) res_vec[static_cast<std::size_t>(o)] += gv * wr[o];
        }
        for (int o = 0; o < r; ++o)
          x[static_cast<std::size_t>(o)] = xin[static_cast<std::size_t>(o)] + res_vec[static_cast<std::size_t>(o)];
      }
    }

    for (int o = 0; o < s; ++o)
      skip_sum[static_cast<std::size_t>(o)] = std::max(skip_sum[static_cast<std::size_t>(o)], 0.0f);
    const float* o1w = p.out1_w->val.data();
    const float* o1b = p.out1_b->val.data();
    for (int o = 0; o < s; ++o) hmid[static_cast<std::size_t>(o)] = o1b[o];
    for (int i = 0; i < s; ++i) {
      const float v = skip_sum[static_cast<std::size_t>(i)];
      const float* wr = &o1w[static_cast<std::size_t>(i) * s];
      for (int o = 0; o < s; ++o) hmid[static_cast<std::size_t>(o)] += v * wr[o];
    }
    for (int o = 0; o < s; ++o) hmid[static_cast<std::size_t>(o)] = std::max(hmid[static_cast<std::size_t>(o)], 0.0f);
    const float* o2w = p.out2_w->val.data();
    const float* o2b = p.out2_b->val.data();
    for (int o = 0; o < classes; ++o) logits[static_cast<std::size_t>(o)] = o2b[o];
    for (int i = 0; i < s; ++i) {
      const float v = hmid[static_cast<std::size_t>(i)];
      const float* wr = &o2w[static_cast<std::size_t>(i) * classes];
      for (int o = 0; o < classes; ++o) logits[static_cast<std::size_t>(o)] += v * wr[o];
    }

    const int code = sample_code(logits.data(), classes, model.cfg.sampling,
                                 model.cfg.temperature, rng);
    out.samples[static_cast<std::size_t>(t)] = dsp::mulaw_decode(static_cast<std::uint8_t>(code));
    prev_code = code;
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save(const WaveNetModel& model, const std::string& base_path) {
  nlohmann::json hp;
  hp["dilation_cycles"] = model.cfg.dims.dilation_cycles;
  hp["residual_channels"] = model.cfg.dims.residual_channels;
  hp["skip_channels"] = model.cfg.dims.skip_channels;
  hp["aux_channels"] = model.cfg.dims.aux_channels;
  hp["kernel"] = model.cfg.dims.kernel;
  hp["quantization"] = model.cfg.dims.quantization;
  hp["hop_size"] = model.cfg.hop_size;
  hp["lr"] = model.cfg.lr;
  hp["segment_samples"] = model.cfg.segment_samples;
  hp["schema_hash"] = model.schema_hash;
  hp["global_step"] = model.global_step;
  hp["loss_history"] = model.loss_history;
  ad::save_checkpoint(base_path, "wavenet", hp, model.graph);
}

ModelPtr load(const std::string& base_path, std::uint64_t expected_schema_hash) {
  const ad::CheckpointData ckpt = ad::load_checkpoint(base_path);
  if (ckpt.kind != "wavenet")
    throw DataError("checkpoint kind is '" + ckpt.kind + "', expected 'wavenet'");
  WaveNetConfig cfg;
  cfg.dims.dilation_cycles = ckpt.hparams.at("dilation_cycles").get<std::vector<std::vector<int>>>();
  cfg.dims.residual_channels = ckpt.hparams.at("residual_channels").get<int>();
  cfg.dims.skip_channels = ckpt.hparams.at("skip_channels").get<int>();
  cfg.dims.aux_channels = ckpt.hparams.at("aux_channels").get<int>();
  cfg.dims.kernel = ckpt.hparams.at("kernel").get<int>();
  cfg.dims.quantization = ckpt.hparams.at("quantization").get<int>();
  cfg.hop_size = ckpt.hparams.at("hop_size").get<int>();
  cfg.lr = ckpt.hparams.value("lr", cfg.lr);
  cfg.segment_samples = ckpt.hparams.value("segment_samples", cfg.segment_samples);

  const std::uint64_t stored_hash = ckpt.hparams.at("schema_hash").get<std::uint64_t>();
  if (expected_schema_hash != 0 && stored_hash != expected_schema_hash)
    throw DataError("wavenet checkpoint feature schema does not match the configured analyzers");

  auto model = make_model(cfg, stored_hash, 0);
  ad::apply_checkpoint(ckpt, model->graph);
  model->global_step = ckpt.hparams.value("global_step", 0L);
  model->loss_history = ckpt.hparams.value("loss_history", std::vector<double>{});
  return model;
}

}  // namespace cycnpf::wavenet
