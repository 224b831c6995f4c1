#include "cycnpf/cyclevc.hpp"

#include <algorithm>
#include <cmath>

#include "cycnpf/util.hpp"

namespace cycnpf::cyclevc {

namespace {

constexpr double kStdFloor = 1e-6;

void compute_stats(const std::vector<const dsp::FeatureSequence*>& naturals,
                   std::vector<double>& mean, std::vector<double>& std_dev) {
  const int dim = dsp::kConditioningDim;
  mean.assign(dim, 0.0);
  std_dev.assign(dim, 1.0);
  std::size_t total = 0;
  for (const auto* f : naturals) total += static_cast<std::size_t>(f->num_frames);
  if (total == 0) return;
  std::vector<double> sq(dim, 0.0);
  for (const auto* f : naturals) {
    const auto mat = f->conditioning_matrix();
    for (int t = 0; t < f->num_frames; ++t)
      for (int d = 0; d < dim; ++d) mean[static_cast<std::size_t>(d)] += mat[static_cast<std::size_t>(t) * dim + d];
  }
  for (double& v : mean) v /= static_cast<double>(total);
  for (const auto* f : naturals) {
    const auto mat = f->conditioning_matrix();
    for (int t = 0; t < f->num_frames; ++t)
      for (int d = 0; d < dim; ++d) {
        const double v = mat[static_cast<std::size_t>(t) * dim + d] - mean[static_cast<std::size_t>(d)];
        sq[static_cast<std::size_t>(d)] += v * v;
      }
  }
  for (int d = 0; d < dim; ++d)
    std_dev[static_cast<std::size_t>(d)] = std::max(std::sqrt(sq[static_cast<std::size_t>(d)] / total), kStdFloor);
}

}  // namespace

std::vector<float> CycleVcModel::normalize(const dsp::FeatureSequence& f) const {
  const int dim = dsp::kConditioningDim;
  std::vector<float> mat = f.conditioning_matrix();
  for (int t = 0; t < f.num_frames; ++t)
    for (int d = 0; d < dim; ++d) {
      float& v = mat[static_cast<std::size_t>(t) * dim + d];
      v = static_cast<float>((v - feat_mean[static_cast<std::size_t>(d)]) / feat_std[static_cast<std::size_t>(d)]);
    }
  return mat;
}

std::vector<double> CycleVcModel::denorm_mcep(const std::vector<float>& y, int frames) const {
  const int odim = dims.output_dim;
  std::vector<double> out(static_cast<std::size_t>(frames) * odim);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < odim; ++d)
      out[static_cast<std::size_t>(t) * odim + d] =
          static_cast<double>(y[static_cast<std::size_t>(t) * odim + d]) * feat_std[static_cast<std::size_t>(d)] +
          feat_mean[static_cast<std::size_t>(d)];
  return out;
}

ModelPtr make_model(const CycleVcConfig& cfg, std::uint64_t seed) {
  auto model = std::make_unique<CycleVcModel>();
  model->cfg = cfg;
  model->dims.conv_channels = cfg.conv_channels;
  model->dims.gru_hidden = cfg.gru_hidden;
  Rng rng(seed);
  model->stot = nets::register_conv_module(model->graph, "stot", model->dims, rng);
  model->ttos = nets::register_conv_module(model->graph, "ttos", model->dims, rng);
  model->feat_mean.assign(dsp::kConditioningDim, 0.0);
  model->feat_std.assign(dsp::kConditioningDim, 1.0);
  return model;
}

namespace {

std::vector<float> to_norm(const CycleVcModel& model, const dsp::FeatureSequence& f) {
  return model.normalize(f);
}

double pair_loss_and_step(CycleVcModel& model, const std::vector<float>& a,
                          const std::vector<float>& b, int frames, ad::AdamState<float>* opt,
                          const ad::AdamConfig* opt_cfg) {
  auto parts = nets::cycle_loss_tape(model.stot, model.ttos, a, b, frames, model.dims,
                                     model.cfg.rho);
  const double loss = static_cast<double>(parts.total->scalar());
  if (opt) {
    model.graph.backward(parts.total);
    if (model.cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& [name, p] : model.graph.params())
        for (float g : p->grad) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > model.cfg.grad_clip) {
        const float s = static_cast<float>(model.cfg.grad_clip / norm);
        for (const auto& [name, p] : model.graph.params())
          for (float& g : p->grad) g *= s;
      }
    }
    ad::adam_step(model.graph, *opt, *opt_cfg);
  }
  return loss;
}

}  // namespace

TrainReport train_cyclevc(CycleVcModel& model,
                          const std::vector<std::pair<dsp::FeatureSequence, dsp::FeatureSequence>>& pairs,
                          const std::vector<std::pair<dsp::FeatureSequence, dsp::FeatureSequence>>& valid_pairs,
                          std::uint64_t seed) {
  if (pairs.empty()) throw TrainError("cyclevc training needs at least one pair");
  for (const auto& [a, b] : pairs)
    if (a.num_frames != b.num_frames)
      throw TrainError("cyclevc training pair not frame-aligned (" + std::to_string(a.num_frames) +
                       " vs " + std::to_string(b.num_frames) + " frames); align first");

  // normalization statistics from the natural (target) side
  std::vector<const dsp::FeatureSequence*> nats;
  for (const auto& [a, b] : pairs) nats.push_back(&b);
  compute_stats(nats, model.feat_mean, model.feat_std);

  std::vector<std::vector<float>> a_norm, b_norm;
  std::vector<int> frames;
  for (const auto& [a, b] : pairs) {
    a_norm.push_back(to_norm(model, a));
    b_norm.push_back(to_norm(model, b));
    frames.push_back(a.num_frames);
  }
  std::vector<std::vector<float>> va_norm, vb_norm;
  std::vector<int> vframes;
  for (const auto& [a, b] : valid_pairs) {
    if (a.num_frames != b.num_frames)
      throw TrainError("cyclevc validation pair not frame-aligned");
    va_norm.push_back(to_norm(model, a));
    vb_norm.push_back(to_norm(model, b));
    vframes.push_back(a.num_frames);
  }

  ad::AdamState<float> opt;
  ad::AdamConfig opt_cfg;
  opt_cfg.lr = model.cfg.lr;

  Rng rng(seed);
  TrainReport report;
  double best_valid = 1e300;
  std::map<std::string, std::vector<float>> best_params;

  std::vector<int> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < model.cfg.epochs; ++epoch) {
    // seeded Fisher-Yates shuffle, whole utterances, batch size 1
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    for (int idx : order) {
      const double loss = pair_loss_and_step(model, a_norm[static_cast<std::size_t>(idx)],
                                             b_norm[static_cast<std::size_t>(idx)],
                                             frames[static_cast<std::size_t>(idx)], &opt, &opt_cfg);
      if (!std::isfinite(loss))
        throw TrainError("non-finite cyclevc loss at epoch " + std::to_string(epoch) +
                         ", pair " + std::to_string(idx));
      epoch_loss += loss;
    }
    report.epoch_train_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));

    if (!valid_pairs.empty()) {
      double vloss = 0.0;
      for (std::size_t i = 0; i < va_norm.size(); ++i)
        vloss += pair_loss_and_step(model, va_norm[i], vb_norm[i], vframes[i], nullptr, nullptr);
      vloss /= static_cast<double>(va_norm.size());
      report.epoch_valid_loss.push_back(vloss);
      if (vloss < best_valid) {
        best_valid = vloss;
        report.best_epoch = epoch;
        for (const auto& [name, p] : model.graph.params()) best_params[name] = p->val;
      }
    } else {
      report.best_epoch = epoch;
    }
  }
  // retain the best-validation checkpoint
  if (!best_params.empty())
    for (const auto& [name, p] : model.graph.params()) p->val = best_params.at(name);
  model.epoch_train_loss = report.epoch_train_loss;
  model.epoch_valid_loss = report.epoch_valid_loss;
  return report;
}

std::vector<float> module_forward(const CycleVcModel& model, const nets::ConvModule<float>& module,
                                  const std::vector<float>& features, int frames) {
  if (features.size() != static_cast<std::size_t>(frames) * model.dims.input_dim)
    throw ShapeError("module_forward expects [T x 50] input");
  return nets::module_forward_free(module, features, frames, model.dims);
}

dsp::FeatureSequence enhance(const CycleVcModel& model, const dsp::FeatureSequence& synthetic) {
  const std::vector<float> norm = model.normalize(synthetic);
  const std::vector<float> conv =
      nets::module_forward_free(model.stot, norm, synthetic.num_frames, model.dims);
  dsp::FeatureSequence out = synthetic;  // log_f0 / uv / coded_ap / c0 pass through
  out.set_shape_mcep(model.denorm_mcep(conv, synthetic.num_frames));
  return out;
}

dsp::FeatureSequence pseudo_vc(const CycleVcModel& model, const dsp::FeatureSequence& natural) {
  const int frames = natural.num_frames;
  const int odim = model.dims.output_dim;
  const int idim = model.dims.input_dim;
  const std::vector<float> norm = model.normalize(natural);
  const std::vector<float> ts = nets::module_forward_free(model.ttos, norm, frames, model.dims);

  // converted mcep + natural prosody, still normalized
  std::vector<float> mixed = norm;
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < odim; ++d)
      mixed[static_cast<std::size_t>(t) * idim + d] = ts[static_cast<std::size_t>(t) * odim + d];

  const std::vector<float> st = nets::module_forward_free(model.stot, mixed, frames, model.dims);
  dsp::FeatureSequence out = natural;
  out.set_shape_mcep(model.denorm_mcep(st, frames));
  return out;
}

double cycle_loss_value(CycleVcModel& model, const dsp::FeatureSequence& a,
                        const dsp::FeatureSequence& b, double rho) {
  if (a.num_frames != b.num_frames) throw ShapeError("cycle_loss: pair not frame-aligned");
  const auto an = model.normalize(a);
  const auto bn = model.normalize(b);
  auto parts = nets::cycle_loss_tape(model.stot, model.ttos, an, bn, a.num_frames, model.dims, rho);
  return static_cast<double>(parts.total->scalar());
}

void save(const CycleVcModel& model, const std::string& base_path) {
  nlohmann::json hp;
  hp["conv_channels"] = model.cfg.conv_channels;
  hp["gru_hidden"] = model.cfg.gru_hidden;
  hp["rho"] = model.cfg.rho;
  hp["epochs"] = model.cfg.epochs;
  hp["lr"] = model.cfg.lr;
  hp["input_dim"] = model.dims.input_dim;
  hp["output_dim"] = model.dims.output_dim;
  hp["feat_mean"] = model.feat_mean;
  hp["feat_std"] = model.feat_std;
  hp["epoch_train_loss"] = model.epoch_train_loss;
  hp["epoch_valid_loss"] = model.epoch_valid_loss;
  ad::save_checkpoint(base_path, "cyclevc", hp, model.graph);
}

ModelPtr load(const std::string& base_path) {
  const ad::CheckpointData ckpt = ad::load_checkpoint(base_path);
  if (ckpt.kind != "cyclevc")
    throw DataError("checkpoint kind is '" + ckpt.kind + "', expected 'cyclevc'");
  CycleVcConfig cfg;
  cfg.conv_channels = ckpt.hparams.at("conv_channels").get<int>();
  cfg.gru_hidden = ckpt.hparams.at("gru_hidden").get<int>();
  cfg.rho = ckpt.hparams.at("rho").get<double>();
  cfg.epochs = ckpt.hparams.value("epochs", cfg.epochs);
  cfg.lr = ckpt.hparams.value("lr", cfg.lr);
  auto model = make_model(cfg, 0);
  ad::apply_checkpoint(ckpt, model->graph);
  model->feat_mean = ckpt.hparams.at("feat_mean").get<std::vector<double>>();
  model->feat_std = ckpt.hparams.at("feat_std").get<std::vector<double>>();
  model->epoch_train_loss =
      ckpt.hparams.value("epoch_train_loss", std::vector<double>{});
  model->epoch_valid_loss =
      ckpt.hparams.value("epoch_valid_loss", std::vector<double>{});
  return model;
}

}  // namespace cycnpf::cyclevc
