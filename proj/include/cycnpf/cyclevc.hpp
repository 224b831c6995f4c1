#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cycnpf/ad/checkpoint.hpp"
#include "cycnpf/dsp/features.hpp"
#include "cycnpf/nets/cyclevc_net.hpp"

namespace cycnpf::cyclevc {

struct CycleVcConfig {
  int conv_channels = 64;
  int gru_hidden = 128;  // 1024 at full scale; desk default keeps CPU training practical
  double rho = 1e-8;
  int epochs = 15;
  double lr = 1e-3;
  double grad_clip = 5.0;
};

// Two conversion modules (StoT enhances synthetic mcep toward natural, TtoS
// maps natural toward synthetic) plus shared z-score statistics computed on
// the natural training features. Only the 45 mcep shape coefficients are
// converted; all other streams pass through untouched.
struct CycleVcModel {
  CycleVcConfig cfg;
  nets::CycleVcDims dims;
  ad::Graph<float> graph;
  nets::ConvModule<float> stot;
  nets::ConvModule<float> ttos;
  std::vector<double> feat_mean;  // [50]
  std::vector<double> feat_std;   // [50]
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_valid_loss;

  std::vector<float> normalize(const dsp::FeatureSequence& f) const;       // [T x 50]
  std::vector<double> denorm_mcep(const std::vector<float>& y, int frames) const;  // [T x 45]
};

using ModelPtr = std::unique_ptr<CycleVcModel>;

ModelPtr make_model(const CycleVcConfig& cfg, std::uint64_t seed);

// Per-epoch diagnostics recorded on the model; aborts with TrainError on a
// non-finite loss, naming the epoch and pair.
struct TrainReport {
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_valid_loss;
  int best_epoch = -1;
};

TrainReport train_cyclevc(CycleVcModel& model,
                          const std::vector<std::pair<dsp::FeatureSequence, dsp::FeatureSequence>>& pairs,
                          const std::vector<std::pair<dsp::FeatureSequence, dsp::FeatureSequence>>& valid_pairs,
                          std::uint64_t seed);

// Raw module inference: features [T x 50] normalized domain in, [T x 45]
// normalized mcep out, free-running AR feedback.
std::vector<float> module_forward(const CycleVcModel& model, const nets::ConvModule<float>& module,
                                  const std::vector<float>& features, int frames);

// StoT path: synthetic features in, enhanced features out (mcep replaced,
// every other stream bit-identical).
dsp::FeatureSequence enhance(const CycleVcModel& model, const dsp::FeatureSequence& synthetic);

// TtoS -> StoT path on natural features; output frame count always equals the
// natural input (the temporally matched training features for the vocoder).
dsp::FeatureSequence pseudo_vc(const CycleVcModel& model, const dsp::FeatureSequence& natural);

// Scalar cyclic objective for one aligned pair (normalized space); exposed
// for tests and the gradient suite.
double cycle_loss_value(CycleVcModel& model, const dsp::FeatureSequence& a,
                        const dsp::FeatureSequence& b, double rho);

void save(const CycleVcModel& model, const std::string& base_path);
ModelPtr load(const std::string& base_path);

}  // namespace cycnpf::cyclevc
