#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cycnpf/ad/checkpoint.hpp"
#include "cycnpf/dsp/features.hpp"
#include "cycnpf/dsp/wave.hpp"
#include "cycnpf/nets/wavenet_net.hpp"

namespace cycnpf::wavenet {

enum class Sampling { kArgmax, kCategorical };

struct WaveNetConfig {
  nets::WaveNetDims dims;
  int hop_size = 120;
  long train_steps = 2000;
  int segment_samples = 3600;
  double lr = 5e-4;
  Sampling sampling = Sampling::kArgmax;
  double temperature = 1.0;

  WaveNetConfig() {
    std::vector<int> cycle;
    for (int d = 1; d <= 512; d *= 2) cycle.push_back(d);
    dims.dilation_cycles = {cycle, cycle};
  }
};

int receptive_field(const WaveNetConfig& cfg);

struct WaveNetModel {
  WaveNetConfig cfg;
  ad::Graph<float> graph;
  nets::WaveNetParams<float> params;
  std::uint64_t schema_hash = 0;
  long global_step = 0;
  std::vector<double> loss_history;  // mean loss per 100-step window
};

using ModelPtr = std::unique_ptr<WaveNetModel>;

ModelPtr make_model(const WaveNetConfig& cfg, std::uint64_t schema_hash, std::uint64_t seed);

// Teacher-forced logits [T x 256] for a code sequence and per-sample
// conditioning; pure forward, no learning. Exposed for the causality and
// likelihood tests.
std::vector<float> teacher_logits(const WaveNetModel& model, const std::vector<int>& codes,
                                  const std::vector<float>& cond);

struct TrainStats {
  double first_window_loss = 0.0;
  double last_window_loss = 0.0;
  double top1_accuracy = 0.0;  // teacher-forced, measured on the last window
};

// Pairs of (conditioning features, waveform). Each waveform is cropped to
// num_frames * hop samples. Non-finite loss aborts with step diagnostics.
TrainStats train(WaveNetModel& model,
                 const std::vector<std::pair<dsp::FeatureSequence, dsp::Waveform>>& dataset,
                 long steps, std::uint64_t seed);

// Teacher-forced next-code accuracy over a clip.
double teacher_top1_accuracy(const WaveNetModel& model, const dsp::FeatureSequence& features,
                             const dsp::Waveform& wave);

// AR generation, one conditioning row consumed per emitted sample; output
// length is exactly num_frames * hop. Ring-buffered activations make this
// O(T * layers).
dsp::Waveform generate(const WaveNetModel& model, const dsp::FeatureSequence& features,
                       std::uint64_t seed);

void save(const WaveNetModel& model, const std::string& base_path);
ModelPtr load(const std::string& base_path, std::uint64_t expected_schema_hash);

}  // namespace cycnpf::wavenet
