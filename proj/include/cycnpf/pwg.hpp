#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cycnpf/ad/checkpoint.hpp"
#include "cycnpf/dsp/features.hpp"
#include "cycnpf/dsp/wave.hpp"
#include "cycnpf/nets/pwg_net.hpp"

namespace cycnpf::pwg {

struct StftResolution {
  int fft = 1024;
  int hop = 120;
  int win = 600;
};

struct PwgConfig {
  nets::PwgDims dims;
  int hop_size = 120;
  long train_steps = 2000;
  long warmup_steps = 200;  // adversarial terms inactive before this step
  int segment_samples = 4800;
  double gen_lr = 1e-3;
  double disc_lr = 5e-4;
  double lambda_adv = 4.0;
  std::vector<StftResolution> resolutions = {{512, 50, 240}, {1024, 120, 600}, {2048, 240, 1200}};
};

struct PwgModel {
  PwgConfig cfg;
  ad::Graph<float> graph;
  nets::PwgParams<float> params;
  std::uint64_t schema_hash = 0;
  long global_step = 0;
  std::vector<double> stft_loss_history;  // mean per 50-step window
  bool has_discriminator = true;
};

using ModelPtr = std::unique_ptr<PwgModel>;

ModelPtr make_model(const PwgConfig& cfg, std::uint64_t schema_hash, std::uint64_t seed);

// Noise + conditioning in, waveform out; fully parallel, length preserving,
// deterministic for a fixed noise vector.
dsp::Waveform generate_from_noise(const PwgModel& model, const std::vector<float>& noise,
                                  const dsp::FeatureSequence& features);

// Draws the noise from the seeded run RNG; output length num_frames * hop.
dsp::Waveform generate(const PwgModel& model, const dsp::FeatureSequence& features,
                       std::uint64_t seed);

struct MultiResStftLoss {
  double spectral_convergence = 0.0;
  double log_mag_l1 = 0.0;
  double total = 0.0;  // mean over resolutions of (SC + LM)
};

// Reference orientation: x is the natural signal (denominator of SC).
MultiResStftLoss multires_stft_loss(const dsp::Waveform& x, const dsp::Waveform& y,
                                    const std::vector<StftResolution>& resolutions);

struct LsganLosses {
  double d_loss = 0.0;      // mean (D(real)-1)^2 + mean D(fake)^2
  double g_adv_loss = 0.0;  // mean (D(fake)-1)^2
};

LsganLosses lsgan_losses(const PwgModel& model, const dsp::Waveform& real,
                         const dsp::Waveform& fake);

struct TrainStats {
  double first_window_stft = 0.0;
  double last_window_stft = 0.0;
};

TrainStats train(PwgModel& model,
                 const std::vector<std::pair<dsp::FeatureSequence, dsp::Waveform>>& dataset,
                 long steps, std::uint64_t seed);

void save(const PwgModel& model, const std::string& base_path);
// load_discriminator=false drops the discriminator group (inference only).
ModelPtr load(const std::string& base_path, std::uint64_t expected_schema_hash,
              bool load_discriminator = true);

}  // namespace cycnpf::pwg
