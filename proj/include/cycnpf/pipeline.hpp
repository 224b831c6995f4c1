#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cycnpf/cyclevc.hpp"
#include "cycnpf/dsp/features.hpp"
#include "cycnpf/pwg.hpp"
#include "cycnpf/ttsim.hpp"
#include "cycnpf/wavenet.hpp"

namespace cycnpf::pipeline {

enum class Condition { kUB, kAM, kTM, kNPF, kNPFCascade };
enum class VocoderKind { kWaveNet, kPwg };
enum class CycVcMode { kManual, kPredicted };  // CVC-m / CVC-p
enum class Pretrain { kNone, kExternal };

std::string to_string(Condition c);
std::string to_string(VocoderKind v);

// Declarative description of one run. Parsed from a JSON file; unknown keys
// anywhere are a hard error.
struct ExperimentConfig {
  int sample_rate = 24000;
  std::string workdir = "work";
  std::uint64_t seed = 1234;

  std::string natural_dir;
  std::string external_dir;  // optional extra WAVs for pretraining
  int split_train = 24;
  int split_valid = 3;
  int split_test = 3;

  Condition condition = Condition::kNPF;
  VocoderKind vocoder = VocoderKind::kWaveNet;
  CycVcMode cycvc_mode = CycVcMode::kManual;
  Pretrain pretrain = Pretrain::kNone;
  double cascade_pf_beta = 0.4;

  dsp::AnalysisConfig analysis;
  ttsim::DegradationProfile degradation;
  cyclevc::CycleVcConfig cycvc;
  wavenet::WaveNetConfig wn;
  pwg::PwgConfig pwg_cfg;

  int pretrain_variants = 4;  // speaker variants per training utterance
  long pretrain_steps = 1000;

  nlohmann::json to_json() const;  // canonical form, used for hashing
  std::string config_hash() const;
  std::string store_hash() const;
  std::string cycvc_hash() const;
  std::string vocoder_hash() const;  // keyed by training source, not condition
  std::string infer_hash() const;

  std::string store_dir() const;
  std::string cycvc_dir() const;
  std::string vocoder_dir() const;
  std::string infer_dir() const;
  std::string eval_dir() const;
  std::string run_manifest_path() const;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& j);

// Which features a condition trains / tests the vocoder on.
enum class FeatureSource { kNatural, kSynthetic, kPseudoVc, kEnhanced, kEnhancedCascade };
FeatureSource training_source(Condition c);
FeatureSource testing_source(Condition c);

// ---------------------------------------------------------------------------
// feature store
// ---------------------------------------------------------------------------

struct StoreEntry {
  std::string utt;
  std::string split;  // train | valid | test
  int natural_frames = 0;
  int synthetic_frames = 0;
};

struct FeatureStore {
  std::string dir;
  std::vector<StoreEntry> entries;

  std::vector<const StoreEntry*> split(const std::string& name) const;
  dsp::FeatureSequence natural(const std::string& utt, double alpha) const;
  dsp::FeatureSequence synthetic(const std::string& utt, double alpha) const;
  dsp::Waveform wave(const std::string& utt) const;
};

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

struct StageResult {
  std::string output_dir;
  std::string content_hash;
  bool already_complete = false;
};

StageResult stage_prepare(const ExperimentConfig& cfg);
StageResult stage_train_cycvc(const ExperimentConfig& cfg);
StageResult stage_train_vocoder(const ExperimentConfig& cfg);
StageResult stage_infer(const ExperimentConfig& cfg);

struct EvalResult {
  StageResult stage;
  bool partial = false;  // some conditions missing from the infer outputs
};

// Evaluates every condition whose inferred waveforms exist under the
// configured vocoder; missing conditions are reported as explicit gaps.
EvalResult stage_evaluate(const ExperimentConfig& cfg);

FeatureStore open_store(const ExperimentConfig& cfg);

// Hash of every regular file under dir (names + bytes), order-independent
// of filesystem enumeration; used by the reproducibility checks.
std::string hash_directory(const std::string& dir);

}  // namespace cycnpf::pipeline
