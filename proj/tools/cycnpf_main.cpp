#include <cstdio>
#include <exception>
#include <string>
#include <fstream>

#include "CLI11.hpp"

#include "cycnpf/corpus.hpp"
#include "cycnpf/pipeline.hpp"
#include "cycnpf/util.hpp"

namespace {

using cycnpf::pipeline::Condition;
using cycnpf::pipeline::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTrain = 4;
constexpr int kExitPartialEval = 5;

struct CommonOpts {
  std::string config_path;
  std::string condition;
  std::string vocoder;
  long long seed = -1;
};

ExperimentConfig load_config(const CommonOpts& opts) {
  std::ifstream f(opts.config_path);
  if (!f) throw cycnpf::DataError("cannot open config: " + opts.config_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw cycnpf::ConfigError("bad JSON in " + opts.config_path + ": " + e.what());
  }
  if (!opts.condition.empty() && opts.condition != "all") j["condition"] = opts.condition;
  if (!opts.vocoder.empty()) j["vocoder"] = opts.vocoder;
  if (opts.seed >= 0) j["seed"] = static_cast<std::uint64_t>(opts.seed);
  return cycnpf::pipeline::parse_config_json(j);
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool allow_all_conditions = false) {
  cmd->add_option("--config", opts.config_path, "experiment config JSON")->required();
  cmd->add_option("--condition", opts.condition,
                  allow_all_conditions ? "UB|AM|TM|NPF|NPF_cascade|all" : "UB|AM|TM|NPF|NPF_cascade");
  cmd->add_option("--vocoder", opts.vocoder, "wavenet|pwg");
  cmd->add_option("--seed", opts.seed, "override config seed");
}

int run_all(const CommonOpts& opts) {
  ExperimentConfig base = load_config(opts);
  std::vector<Condition> conditions;
  if (opts.condition == "all") {
    conditions = {Condition::kUB, Condition::kAM, Condition::kTM, Condition::kNPF};
  } else {
    conditions = {base.condition};
  }

  cycnpf::pipeline::stage_prepare(base);
  std::printf("[prepare] done (%s)\n", base.store_dir().c_str());

  bool needs_cycvc = false;
  for (Condition c : conditions)
    if (c == Condition::kNPF || c == Condition::kNPFCascade) needs_cycvc = true;
  if (needs_cycvc) {
    cycnpf::pipeline::stage_train_cycvc(base);
    std::printf("[train-cycvc] done (%s)\n", base.cycvc_dir().c_str());
  }

  for (Condition c : conditions) {
    ExperimentConfig cfg = base;
    cfg.condition = c;
    cycnpf::pipeline::stage_train_vocoder(cfg);
    std::printf("[train-vocoder] %s done (%s)\n", cycnpf::pipeline::to_string(c).c_str(),
                cfg.vocoder_dir().c_str());
    cycnpf::pipeline::stage_infer(cfg);
    std::printf("[infer] %s done (%s)\n", cycnpf::pipeline::to_string(c).c_str(),
                cfg.infer_dir().c_str());
  }

  const auto eval = cycnpf::pipeline::stage_evaluate(base);
  std::printf("[evaluate] report at %s/report.txt%s\n", eval.stage.output_dir.c_str(),
              eval.partial ? " (partial: some conditions missing)" : "");
  return eval.partial ? kExitPartialEval : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cyclical neural post-filter pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* prepare = app.add_subcommand("prepare", "extract features and build the store");
  add_common(prepare, opts);
  auto* train_cycvc = app.add_subcommand("train-cycvc", "train the cyclic conversion model");
  add_common(train_cycvc, opts);
  auto* train_vocoder = app.add_subcommand("train-vocoder", "train the vocoder for the condition");
  add_common(train_vocoder, opts);
  auto* infer = app.add_subcommand("infer", "generate test waveforms for the condition");
  add_common(infer, opts);
  auto* evaluate = app.add_subcommand("evaluate", "objective metric report");
  add_common(evaluate, opts);
  auto* runall = app.add_subcommand("run-all", "all stages (use --condition all for the matrix)");
  add_common(runall, opts, true);

  std::string corpus_out = "corpus";
  int corpus_count = 32;
  long long corpus_seed = 1;
  auto* make_corpus = app.add_subcommand("make-corpus", "synthesize a demo WAV corpus");
  make_corpus->add_option("--out", corpus_out, "output directory");
  make_corpus->add_option("--count", corpus_count, "number of utterances");
  make_corpus->add_option("--seed", corpus_seed, "corpus seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_corpus->parsed()) {
      cycnpf::corpus::CorpusSpec spec;
      spec.num_utterances = corpus_count;
      spec.seed = static_cast<std::uint64_t>(corpus_seed);
      cycnpf::corpus::make_demo_corpus(corpus_out, spec);
      std::printf("wrote %d utterances to %s\n", corpus_count, corpus_out.c_str());
      return kExitOk;
    }
    if (runall->parsed()) return run_all(opts);

    ExperimentConfig cfg = load_config(opts);
    if (prepare->parsed()) {
      const auto r = cycnpf::pipeline::stage_prepare(cfg);
      std::printf("store: %s (hash %s)%s\n", r.output_dir.c_str(), r.content_hash.c_str(),
                  r.already_complete ? " [cached]" : "");
    } else if (train_cycvc->parsed()) {
      const auto r = cycnpf::pipeline::stage_train_cycvc(cfg);
      std::printf("cycvc checkpoint: %s/model\n", r.output_dir.c_str());
    } else if (train_vocoder->parsed()) {
      const auto r = cycnpf::pipeline::stage_train_vocoder(cfg);
      std::printf("vocoder checkpoint: %s/model\n", r.output_dir.c_str());
    } else if (infer->parsed()) {
      const auto r = cycnpf::pipeline::stage_infer(cfg);
      std::printf("inferred waveforms: %s\n", r.output_dir.c_str());
    } else if (evaluate->parsed()) {
      const auto r = cycnpf::pipeline::stage_evaluate(cfg);
      std::printf("report: %s/report.txt%s\n", r.stage.output_dir.c_str(),
                  r.partial ? " (partial)" : "");
      return r.partial ? kExitPartialEval : kExitOk;
    }
    return kExitOk;
  } catch (const cycnpf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const cycnpf::TrainError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kExitTrain;
  } catch (const cycnpf::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const cycnpf::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}
