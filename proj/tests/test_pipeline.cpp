#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "cycnpf/corpus.hpp"
#include "cycnpf/metrics.hpp"
#include <cstdlib>

#include "cycnpf/pipeline.hpp"
#include "cycnpf/wavenet.hpp"
#include "cycnpf/util.hpp"
#include "support.hpp"

using namespace cycnpf;
using namespace cycnpf::pipeline;
namespace fs = std::filesystem;

namespace {

// Small end-to-end fixture: 6 half-second utterances, tiny models.
nlohmann::json base_config(const std::string& corpus_dir, const std::string& workdir) {
  nlohmann::json j;
  j["workdir"] = workdir;
  j["seed"] = 404;
  j["corpus"] = {{"natural_dir", corpus_dir}};
  j["splits"] = {{"train", 4}, {"valid", 1}, {"test", 1}};
  j["condition"] = "NPF";
  j["vocoder"] = "wavenet";
  j["cyclevc"] = {{"conv_channels", 8}, {"gru_hidden", 8}, {"epochs", 2}};
  j["wavenet"] = {{"dilations", {{1, 2, 4, 8}}}, {"residual_channels", 8},
                  {"skip_channels", 8}, {"train_steps", 25}, {"segment_samples", 720}};
  j["pwg"] = {{"gen_layers", 4}, {"gen_cycles", 2}, {"gen_channels", 8}, {"skip_channels", 8},
              {"disc_layers", 3}, {"disc_channels", 8}, {"train_steps", 20},
              {"warmup_steps", 50}, {"segment_samples", 720},
              {"resolutions", {{256, 60, 240}}}};
  return j;
}

struct Fixture {
  std::string corpus_dir;
  std::string workdir;
  Fixture() {
    corpus_dir = testsup::temp_dir("pipe_corpus");
    workdir = testsup::temp_dir("pipe_work");
    corpus::CorpusSpec spec;
    spec.num_utterances = 6;
    spec.min_seconds = 0.5;
    spec.max_seconds = 0.6;
    spec.seed = 5;
    corpus::make_demo_corpus(corpus_dir, spec);
  }
};

}  // namespace

TEST_CASE("config: unknown keys are hard errors at every level") {
  Fixture fx;
  auto j = base_config(fx.corpus_dir, fx.workdir);
  CHECK_NOTHROW(parse_config_json(j));

  auto bad_root = j;
  bad_root["not_a_key"] = 1;
  CHECK_THROWS_AS(parse_config_json(bad_root), ConfigError);

  auto bad_nested = j;
  bad_nested["analysis"]["windowing"] = "hann";
  CHECK_THROWS_AS(parse_config_json(bad_nested), ConfigError);

  auto bad_enum = j;
  bad_enum["condition"] = "UBX";
  CHECK_THROWS_AS(parse_config_json(bad_enum), ConfigError);
}

TEST_CASE("routing table is total and exclusive over the condition matrix") {
  CHECK(training_source(Condition::kUB) == FeatureSource::kNatural);
  CHECK(training_source(Condition::kAM) == FeatureSource::kNatural);
  CHECK(training_source(Condition::kTM) == FeatureSource::kSynthetic);
  CHECK(training_source(Condition::kNPF) == FeatureSource::kPseudoVc);
  CHECK(training_source(Condition::kNPFCascade) == FeatureSource::kPseudoVc);

  CHECK(testing_source(Condition::kUB) == FeatureSource::kNatural);
  CHECK(testing_source(Condition::kAM) == FeatureSource::kSynthetic);
  CHECK(testing_source(Condition::kTM) == FeatureSource::kSynthetic);
  CHECK(testing_source(Condition::kNPF) == FeatureSource::kEnhanced);
  CHECK(testing_source(Condition::kNPFCascade) == FeatureSource::kEnhancedCascade);

  // UB and AM share one trained vocoder: identical artifact keys
  Fixture fx;
  auto cfg_ub = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  cfg_ub.condition = Condition::kUB;
  auto cfg_am = cfg_ub;
  cfg_am.condition = Condition::kAM;
  CHECK(cfg_ub.vocoder_hash() == cfg_am.vocoder_hash());
  auto cfg_tm = cfg_ub;
  cfg_tm.condition = Condition::kTM;
  CHECK(cfg_ub.vocoder_hash() != cfg_tm.vocoder_hash());
}

TEST_CASE("prepare: deterministic store, oracle mode preserves frame counts") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  const auto r1 = stage_prepare(cfg);
  CHECK_FALSE(r1.already_complete);

  // second call short-circuits on the manifest and reports the same hash
  const auto r2 = stage_prepare(cfg);
  CHECK(r2.already_complete);
  CHECK(r1.content_hash == r2.content_hash);

  // an independent workdir reproduces the identical content hash
  auto j2 = base_config(fx.corpus_dir, testsup::temp_dir("pipe_work2"));
  const auto r3 = stage_prepare(parse_config_json(j2));
  CHECK(r3.content_hash == r1.content_hash);

  const auto store = open_store(cfg);
  CHECK(store.entries.size() == 6);
  int train_count = 0, valid_count = 0, test_count = 0;
  for (const auto& e : store.entries) {
    CHECK(e.natural_frames == e.synthetic_frames);  // oracle duration mode
    if (e.split == "train") ++train_count;
    if (e.split == "valid") ++valid_count;
    if (e.split == "test") ++test_count;
  }
  CHECK(train_count == 4);
  CHECK(valid_count == 1);
  CHECK(test_count == 1);
}

TEST_CASE("prepare: predicted duration mode changes frame counts for most utterances") {
  Fixture fx;
  auto j = base_config(fx.corpus_dir, fx.workdir);
  j["degradation"] = {{"duration_mode", "predicted"}};
  const auto cfg = parse_config_json(j);
  stage_prepare(cfg);
  const auto store = open_store(cfg);
  int mismatched = 0;
  for (const auto& e : store.entries) mismatched += e.natural_frames != e.synthetic_frames;
  CHECK(mismatched * 2 >= static_cast<int>(store.entries.size()));
}

TEST_CASE("prepare: missing corpus and undersized corpus raise DataError") {
  Fixture fx;
  auto j = base_config("no_such_dir_anywhere", fx.workdir);
  CHECK_THROWS_AS(stage_prepare(parse_config_json(j)), DataError);

  auto j2 = base_config(fx.corpus_dir, fx.workdir);
  j2["splits"] = {{"train", 20}, {"valid", 2}, {"test", 2}};
  CHECK_THROWS_AS(stage_prepare(parse_config_json(j2)), DataError);
}

TEST_CASE("train-cycvc: gating, DTW routing counters for cvc_m and cvc_p") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  CHECK_THROWS_AS(stage_train_cycvc(cfg), DataError);  // store not prepared yet

  stage_prepare(cfg);
  metrics::reset_dtw_call_count();
  stage_train_cycvc(cfg);
  CHECK(metrics::dtw_call_count() == 0);  // cvc_m never aligns

  auto jp = base_config(fx.corpus_dir, fx.workdir);
  jp["cycvc_mode"] = "cvc_p";
  jp["degradation"] = {{"duration_mode", "predicted"}};
  const auto cfg_p = parse_config_json(jp);
  stage_prepare(cfg_p);
  metrics::reset_dtw_call_count();
  stage_train_cycvc(cfg_p);
  CHECK(metrics::dtw_call_count() == 4);  // one per training pair
}

TEST_CASE("train-cycvc: cvc_m on a predicted-duration store is a training error") {
  Fixture fx;
  auto j = base_config(fx.corpus_dir, fx.workdir);
  j["degradation"] = {{"duration_mode", "predicted"}};
  const auto cfg = parse_config_json(j);
  stage_prepare(cfg);
  CHECK_THROWS_AS(stage_train_cycvc(cfg), TrainError);
}

TEST_CASE("stage gating: NPF vocoder training and inference need their prerequisites") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  CHECK_THROWS_AS(stage_infer(cfg), DataError);  // nothing prepared at all
  stage_prepare(cfg);
  CHECK_THROWS_AS(stage_train_vocoder(cfg), DataError);  // Cycle-VC checkpoint missing
  stage_train_cycvc(cfg);
  CHECK_THROWS_AS(stage_infer(cfg), DataError);  // vocoder checkpoint missing
  CHECK_NOTHROW(stage_train_vocoder(cfg));
}

TEST_CASE("full tiny run: infer and evaluate") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  stage_prepare(cfg);
  stage_train_cycvc(cfg);
  stage_train_vocoder(cfg);
  const auto inf = stage_infer(cfg);

  const auto store = open_store(cfg);
  const auto tests = store.split("test");
  REQUIRE(tests.size() == 1);
  const std::string expected =
      inf.output_dir + "/" + tests[0]->utt + "__NPF__wavenet.wav";
  CHECK(fs::exists(expected));
  const auto wave = dsp::read_wav(expected);
  const auto feats = store.synthetic(tests[0]->utt, cfg.analysis.alpha);
  CHECK(wave.samples.size() == static_cast<std::size_t>(feats.num_frames) * 120);

  const auto eval = stage_evaluate(cfg);
  CHECK(eval.partial);  // only NPF was inferred; UB/AM/TM are explicit gaps
  CHECK(fs::exists(eval.stage.output_dir + "/report.txt"));
  CHECK(fs::exists(eval.stage.output_dir + "/report.json"));

  std::ifstream rj(eval.stage.output_dir + "/report.json");
  nlohmann::json report;
  rj >> report;
  CHECK(report.contains("conventions"));
  CHECK(report["final"]["NPF"].contains("lsd_mean"));
  CHECK(report["final"]["UB"] == "missing");
}

TEST_CASE("stage re-runs reproduce identical content hashes") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  const auto p1 = stage_prepare(cfg);
  const auto c1 = stage_train_cycvc(cfg);

  // wipe the run manifest to force a true re-run over the same inputs
  fs::remove(cfg.run_manifest_path());
  const auto p2 = stage_prepare(cfg);
  CHECK_FALSE(p2.already_complete);
  CHECK(p2.content_hash == p1.content_hash);
  const auto c2 = stage_train_cycvc(cfg);
  CHECK_FALSE(c2.already_complete);
  CHECK(c2.content_hash == c1.content_hash);
}

TEST_CASE("CYCNPF_WORKDIR overrides the artifact root") {
  Fixture fx;
  const auto cfg = parse_config_json(base_config(fx.corpus_dir, fx.workdir));
  const std::string original = cfg.store_dir();
  const std::string override_dir = testsup::temp_dir("pipe_envwork");
  setenv("CYCNPF_WORKDIR", override_dir.c_str(), 1);
  const std::string overridden = cfg.store_dir();
  unsetenv("CYCNPF_WORKDIR");
  CHECK(original.rfind(fx.workdir, 0) == 0);
  CHECK(overridden.rfind(override_dir, 0) == 0);
  CHECK(cfg.store_dir() == original);  // back to the config value
}

TEST_CASE("pretrain=external: variant pretraining then adaptation resumes steps") {
  Fixture fx;
  auto j = base_config(fx.corpus_dir, fx.workdir);
  j["condition"] = "UB";
  j["pretrain"] = "external";
  j["pretraining"] = {{"variants_per_utterance", 2}, {"steps", 6}};
  j["wavenet"] = {{"dilations", {{1, 2, 4}}}, {"residual_channels", 8}, {"skip_channels", 8},
                  {"train_steps", 5}, {"segment_samples", 480}};
  const auto cfg = parse_config_json(j);
  stage_prepare(cfg);
  stage_train_vocoder(cfg);

  // a pretraining checkpoint exists and the adapted one carries its steps
  bool found_pretrain = false;
  for (const auto& e : fs::directory_iterator(fx.workdir))
    if (e.path().filename().string().rfind("pretrain_", 0) == 0) found_pretrain = true;
  CHECK(found_pretrain);
  auto adapted = wavenet::load(cfg.vocoder_dir() + "/model", cfg.analysis.schema_hash());
  CHECK(adapted->global_step == 6 + 5);
}

TEST_CASE("cli: exit codes for config, data and success paths") {
  Fixture fx;
  const std::string cli = CYCNPF_CLI_PATH;
  const std::string dir = testsup::temp_dir("pipe_cli");

  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };

  CHECK(run("prepare --config " + dir + "/missing.json") == 3);

  {
    std::ofstream bad(dir + "/bad.json");
    bad << "{ not json";
  }
  CHECK(run("prepare --config " + dir + "/bad.json") == 2);

  {
    std::ofstream unknown(dir + "/unknown.json");
    unknown << "{\"definitely_not_a_key\": 1}";
  }
  CHECK(run("prepare --config " + dir + "/unknown.json") == 2);

  {
    auto j = base_config(fx.corpus_dir, fx.workdir);
    std::ofstream ok(dir + "/ok.json");
    ok << j.dump();
  }
  CHECK(run("prepare --config " + dir + "/ok.json") == 0);
  CHECK(run("evaluate --config " + dir + "/ok.json") == 5);  // no inferred conditions yet
}
