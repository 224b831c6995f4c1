#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cycnpf/ad/core.hpp"

namespace cycnpf::ad {

// Checkpoint = <base>.json manifest + <base>.bin blob.
// Manifest: {"format_version": 1, "kind": ..., "hparams": {...},
//            "params": [{"name": ..., "shape": [...]}, ...]}
// Blob: 32-bit little-endian floats per parameter, in manifest order
// (manifest order = registry order = lexicographic by name).

struct CheckpointParam {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::string kind;
  nlohmann::json hparams;
  std::vector<CheckpointParam> params;

  const CheckpointParam* find(const std::string& name) const;
};

void save_checkpoint(const std::string& base_path, const std::string& kind,
                     const nlohmann::json& hparams, const Graph<float>& graph);

CheckpointData load_checkpoint(const std::string& base_path);

// Copies checkpoint values into an already-built graph. Every graph parameter
// must be present with a matching shape; extra checkpoint groups can be
// skipped via the optional prefix filter (e.g. a discriminator at inference).
void apply_checkpoint(const CheckpointData& ckpt, Graph<float>& graph,
                      const std::string& only_prefix = "");

}  // namespace cycnpf::ad
