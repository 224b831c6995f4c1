#include "cycnpf/ad/checkpoint.hpp"

#include <fstream>

#include "cycnpf/util.hpp"

namespace cycnpf::ad {

const CheckpointParam* CheckpointData::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void save_checkpoint(const std::string& base_path, const std::string& kind,
                     const nlohmann::json& hparams, const Graph<float>& graph) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["kind"] = kind;
  manifest["hparams"] = hparams;
  auto& plist = manifest["params"] = nlohmann::json::array();

  std::ofstream bin(base_path + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write checkpoint blob: " + base_path + ".bin");
  for (const auto& [name, p] : graph.params()) {
    plist.push_back({{"name", name}, {"shape", p->shape}});
    bin.write(reinterpret_cast<const char*>(p->val.data()),
              static_cast<std::streamsize>(p->val.size() * sizeof(float)));
  }
  if (!bin) throw DataError("short write on checkpoint blob: " + base_path + ".bin");
  bin.close();

  std::ofstream mf(base_path + ".json", std::ios::trunc);
  if (!mf) throw DataError("cannot write checkpoint manifest: " + base_path + ".json");
  mf << manifest.dump(2) << "\n";
}

CheckpointData load_checkpoint(const std::string& base_path) {
  std::ifstream mf(base_path + ".json");
  if (!mf) throw DataError("cannot open checkpoint manifest: " + base_path + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint manifest " + base_path + ".json: " + e.what());
  }
  if (manifest.value("format_version", 0) != 1)
    throw DataError("unsupported checkpoint format version in " + base_path + ".json");

  CheckpointData out;
  out.kind = manifest.at("kind").get<std::string>();
  out.hparams = manifest.value("hparams", nlohmann::json::object());

  std::ifstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot open checkpoint blob: " + base_path + ".bin");
  for (const auto& entry : manifest.at("params")) {
    CheckpointParam p;
    p.name = entry.at("name").get<std::string>();
    p.shape = entry.at("shape").get<std::vector<int>>();
    std::size_t count = 1;
    for (int d : p.shape) count *= static_cast<std::size_t>(d);
    p.data.resize(count);
    bin.read(reinterpret_cast<char*>(p.data.data()),
             static_cast<std::streamsize>(count * sizeof(float)));
    if (!bin) throw DataError("truncated checkpoint blob: " + base_path + ".bin");
    out.params.push_back(std::move(p));
  }
  return out;
}

void apply_checkpoint(const CheckpointData& ckpt, Graph<float>& graph,
                      const std::string& only_prefix) {
  for (const auto& [name, p] : graph.params()) {
    if (!only_prefix.empty() && name.rfind(only_prefix, 0) != 0) continue;
    const CheckpointParam* src = ckpt.find(name);
    if (!src) throw DataError("checkpoint is missing parameter: " + name);
    if (src->shape != p->shape)
      throw DataError("checkpoint shape mismatch for parameter: " + name);
    for (std::size_t i = 0; i < p->val.size(); ++i) p->val[i] = src->data[i];
  }
}

}  // namespace cycnpf::ad
