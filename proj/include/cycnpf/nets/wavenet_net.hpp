#pragma once

// Gated dilated causal conv stack with mu-law softmax output. The teacher
// forward below builds the training tape; sample-by-sample generation lives
// in wavenet.cpp with per-layer ring buffers.

#include <string>
#include <vector>

#include "cycnpf/ad/core.hpp"
#include "cycnpf/ad/optim.hpp"

namespace cycnpf::nets {

struct WaveNetDims {
  std::vector<std::vector<int>> dilation_cycles;  // e.g. {{1,2,...,512},{1,2,...,512}}
  int residual_channels = 64;
  int skip_channels = 64;
  int aux_channels = 50;
  int kernel = 2;
  int quantization = 256;

  std::vector<int> flat_dilations() const {
    std::vector<int> out;
    for (const auto& cycle : dilation_cycles) out.insert(out.end(), cycle.begin(), cycle.end());
    return out;
  }
  // r = 1 + sum over layers of (kernel - 1) * dilation
  int receptive_field() const {
    int r = 1;
    for (const auto& cycle : dilation_cycles)
      for (int d : cycle) r += (kernel - 1) * d;
    return r;
  }
};

template <typename T>
struct WaveNetLayer {
  ad::Var<T> dil_w, dil_b;  // [k x R x 2R], [2R]
  ad::Var<T> cond_w;        // [aux x 2R], no bias (dil_b covers it)
  ad::Var<T> res_w, res_b;  // [R x R], [R]
  ad::Var<T> skip_w, skip_b;
};

template <typename T>
struct WaveNetParams {
  ad::Var<T> embed;  // [256 x R]
  std::vector<WaveNetLayer<T>> layers;
  ad::Var<T> out1_w, out1_b;  // [S x S]
  ad::Var<T> out2_w, out2_b;  // [S x 256]
};

template <typename T>
WaveNetParams<T> register_wavenet(ad::Graph<T>& g, const WaveNetDims& d, Rng& rng) {
  WaveNetParams<T> p;
  const int r = d.residual_channels;
  const int s = d.skip_channels;
  auto u = [&](std::size_t count, int fan_in) {
    return ad::cast_vec<T>(ad::uniform_fan_in(rng, count, fan_in));
  };
  p.embed = g.param("embed", {d.quantization, r}, u(static_cast<std::size_t>(d.quantization) * r, 4));
  const auto dils = d.flat_dilations();
  for (std::size_t l = 0; l < dils.size(); ++l) {
    WaveNetLayer<T> layer;
    const std::string pre = std::string("layer") + (l < 10 ? "0" : "") + std::to_string(l);
    layer.dil_w = g.param(pre + ".dil.w", {d.kernel, r, 2 * r},
                          u(static_cast<std::size_t>(d.kernel) * r * 2 * r, d.kernel * r));
    layer.dil_b = g.param(pre + ".dil.b", {2 * r}, std::vector<T>(static_cast<std::size_t>(2) * r, T(0)));
    layer.cond_w = g.param(pre + ".cond.w", {d.aux_channels, 2 * r},
                           u(static_cast<std::size_t>(d.aux_channels) * 2 * r, d.aux_channels));
    layer.res_w = g.param(pre + ".res.w", {r, r}, u(static_cast<std::size_t>(r) * r, r));
    layer.res_b = g.param(pre + ".res.b", {r}, std::vector<T>(r, T(0)));
    layer.skip_w = g.param(pre + ".skip.w", {r, s}, u(static_cast<std::size_t>(r) * s, r));
    layer.skip_b = g.param(pre + ".skip.b", {s}, std::vector<T>(s, T(0)));
    p.layers.push_back(layer);
  }
  p.out1_w = g.param("out1.w", {s, s}, u(static_cast<std::size_t>(s) * s, s));
  p.out1_b = g.param("out1.b", {s}, std::vector<T>(s, T(0)));
  p.out2_w = g.param("out2.w", {s, d.quantization}, u(static_cast<std::size_t>(s) * d.quantization, s));
  p.out2_b = g.param("out2.b", {d.quantization}, std::vector<T>(d.quantization, T(0)));
  return p;
}

// Teacher-forced logits. input_codes[t] is the code preceding position t
// (the caller shifts; position 0 gets the mu-law code of silence). cond is
// the per-sample [T x aux] conditioning. Causality holds by construction:
// logits[t] sees input_codes[<= t] = codes[< t].
template <typename T>
ad::Var<T> wavenet_teacher_tape(const WaveNetParams<T>& p, const WaveNetDims& d,
                                const std::vector<int>& input_codes,
                                const std::vector<T>& cond) {
  const int frames = static_cast<int>(input_codes.size());
  if (cond.size() != static_cast<std::size_t>(frames) * d.aux_channels)
    throw ShapeError("wavenet: conditioning rows (" +
                     std::to_string(cond.size() / d.aux_channels) + ") != code count (" +
                     std::to_string(frames) + ")");
  auto cond_in = ad::constant<T>({frames, d.aux_channels}, std::vector<T>(cond));
  auto zero_bias2r = ad::constant<T>({2 * d.residual_channels});

  auto x = ad::embedding(p.embed, input_codes);
  ad::Var<T> skip_sum;
  const auto dils = d.flat_dilations();
  for (std::size_t l = 0; l < dils.size(); ++l) {
    const auto& layer = p.layers[l];
    auto z = ad::conv1d(x, layer.dil_w, layer.dil_b, dils[l], true);
    z = ad::add(z, ad::linear(cond_in, layer.cond_w, zero_bias2r));
    auto gated = ad::gated_activation(z);
    auto skip = ad::linear(gated, layer.skip_w, layer.skip_b);
    skip_sum = skip_sum ? ad::add(skip_sum, skip) : skip;
    if (l + 1 < dils.size()) x = ad::add(x, ad::linear(gated, layer.res_w, layer.res_b));
  }
  auto h = ad::relu(ad::linear(ad::relu(skip_sum), p.out1_w, p.out1_b));
  return ad::linear(h, p.out2_w, p.out2_b);
}

}  // namespace cycnpf::nets
