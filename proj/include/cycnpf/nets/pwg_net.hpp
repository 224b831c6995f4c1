#pragma once

// Non-AR noise-to-waveform generator (WaveNet-like gated stack without
// causality or an AR input) and a fully convolutional waveform discriminator
// with LeakyReLU(0.2) and linearly growing dilations (no cycle repeat).

#include <string>
#include <vector>

#include "cycnpf/ad/core.hpp"
#include "cycnpf/ad/optim.hpp"

namespace cycnpf::nets {

struct PwgDims {
  int gen_layers = 20;
  int gen_cycles = 2;  // dilations 1,2,4,... restarting every gen_layers/gen_cycles
  int gen_channels = 32;
  int skip_channels = 32;
  int aux_channels = 50;
  int disc_layers = 8;
  int disc_channels = 32;
  double leaky_slope = 0.2;

  std::vector<int> gen_dilations() const {
    std::vector<int> out;
    const int per_cycle = gen_layers / gen_cycles;
    for (int l = 0; l < gen_layers; ++l) out.push_back(1 << (l % per_cycle));
    return out;
  }
  // one-sided reach of the generator around any output sample (kernel 3)
  int gen_receptive_radius() const {
    int radius = 0;
    for (int d : gen_dilations()) radius += d;
    return radius;
  }
};

template <typename T>
struct PwgGenLayer {
  ad::Var<T> dil_w, dil_b;
  ad::Var<T> cond_w;
  ad::Var<T> res_w, res_b;
  ad::Var<T> skip_w, skip_b;
};

template <typename T>
struct PwgParams {
  ad::Var<T> in_w, in_b;  // [1 x C]
  std::vector<PwgGenLayer<T>> gen_layers;
  ad::Var<T> out1_w, out1_b;  // [S x S]
  ad::Var<T> out2_w, out2_b;  // [S x 1]
  std::vector<ad::Var<T>> disc_w;  // [3 x C x C] chain, first 1->C, last 1x1 C->1
  std::vector<ad::Var<T>> disc_b;
};

template <typename T>
PwgParams<T> register_pwg(ad::Graph<T>& g, const PwgDims& d, Rng& rng) {
  PwgParams<T> p;
  const int c = d.gen_channels;
  const int s = d.skip_channels;
  auto u = [&](std::size_t count, int fan_in) {
    return ad::cast_vec<T>(ad::uniform_fan_in(rng, count, fan_in));
  };
  p.in_w = g.param("gen.in.w", {1, c}, u(static_cast<std::size_t>(c), 1));
  p.in_b = g.param("gen.in.b", {c}, std::vector<T>(c, T(0)));
  const auto dils = d.gen_dilations();
  for (std::size_t l = 0; l < dils.size(); ++l) {
    PwgGenLayer<T> layer;
    const std::string pre = std::string("gen.layer") + (l < 10 ? "0" : "") + std::to_string(l);
    layer.dil_w = g.param(pre + ".dil.w", {3, c, 2 * c}, u(static_cast<std::size_t>(3) * c * 2 * c, 3 * c));
    layer.dil_b = g.param(pre + ".dil.b", {2 * c}, std::vector<T>(static_cast<std::size_t>(2) * c, T(0)));
    layer.cond_w = g.param(pre + ".cond.w", {d.aux_channels, 2 * c},
                           u(static_cast<std::size_t>(d.aux_channels) * 2 * c, d.aux_channels));
    layer.res_w = g.param(pre + ".res.w", {c, c}, u(static_cast<std::size_t>(c) * c, c));
    layer.res_b = g.param(pre + ".res.b", {c}, std::vector<T>(c, T(0)));
    layer.skip_w = g.param(pre + ".skip.w", {c, s}, u(static_cast<std::size_t>(c) * s, c));
    layer.skip_b = g.param(pre + ".skip.b", {s}, std::vector<T>(s, T(0)));
    p.gen_layers.push_back(layer);
  }
  p.out1_w = g.param("gen.out1.w", {s, s}, u(static_cast<std::size_t>(s) * s, s));
  p.out1_b = g.param("gen.out1.b", {s}, std::vector<T>(s, T(0)));
  p.out2_w = g.param("gen.out2.w", {s, 1}, u(static_cast<std::size_t>(s), s));
  p.out2_b = g.param("gen.out2.b", {1}, std::vector<T>(1, T(0)));

  const int dc = d.disc_channels;
  for (int l = 0; l < d.disc_layers; ++l) {
    const std::string pre = std::string("disc.layer") + (l < 10 ? "0" : "") + std::to_string(l);
    const bool last = l == d.disc_layers - 1;
    const int in_ch = l == 0 ? 1 : dc;
    const int out_ch = last ? 1 : dc;
    const int k = last ? 1 : 3;
    p.disc_w.push_back(g.param(pre + ".w", {k, in_ch, out_ch},
                               u(static_cast<std::size_t>(k) * in_ch * out_ch, k * in_ch)));
    p.disc_b.push_back(g.param(pre + ".b", {out_ch}, std::vector<T>(out_ch, T(0))));
  }
  return p;
}

// Generator forward: noise [T], conditioning [T x aux] -> waveform [T x 1].
// Fully parallel, length preserving.
template <typename T>
ad::Var<T> pwg_generator_tape(const PwgParams<T>& p, const PwgDims& d,
                              const ad::Var<T>& noise_rows, const std::vector<T>& cond) {
  if (noise_rows->shape.size() != 2 || noise_rows->shape[1] != 1)
    throw ShapeError("pwg generator expects noise of shape [T x 1]");
  const int frames = noise_rows->shape[0];
  if (cond.size() != static_cast<std::size_t>(frames) * d.aux_channels)
    throw ShapeError("pwg generator: noise length (" + std::to_string(frames) +
                     ") != conditioning rows (" + std::to_string(cond.size() / d.aux_channels) + ")");
  auto cond_in = ad::constant<T>({frames, d.aux_channels}, std::vector<T>(cond));
  auto zero_bias2c = ad::constant<T>({2 * d.gen_channels});

  auto x = ad::linear(noise_rows, p.in_w, p.in_b);
  ad::Var<T> skip_sum;
  const auto dils = d.gen_dilations();
  for (std::size_t l = 0; l < dils.size(); ++l) {
    const auto& layer = p.gen_layers[l];
    auto z = ad::conv1d(x, layer.dil_w, layer.dil_b, dils[l], false);
    z = ad::add(z, ad::linear(cond_in, layer.cond_w, zero_bias2c));
    auto gated = ad::gated_activation(z);
    auto skip = ad::linear(gated, layer.skip_w, layer.skip_b);
    skip_sum = skip_sum ? ad::add(skip_sum, skip) : skip;
    if (l + 1 < dils.size()) x = ad::add(x, ad::linear(gated, layer.res_w, layer.res_b));
  }
  auto h = ad::relu(ad::linear(ad::relu(skip_sum), p.out1_w, p.out1_b));
  return ad::linear(h, p.out2_w, p.out2_b);  // [T x 1]
}

// Discriminator: waveform [T x 1] -> per-timestep score [T x 1]. The
// discriminator sees the waveform only (no conditioning).
template <typename T>
ad::Var<T> pwg_discriminator_tape(const PwgParams<T>& p, const PwgDims& d, const ad::Var<T>& wave_rows) {
  if (wave_rows->shape.size() != 2 || wave_rows->shape[1] != 1)
    throw ShapeError("pwg discriminator expects input of shape [T x 1]");
  auto x = wave_rows;
  for (std::size_t l = 0; l < p.disc_w.size(); ++l) {
    const bool last = l + 1 == p.disc_w.size();
    const int dilation = last ? 1 : static_cast<int>(l) + 1;
    x = ad::conv1d(x, p.disc_w[l], p.disc_b[l], dilation, false);
    if (!last) x = ad::leaky_relu(x, static_cast<T>(d.leaky_slope));
  }
  return x;
}

// Multi-resolution STFT objective pieces for one resolution, orientation
// pinned to reference = x (the natural signal):
//   SC = ||  |X| - |Y| ||_F / || |X| ||_F
//   LM = mean | log|X| - log|Y| |   (magnitudes floored)
template <typename T>
struct StftLossParts {
  ad::Var<T> sc;
  ad::Var<T> log_mag;
};

template <typename T>
StftLossParts<T> stft_loss_one(const ad::Var<T>& x_ref, const ad::Var<T>& y, int fft, int hop,
                               int win) {
  auto mx = ad::stft_mag(x_ref, fft, hop, win);
  auto my = ad::stft_mag(y, fft, hop, win);
  StftLossParts<T> parts;
  auto num = ad::sqrt_op(ad::sum(ad::square(ad::sub(mx, my))));
  auto den = ad::sqrt_op(ad::sum(ad::square(mx)));
  parts.sc = ad::divide(num, den);
  parts.log_mag = ad::l1_loss(ad::log_floored(mx, static_cast<T>(1e-7)),
                              ad::log_floored(my, static_cast<T>(1e-7)));
  return parts;
}

}  // namespace cycnpf::nets
