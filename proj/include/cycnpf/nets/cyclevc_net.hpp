#pragma once

// Frame-based spectral conversion module: 1x1 input conv, two 3x1 convs with
// dilation 3, a single autoregressive GRU layer (previous output frame
// appended to the GRU input), and two 1x1 output convs. Templated so the
// training tape runs in float and the finite-difference suite in double.

#include <string>
#include <vector>

#include "cycnpf/ad/core.hpp"
#include "cycnpf/ad/optim.hpp"

namespace cycnpf::nets {

struct CycleVcDims {
  int input_dim = 50;
  int output_dim = 45;
  int conv_channels = 64;
  int gru_hidden = 128;
};

template <typename T>
struct ConvModule {
  ad::Var<T> in1_w, in1_b;        // [I x C], [C]
  ad::Var<T> conv3a_w, conv3a_b;  // [3 x C x C], [C]
  ad::Var<T> conv3b_w, conv3b_b;
  ad::Var<T> gru_wx, gru_wh, gru_b;  // [(C+O) x 3H], [H x 3H], [3H]
  ad::Var<T> out1_w, out1_b;  // [H x C], [C]
  ad::Var<T> out2_w, out2_b;  // [C x O], [O]
};

template <typename T>
ConvModule<T> register_conv_module(ad::Graph<T>& g, const std::string& prefix,
                                   const CycleVcDims& d, Rng& rng) {
  ConvModule<T> m;
  const int c = d.conv_channels;
  const int h = d.gru_hidden;
  const int gin = c + d.output_dim;
  auto u = [&](std::size_t count, int fan_in) {
    return ad::cast_vec<T>(ad::uniform_fan_in(rng, count, fan_in));
  };
  m.in1_w = g.param(prefix + ".in1.w", {d.input_dim, c}, u(static_cast<std::size_t>(d.input_dim) * c, d.input_dim));
  m.in1_b = g.param(prefix + ".in1.b", {c}, std::vector<T>(c, T(0)));
  m.conv3a_w = g.param(prefix + ".conv3a.w", {3, c, c}, u(static_cast<std::size_t>(3) * c * c, 3 * c));
  m.conv3a_b = g.param(prefix + ".conv3a.b", {c}, std::vector<T>(c, T(0)));
  m.conv3b_w = g.param(prefix + ".conv3b.w", {3, c, c}, u(static_cast<std::size_t>(3) * c * c, 3 * c));
  m.conv3b_b = g.param(prefix + ".conv3b.b", {c}, std::vector<T>(c, T(0)));
  m.gru_wx = g.param(prefix + ".gru.wx", {gin, 3 * h}, u(static_cast<std::size_t>(gin) * 3 * h, gin));
  m.gru_wh = g.param(prefix + ".gru.wh", {h, 3 * h},
                     ad::cast_vec<T>(ad::orthogonal_gru_recurrent(rng, h)));
  m.gru_b = g.param(prefix + ".gru.b", {3 * h}, std::vector<T>(static_cast<std::size_t>(3) * h, T(0)));
  m.out1_w = g.param(prefix + ".out1.w", {h, c}, u(static_cast<std::size_t>(h) * c, h));
  m.out1_b = g.param(prefix + ".out1.b", {c}, std::vector<T>(c, T(0)));
  m.out2_w = g.param(prefix + ".out2.w", {c, d.output_dim}, u(static_cast<std::size_t>(c) * d.output_dim, c));
  m.out2_b = g.param(prefix + ".out2.b", {d.output_dim}, std::vector<T>(d.output_dim, T(0)));
  return m;
}

// Teacher-forced forward: the AR feedback rows come from the caller (ground
// truth during training, or a previous tape when chaining modules).
// x [T x input_dim]; feedback rows are [output_dim] vectors, feedback[t] is
// what the module "produced" at t-1 (index 0 = all zeros).
template <typename T>
ad::Var<T> module_forward_tape(const ConvModule<T>& m, const ad::Var<T>& x,
                               const std::vector<ad::Var<T>>& feedback, const CycleVcDims& d) {
  if (x->shape.size() != 2 || x->shape[1] != d.input_dim)
    throw ShapeError("conversion module expects [T x " + std::to_string(d.input_dim) +
                     "] input, got " + ad::detail::shape_str(x->shape));
  const int frames = x->shape[0];
  if (static_cast<int>(feedback.size()) != frames)
    throw ShapeError("feedback row count does not match input frames");

  auto hcur = ad::relu(ad::linear(x, m.in1_w, m.in1_b));
  hcur = ad::relu(ad::conv1d(hcur, m.conv3a_w, m.conv3a_b, 3, false));
  hcur = ad::relu(ad::conv1d(hcur, m.conv3b_w, m.conv3b_b, 3, false));

  ad::Var<T> state = ad::constant<T>({d.gru_hidden});
  std::vector<ad::Var<T>> states;
  states.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    auto gin = ad::concat_vec(ad::row(hcur, t), feedback[static_cast<std::size_t>(t)]);
    state = ad::gru_cell(gin, state, m.gru_wx, m.gru_wh, m.gru_b);
    states.push_back(state);
  }
  auto hidden = ad::stack_rows(states);
  auto out = ad::relu(ad::linear(hidden, m.out1_w, m.out1_b));
  return ad::linear(out, m.out2_w, m.out2_b);
}

// Free-running forward, plain math (no tape): the module feeds back its own
// previous output frame, zeros at t = 0. Used at inference.
template <typename T>
std::vector<T> module_forward_free(const ConvModule<T>& m, const std::vector<T>& x, int frames,
                                   const CycleVcDims& d) {
  const int c = d.conv_channels;
  const int h = d.gru_hidden;
  const int odim = d.output_dim;
  const int gin_dim = c + odim;

  // relu(x W + b) per frame; W is [I x O]
  auto linear_relu = [frames](const std::vector<T>& in, int ch_in, const ad::Var<T>& w,
                              const ad::Var<T>& b, int ch_out) {
    std::vector<T> out(static_cast<std::size_t>(frames) * ch_out);
    for (int t = 0; t < frames; ++t) {
      T* yr = &out[static_cast<std::size_t>(t) * ch_out];
      for (int o = 0; o < ch_out; ++o) yr[o] = b->val[static_cast<std::size_t>(o)];
      const T* xr = &in[static_cast<std::size_t>(t) * ch_in];
      for (int i = 0; i < ch_in; ++i) {
        const T xv = xr[i];
        const T* wr = &w->val[static_cast<std::size_t>(i) * ch_out];
        for (int o = 0; o < ch_out; ++o) yr[o] += xv * wr[o];
      }
      for (int o = 0; o < ch_out; ++o) yr[o] = yr[o] > T(0) ? yr[o] : T(0);
    }
    return out;
  };
  // relu of a "same"-padded conv; W is [k x I x O]
  auto conv_relu = [frames](const std::vector<T>& in, int ch_in, const ad::Var<T>& w,
                            const ad::Var<T>& b, int ch_out, int dilation) {
    const int k = w->shape[0];
    const int base = -((k - 1) / 2) * dilation;
    std::vector<T> out(static_cast<std::size_t>(frames) * ch_out);
    for (int t = 0; t < frames; ++t) {
      T* yr = &out[static_cast<std::size_t>(t) * ch_out];
      for (int o = 0; o < ch_out; ++o) yr[o] = b->val[static_cast<std::size_t>(o)];
      for (int tap = 0; tap < k; ++tap) {
        const int src = t + base + tap * dilation;
        if (src < 0 || src >= frames) continue;
        const T* xr = &in[static_cast<std::size_t>(src) * ch_in];
        const T* wt = &w->val[static_cast<std::size_t>(tap) * ch_in * ch_out];
        for (int i = 0; i < ch_in; ++i) {
          const T xv = xr[i];
          const T* wr = &wt[static_cast<std::size_t>(i) * ch_out];
          for (int o = 0; o < ch_out; ++o) yr[o] += xv * wr[o];
        }
      }
      for (int o = 0; o < ch_out; ++o) yr[o] = yr[o] > T(0) ? yr[o] : T(0);
    }
    return out;
  };

  std::vector<T> hs = linear_relu(x, d.input_dim, m.in1_w, m.in1_b, c);
  hs = conv_relu(hs, c, m.conv3a_w, m.conv3a_b, c, 3);
  hs = conv_relu(hs, c, m.conv3b_w, m.conv3b_b, c, 3);

  std::vector<T> out(static_cast<std::size_t>(frames) * odim);
  std::vector<T> state(static_cast<std::size_t>(h), T(0));
  std::vector<T> prev_out(static_cast<std::size_t>(odim), T(0));
  std::vector<T> gin(static_cast<std::size_t>(gin_dim));
  std::vector<T> pre(static_cast<std::size_t>(3) * h);
  std::vector<T> q(static_cast<std::size_t>(h));
  std::vector<T> mid(static_cast<std::size_t>(c));

  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < c; ++i) gin[static_cast<std::size_t>(i)] = hs[static_cast<std::size_t>(t) * c + i];
    for (int i = 0; i < odim; ++i) gin[static_cast<std::size_t>(c + i)] = prev_out[static_cast<std::size_t>(i)];

    for (int j = 0; j < 3 * h; ++j) pre[static_cast<std::size_t>(j)] = m.gru_b->val[static_cast<std::size_t>(j)];
    for (int i = 0; i < gin_dim; ++i) {
      const T xv = gin[static_cast<std::size_t>(i)];
      const T* wr = &m.gru_wx->val[static_cast<std::size_t>(i) * 3 * h];
      for (int j = 0; j < 3 * h; ++j) pre[static_cast<std::size_t>(j)] += xv * wr[j];
    }
    std::fill(q.begin(), q.end(), T(0));
    for (int i = 0; i < h; ++i) {
      const T hv = state[static_cast<std::size_t>(i)];
      const T* wr = &m.gru_wh->val[static_cast<std::size_t>(i) * 3 * h];
      for (int j = 0; j < 2 * h; ++j) pre[static_cast<std::size_t>(j)] += hv * wr[j];
      for (int j = 0; j < h; ++j) q[static_cast<std::size_t>(j)] += hv * wr[2 * h + j];
    }
    for (int j = 0; j < h; ++j) {
      const T z = T(1) / (T(1) + std::exp(-pre[static_cast<std::size_t>(j)]));
      const T r = T(1) / (T(1) + std::exp(-pre[static_cast<std::size_t>(h + j)]));
      const T n = std::tanh(pre[static_cast<std::size_t>(2 * h + j)] + r * q[static_cast<std::size_t>(j)]);
      state[static_cast<std::size_t>(j)] = (T(1) - z) * n + z * state[static_cast<std::size_t>(j)];
    }

    for (int o = 0; o < c; ++o) mid[static_cast<std::size_t>(o)] = m.out1_b->val[static_cast<std::size_t>(o)];
    for (int i = 0; i < h; ++i) {
      const T hv = state[static_cast<std::size_t>(i)];
      const T* wr = &m.out1_w->val[static_cast<std::size_t>(i) * c];
      for (int o = 0; o < c; ++o) mid[static_cast<std::size_t>(o)] += hv * wr[o];
    }
    for (int o = 0; o < c; ++o)
      mid[static_cast<std::size_t>(o)] = mid[static_cast<std::size_t>(o)] > T(0) ? mid[static_cast<std::size_t>(o)] : T(0);

    T* yr = &out[static_cast<std::size_t>(t) * odim];
    for (int o = 0; o < odim; ++o) yr[o] = m.out2_b->val[static_cast<std::size_t>(o)];
    for (int i = 0; i < c; ++i) {
      const T xv = mid[static_cast<std::size_t>(i)];
      const T* wr = &m.out2_w->val[static_cast<std::size_t>(i) * odim];
      for (int o = 0; o < odim; ++o) yr[o] += xv * wr[o];
    }
    for (int o = 0; o < odim; ++o) prev_out[static_cast<std::size_t>(o)] = yr[o];
  }
  return out;
}

// Feedback rows for teacher forcing: row t holds target[t-1], zeros at t=0.
template <typename T>
std::vector<ad::Var<T>> teacher_feedback(const std::vector<T>& target, int frames, int dim) {
  std::vector<ad::Var<T>> rows;
  rows.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    std::vector<T> v(static_cast<std::size_t>(dim), T(0));
    if (t > 0)
      std::copy(target.begin() + static_cast<std::size_t>(t - 1) * dim,
                target.begin() + static_cast<std::size_t>(t) * dim, v.begin());
    rows.push_back(ad::constant<T>({dim}, std::move(v)));
  }
  return rows;
}

// Eq-style cyclic objective on aligned pairs, everything in normalized space:
//   L = L1(f_st(A) - B_mcep) + rho * L1(f_st(f_ts(B)) - B_mcep)
// A, B are [T x 50] conditioning matrices; *_mcep are their first 45 columns.
// Teacher forcing: f_st is fed B's previous mcep frame on both paths, f_ts is
// fed A's previous mcep frame.
template <typename T>
struct CycleLossParts {
  ad::Var<T> total;
  ad::Var<T> direct;  // StoT path
  ad::Var<T> cycle;   // TtoS -> StoT path
};

template <typename T>
std::vector<T> first_columns(const std::vector<T>& mat, int frames, int width, int take) {
  std::vector<T> out(static_cast<std::size_t>(frames) * take);
  for (int t = 0; t < frames; ++t)
    std::copy(mat.begin() + static_cast<std::size_t>(t) * width,
              mat.begin() + static_cast<std::size_t>(t) * width + take,
              out.begin() + static_cast<std::size_t>(t) * take);
  return out;
}

template <typename T>
CycleLossParts<T> cycle_loss_tape(const ConvModule<T>& stot, const ConvModule<T>& ttos,
                                  const std::vector<T>& a, const std::vector<T>& b, int frames,
                                  const CycleVcDims& d, double rho) {
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(frames) * d.input_dim)
    throw ShapeError("cycle_loss: A and B must both be [T x input_dim] with equal T");

  const std::vector<T> a_mcep = first_columns(a, frames, d.input_dim, d.output_dim);
  const std::vector<T> b_mcep = first_columns(b, frames, d.input_dim, d.output_dim);
  auto a_in = ad::constant<T>({frames, d.input_dim}, std::vector<T>(a));
  auto b_in = ad::constant<T>({frames, d.input_dim}, std::vector<T>(b));
  auto b_target = ad::constant<T>({frames, d.output_dim}, std::vector<T>(b_mcep));

  CycleLossParts<T> parts;

  auto st_direct = module_forward_tape(stot, a_in, teacher_feedback(b_mcep, frames, d.output_dim), d);
  parts.direct = ad::l1_loss(st_direct, b_target);

  auto ts_out = module_forward_tape(ttos, b_in, teacher_feedback(a_mcep, frames, d.output_dim), d);
  // reassemble 50-dim input for the outer StoT: converted mcep + B's prosody
  std::vector<ad::Var<T>> cyc_rows;
  cyc_rows.reserve(static_cast<std::size_t>(frames));
  const int rest = d.input_dim - d.output_dim;
  for (int t = 0; t < frames; ++t) {
    std::vector<T> prosody(static_cast<std::size_t>(rest));
    std::copy(b.begin() + static_cast<std::size_t>(t) * d.input_dim + d.output_dim,
              b.begin() + static_cast<std::size_t>(t + 1) * d.input_dim, prosody.begin());
    cyc_rows.push_back(
        ad::concat_vec(ad::row(ts_out, t), ad::constant<T>({rest}, std::move(prosody))));
  }
  auto cyc_in = ad::stack_rows(cyc_rows);
  auto st_cycle = module_forward_tape(stot, cyc_in, teacher_feedback(b_mcep, frames, d.output_dim), d);
  parts.cycle = ad::l1_loss(st_cycle, b_target);

  parts.total = ad::add(parts.direct, ad::scale(parts.cycle, static_cast<T>(rho)));
  return parts;
}

}  // namespace cycnpf::nets
