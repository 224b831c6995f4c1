#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cycnpf/ad/core.hpp"

namespace cycnpf::ad {

template <typename T>
struct AdamState {
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
  };
  std::map<std::string, Slot> slots;
  long step = 0;
  long skipped_nonfinite = 0;  // warning counter, raised per skipped tensor
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. A parameter tensor whose gradient
// contains a non-finite value is skipped for this step (its moments are not
// touched) and the warning counter is raised. only_prefix restricts the
// update to one parameter group (two-optimizer GAN schedule).
template <typename T>
void adam_step(Graph<T>& graph, AdamState<T>& state, const AdamConfig& cfg,
               const std::string& only_prefix = "") {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : graph.params()) {
    if (!only_prefix.empty() && name.rfind(only_prefix, 0) != 0) continue;
    p->ensure_grad();
    bool finite = true;
    for (T g : p->grad)
      if (!std::isfinite(static_cast<double>(g))) {
        finite = false;
        break;
      }
    if (!finite) {
      ++state.skipped_nonfinite;
      continue;
    }
    auto& slot = state.slots[name];
    if (slot.m.size() != p->numel()) {
      slot.m.assign(p->numel(), T(0));
      slot.v.assign(p->numel(), T(0));
    }
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      const double m = cfg.beta1 * static_cast<double>(slot.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(slot.v[i]) + (1.0 - cfg.beta2) * g * g;
      slot.m[i] = static_cast<T>(m);
      slot.v[i] = static_cast<T>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->val[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

// Uniform(-s, s) with s = sqrt(1 / fan_in).
inline std::vector<double> uniform_fan_in(Rng& rng, std::size_t count, int fan_in) {
  const double s = std::sqrt(1.0 / std::max(1, fan_in));
  std::vector<double> out(count);
  for (auto& v : out) v = rng.uniform(-s, s);
  return out;
}

// Orthogonal square matrix via modified Gram-Schmidt on a Gaussian sample.
inline std::vector<double> orthogonal_square(Rng& rng, int n) {
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (auto& v : a) v = rng.normal();
  for (int c = 0; c < n; ++c) {
    for (int prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (int r = 0; r < n; ++r)
        dot += a[static_cast<std::size_t>(r) * n + c] * a[static_cast<std::size_t>(r) * n + prev];
      for (int r = 0; r < n; ++r)
        a[static_cast<std::size_t>(r) * n + c] -= dot * a[static_cast<std::size_t>(r) * n + prev];
    }
    double norm = 0.0;
    for (int r = 0; r < n; ++r) {
      const double v = a[static_cast<std::size_t>(r) * n + c];
      norm += v * v;
    }
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int r = 0; r < n; ++r) a[static_cast<std::size_t>(r) * n + c] /= norm;
  }
  return a;
}

// Recurrent-to-hidden block [H x 3H]: three orthogonal H x H blocks.
inline std::vector<double> orthogonal_gru_recurrent(Rng& rng, int hidden) {
  std::vector<double> out(static_cast<std::size_t>(hidden) * 3 * hidden);
  for (int g = 0; g < 3; ++g) {
    const auto block = orthogonal_square(rng, hidden);
    for (int r = 0; r < hidden; ++r)
      for (int c = 0; c < hidden; ++c)
        out[static_cast<std::size_t>(r) * 3 * hidden + g * hidden + c] =
            block[static_cast<std::size_t>(r) * hidden + c];
  }
  return out;
}

template <typename T>
std::vector<T> cast_vec(const std::vector<double>& v) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i]);
  return out;
}

}  // namespace cycnpf::ad
