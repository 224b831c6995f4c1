#pragma once

#include <functional>
#include <vector>

#include "cycnpf/ad/core.hpp"

namespace cycnpf::ad {

// Central finite differences against the analytic gradient. build_loss must
// rebuild the whole forward graph from the current parameter values on every
// call. Returns max over elements of |analytic - numeric| /
// max(1e-8, |analytic| + |numeric|). Intended for double precision only.
inline double grad_check(const std::function<Var<double>()>& build_loss,
                         const std::vector<Var<double>>& params, double eps = 1e-5) {
  std::size_t total = 0;
  for (const auto& p : params) total += p->numel();
  if (total > 10000) throw ShapeError("grad_check: too many parameters for finite differences");

  for (const auto& p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  auto loss = build_loss();
  backward_from(loss);

  double worst = 0.0;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = p->val[i];
      p->val[i] = saved + eps;
      const double up = build_loss()->scalar();
      p->val[i] = saved - eps;
      const double down = build_loss()->scalar();
      p->val[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double err =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cycnpf::ad
