#pragma once

#include <cmath>
#include <cstdint>

namespace cycnpf::dsp {

// 8-bit mu-law companding, mu = 255. Inputs outside [-1, 1] are clipped.
// Bin convention: code = clamp(floor((y + 1) / 2 * 256), 0, 255) where
// y = sign(x) * ln(1 + mu|x|) / ln(1 + mu); decode maps a code to the center
// of its companded-domain bin and inverts. encode(decode(c)) == c for all c.
inline std::uint8_t mulaw_encode(double x) {
  constexpr double mu = 255.0;
  if (x > 1.0) x = 1.0;
  if (x < -1.0) x = -1.0;
  const double y = (x >= 0.0 ? 1.0 : -1.0) * std::log1p(mu * std::fabs(x)) / std::log1p(mu);
  int code = static_cast<int>(std::floor((y + 1.0) * 0.5 * 256.0));
  if (code < 0) code = 0;
  if (code > 255) code = 255;
  return static_cast<std::uint8_t>(code);
}

inline double mulaw_decode(std::uint8_t code) {
  constexpr double mu = 255.0;
  const double y = (static_cast<double>(code) + 0.5) / 256.0 * 2.0 - 1.0;
  return (y >= 0.0 ? 1.0 : -1.0) * (std::pow(1.0 + mu, std::fabs(y)) - 1.0) / mu;
}

}  // namespace cycnpf::dsp
