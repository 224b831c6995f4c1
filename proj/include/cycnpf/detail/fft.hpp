#pragma once

#include <cmath>
#include <complex>
#include <vector>

namespace cycnpf::detail {

// Iterative radix-2 complex FFT, length must be a power of two.
// inverse=true is the unnormalized inverse transform (no 1/n factor).
template <typename T>
void fft_radix2(std::vector<std::complex<T>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * 3.14159265358979323846 / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const std::complex<T> wl(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<T> w(static_cast<T>(1), static_cast<T>(0));
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<T> u = a[i + k];
        const std::complex<T> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace cycnpf::detail
