#include "cycnpf/dsp/mcep.hpp"

#include <cmath>

#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Catmull-Rom interpolation of a uniformly sampled function, edge-clamped.
double cubic_at(const std::vector<double>& y, double x) {
  const int n = static_cast<int>(y.size());
  if (x <= 0.0) return y.front();
  if (x >= n - 1) return y.back();
  const int i1 = static_cast<int>(std::floor(x));
  const double u = x - i1;
  const int i0 = i1 > 0 ? i1 - 1 : 0;
  const int i2 = i1 + 1 < n ? i1 + 1 : n - 1;
  const int i3 = i1 + 2 < n ? i1 + 2 : n - 1;
  const double p0 = y[static_cast<std::size_t>(i0)];
  const double p1 = y[static_cast<std::size_t>(i1)];
  const double p2 = y[static_cast<std::size_t>(i2)];
  const double p3 = y[static_cast<std::size_t>(i3)];
  const double a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
  const double b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
  const double c = -0.5 * p0 + 0.5 * p2;
  return ((a * u + b) * u + c) * u + p1;
}

}  // namespace

double warp_frequency(double omega, double alpha) {
  return omega + 2.0 * std::atan2(alpha * std::sin(omega), 1.0 - alpha * std::cos(omega));
}

std::vector<double> mcep_analyze(const Spectrogram& spec, int order, double alpha) {
  if (order < 1) throw ShapeError("mcep order must be >= 1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ShapeError("alpha must be in [0, 1)");

  const int bins = spec.num_bins;
  const int grid = bins;  // warped grid resolution matches the bin count
  std::vector<double> mcep(static_cast<std::size_t>(spec.num_frames) * (order + 1));

  // Linear-frequency sampling points of the uniform warped grid.
  std::vector<double> src_index(static_cast<std::size_t>(grid));
  for (int j = 0; j < grid; ++j) {
    const double warped = kPi * j / (grid - 1);
    const double omega = warp_frequency(warped, -alpha);  // inverse warp
    src_index[static_cast<std::size_t>(j)] = omega / kPi * (bins - 1);
  }

  std::vector<double> log_mag(static_cast<std::size_t>(bins));
  std::vector<double> warped_log(static_cast<std::size_t>(grid));
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int b = 0; b < bins; ++b)
      log_mag[static_cast<std::size_t>(b)] = std::log(std::max(spec.at(t, b), kMagnitudeFloor));
    for (int j = 0; j < grid; ++j)
      warped_log[static_cast<std::size_t>(j)] = cubic_at(log_mag, src_index[static_cast<std::size_t>(j)]);

    // DCT-I quadrature: c_m = (1/pi) * integral of L(w~) cos(m w~) dw~.
    double* c = &mcep[static_cast<std::size_t>(t) * (order + 1)];
    for (int m = 0; m <= order; ++m) {
      double acc = 0.5 * warped_log[0];
      for (int j = 1; j < grid - 1; ++j)
        acc += warped_log[static_cast<std::size_t>(j)] * std::cos(kPi * j * m / (grid - 1));
      acc += 0.5 * warped_log[static_cast<std::size_t>(grid - 1)] * (m % 2 == 0 ? 1.0 : -1.0);
      c[m] = acc / (grid - 1);
    }
  }
  return mcep;
}

Spectrogram mcep_to_envelope(const std::vector<double>& mcep, int num_frames, int num_coefs,
                             double alpha, int fft_size) {
  if (num_coefs < 1) throw ShapeError("mcep must have at least one coefficient");

  Spectrogram env;
  env.fft_size = fft_size;
  env.num_bins = fft_size / 2 + 1;
  env.num_frames = num_frames;
  env.mags.assign(static_cast<std::size_t>(num_frames) * env.num_bins, 0.0);

  // cos(m * warp(w_i)) table, reused across frames
  std::vector<double> cos_table(static_cast<std::size_t>(env.num_bins) * num_coefs);
  for (int b = 0; b < env.num_bins; ++b) {
    const double warped = warp_frequency(kPi * b / (env.num_bins - 1), alpha);
    for (int m = 0; m < num_coefs; ++m)
      cos_table[static_cast<std::size_t>(b) * num_coefs + m] = std::cos(m * warped);
  }

  for (int t = 0; t < num_frames; ++t) {
    const double* c = &mcep[static_cast<std::size_t>(t) * num_coefs];
    for (int b = 0; b < env.num_bins; ++b) {
      const double* ct = &cos_table[static_cast<std::size_t>(b) * num_coefs];
      double log_env = c[0];
      for (int m = 1; m < num_coefs; ++m) log_env += 2.0 * c[m] * ct[m];
      env.at(t, b) = std::exp(log_env);
    }
  }
  return env;
}

}  // namespace cycnpf::dsp
