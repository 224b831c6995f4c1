#include "cycnpf/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "cycnpf/util.hpp"

namespace cycnpf::metrics {

namespace {

std::atomic<std::uint64_t> g_dtw_calls{0};

double local_cost(const double* a, const double* b, int dims) {
  double acc = 0.0;
  for (int d = 0; d < dims; ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

std::uint64_t dtw_call_count() { return g_dtw_calls.load(); }
void reset_dtw_call_count() { g_dtw_calls.store(0); }

void zscore_pair(std::vector<double>& x, std::vector<double>& y, int dims) {
  const std::size_t tx = x.size() / dims;
  const std::size_t ty = y.size() / dims;
  for (int d = 0; d < dims; ++d) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < tx; ++t) sum += x[t * dims + d];
    for (std::size_t t = 0; t < ty; ++t) sum += y[t * dims + d];
    const double n = static_cast<double>(tx + ty);
    const double mean = sum / n;
    for (std::size_t t = 0; t < tx; ++t) {
      const double v = x[t * dims + d] - mean;
      sq += v * v;
    }
    for (std::size_t t = 0; t < ty; ++t) {
      const double v = y[t * dims + d] - mean;
      sq += v * v;
    }
    const double std_dev = std::sqrt(std::max(sq / n, 1e-12));
    for (std::size_t t = 0; t < tx; ++t) x[t * dims + d] = (x[t * dims + d] - mean) / std_dev;
    for (std::size_t t = 0; t < ty; ++t) y[t * dims + d] = (y[t * dims + d] - mean) / std_dev;
  }
}

AlignmentPath dtw_align(const std::vector<double>& x, int tx, const std::vector<double>& y,
                        int ty, int dims, int band) {
  if (tx <= 0 || ty <= 0) throw ShapeError("dtw_align requires non-empty sequences");
  g_dtw_calls.fetch_add(1);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(static_cast<std::size_t>(tx) * ty, kInf);
  std::vector<std::uint8_t> from(static_cast<std::size_t>(tx) * ty, 0);  // 1=(1,1) 2=(1,0) 3=(0,1)

  auto in_band = [&](int i, int j) {
    if (band <= 0) return true;
    const double center = ty > 1 ? static_cast<double>(i) * (ty - 1) / std::max(1, tx - 1) : 0.0;
    return std::abs(j - center) <= band;
  };

  for (int i = 0; i < tx; ++i) {
    for (int j = 0; j < ty; ++j) {
      if (!in_band(i, j)) continue;
      const double d = local_cost(&x[static_cast<std::size_t>(i) * dims],
                                  &y[static_cast<std::size_t>(j) * dims], dims);
      if (i == 0 && j == 0) {
        cost[0] = d;
        continue;
      }
      double best = kInf;
      std::uint8_t step = 0;
      if (i > 0 && j > 0 && cost[static_cast<std::size_t>(i - 1) * ty + (j - 1)] < best) {
        best = cost[static_cast<std::size_t>(i - 1) * ty + (j - 1)];
        step = 1;
      }
      if (i > 0 && cost[static_cast<std::size_t>(i - 1) * ty + j] < best) {
        best = cost[static_cast<std::size_t>(i - 1) * ty + j];
        step = 2;
      }
      if (j > 0 && cost[static_cast<std::size_t>(i) * ty + (j - 1)] < best) {
        best = cost[static_cast<std::size_t>(i) * ty + (j - 1)];
        step = 3;
      }
      if (step == 0) continue;  // unreachable inside the band
      cost[static_cast<std::size_t>(i) * ty + j] = best + d;
      from[static_cast<std::size_t>(i) * ty + j] = step;
    }
  }

  AlignmentPath path;
  int i = tx - 1, j = ty - 1;
  while (true) {
    path.pairs.emplace_back(i, j);
    if (i == 0 && j == 0) break;
    const std::uint8_t step = from[static_cast<std::size_t>(i) * ty + j];
    if (step == 1) {
      --i;
      --j;
    } else if (step == 2) {
      --i;
    } else if (step == 3) {
      --j;
    } else {
      throw ShapeError("dtw_align: band too narrow, no path reaches the start");
    }
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

double dtw_path_cost(const std::vector<double>& x, const std::vector<double>& y, int dims,
                     const AlignmentPath& path) {
  double acc = 0.0;
  for (const auto& [i, j] : path.pairs)
    acc += local_cost(&x[static_cast<std::size_t>(i) * dims],
                      &y[static_cast<std::size_t>(j) * dims], dims);
  return acc;
}

std::vector<double> warp_to_target(const std::vector<double>& x, int tx, int dims,
                                   const AlignmentPath& path, int target_len) {
  if (path.pairs.empty() || path.pairs.front() != std::make_pair(0, 0) ||
      path.pairs.back() != std::make_pair(tx - 1, target_len - 1))
    throw ShapeError("warp_to_target: path does not span the given lengths");
  std::vector<double> out(static_cast<std::size_t>(target_len) * dims);
  for (const auto& [i, j] : path.pairs) {
    if (i < 0 || i >= tx || j < 0 || j >= target_len)
      throw ShapeError("warp_to_target: path index out of range");
    // later pairs with the same j overwrite, leaving the last i
    for (int d = 0; d < dims; ++d)
      out[static_cast<std::size_t>(j) * dims + d] = x[static_cast<std::size_t>(i) * dims + d];
  }
  return out;
}

double mcd(const std::vector<double>& x, int tx, const std::vector<double>& y, int ty, int dims,
           bool pre_aligned) {
  if (tx <= 0 || ty <= 0) throw ShapeError("mcd requires non-empty sequences");

  const std::vector<double>* px = &x;
  std::vector<double> warped;
  int frames = tx;
  if (pre_aligned) {
    if (tx != ty) throw ShapeError("mcd: pre-aligned sequences must have equal length");
  } else {
    std::vector<double> xz = x, yz = y;
    zscore_pair(xz, yz, dims);
    const AlignmentPath path = dtw_align(xz, tx, yz, ty, dims);
    warped = warp_to_target(x, tx, dims, path, ty);
    px = &warped;
    frames = ty;
  }

  double acc = 0.0;
  for (int t = 0; t < frames; ++t) {
    double sq = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double diff = (*px)[static_cast<std::size_t>(t) * dims + d] -
                          y[static_cast<std::size_t>(t) * dims + d];
      sq += diff * diff;
    }
    acc += std::sqrt(sq);
  }
  return kMcdConstant * acc / frames;
}

double lsd(const dsp::Spectrogram& x, const dsp::Spectrogram& y) {
  if (x.num_frames != y.num_frames || x.num_bins != y.num_bins)
    throw ShapeError("lsd: spectrogram shapes differ");
  constexpr double kFloor = 1e-10;
  double acc = 0.0;
  for (int t = 0; t < x.num_frames; ++t) {
    double sq = 0.0;
    for (int b = 0; b < x.num_bins; ++b) {
      const double lx = std::log10(std::max(x.at(t, b), kFloor));
      const double ly = std::log10(std::max(y.at(t, b), kFloor));
      const double d = 20.0 * (lx - ly);
      sq += d * d;
    }
    acc += std::sqrt(sq / x.num_bins);
  }
  return acc / x.num_frames;
}

double lgd(const std::vector<double>& x, int tx, const std::vector<double>& y, int ty, int dims) {
  if (tx < 2 || ty < 2) throw ShapeError("lgd requires at least 2 frames per sequence");
  constexpr double kFloor = 1e-12;
  auto gv = [dims](const std::vector<double>& m, int frames, int d) {
    double mean = 0.0;
    for (int t = 0; t < frames; ++t) mean += m[static_cast<std::size_t>(t) * dims + d];
    mean /= frames;
    double var = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double v = m[static_cast<std::size_t>(t) * dims + d] - mean;
      var += v * v;
    }
    return var / frames;  // population variance
  };
  double acc = 0.0;
  for (int d = 0; d < dims; ++d) {
    const double gx = std::log(std::max(gv(x, tx, d), kFloor));
    const double gy = std::log(std::max(gv(y, ty, d), kFloor));
    acc += (gx - gy) * (gx - gy);
  }
  return std::sqrt(acc / dims);
}

}  // namespace cycnpf::metrics
