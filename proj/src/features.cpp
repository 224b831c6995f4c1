#include "cycnpf/dsp/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cycnpf/dsp/aperiodicity.hpp"
#include "cycnpf/dsp/mcep.hpp"
#include "cycnpf/dsp/stft.hpp"
#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

namespace {

constexpr char kMagic[5] = {'C', 'N', 'P', 'F', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw DataError("truncated feature file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_block(std::ofstream& f, const std::vector<double>& src) {
  std::vector<float> tmp(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) tmp[i] = static_cast<float>(src[i]);
  f.write(reinterpret_cast<const char*>(tmp.data()),
          static_cast<std::streamsize>(tmp.size() * sizeof(float)));
}

std::vector<double> read_f32_block(std::ifstream& f, std::size_t count, const std::string& path) {
  std::vector<float> tmp(count);
  f.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!f) throw DataError("truncated feature file: " + path);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = tmp[i];
  return out;
}

}  // namespace

std::uint64_t AnalysisConfig::schema_hash() const {
  std::string s = "mcep" + std::to_string(mcep_order + 1) + "|lf0:1|uv:1|ap:" +
                  std::to_string(kApDim) + "|hop" + std::to_string(hop_size) + "|sr" +
                  std::to_string(sample_rate) + "|alpha" + std::to_string(alpha);
  return fnv1a64(s);
}

std::vector<float> FeatureSequence::conditioning_row(int t) const {
  std::vector<float> row(kConditioningDim);
  const double* m = &mcep[static_cast<std::size_t>(t) * kMcepDim];
  for (int d = 1; d <= kMcepOrder; ++d) row[static_cast<std::size_t>(d - 1)] = static_cast<float>(m[d]);
  row[kMcepOrder] = static_cast<float>(log_f0[static_cast<std::size_t>(t)]);
  row[kMcepOrder + 1] = static_cast<float>(uv[static_cast<std::size_t>(t)]);
  for (int k = 0; k < kApDim; ++k)
    row[static_cast<std::size_t>(kMcepOrder + 2 + k)] =
        static_cast<float>(coded_ap[static_cast<std::size_t>(t) * kApDim + k]);
  return row;
}

std::vector<float> FeatureSequence::conditioning_matrix() const {
  std::vector<float> out(static_cast<std::size_t>(num_frames) * kConditioningDim);
  for (int t = 0; t < num_frames; ++t) {
    const auto row = conditioning_row(t);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::size_t>(t) * kConditioningDim);
  }
  return out;
}

std::vector<double> FeatureSequence::shape_mcep() const {
  std::vector<double> out(static_cast<std::size_t>(num_frames) * kMcepOrder);
  for (int t = 0; t < num_frames; ++t)
    for (int d = 0; d < kMcepOrder; ++d)
      out[static_cast<std::size_t>(t) * kMcepOrder + d] = mcep_at(t, d + 1);
  return out;
}

void FeatureSequence::set_shape_mcep(const std::vector<double>& shape) {
  if (shape.size() != static_cast<std::size_t>(num_frames) * kMcepOrder)
    throw ShapeError("shape mcep size mismatch");
  for (int t = 0; t < num_frames; ++t)
    for (int d = 0; d < kMcepOrder; ++d)
      mcep_at(t, d + 1) = shape[static_cast<std::size_t>(t) * kMcepOrder + d];
}

FeatureSequence assemble_features(const Waveform& wave, const AnalysisConfig& cfg,
                                  bool* all_unvoiced_warning) {
  const Spectrogram spec = stft_magnitude(wave, cfg.fft_size, cfg.hop_size, cfg.win_size);
  std::vector<double> mcep = mcep_analyze(spec, cfg.mcep_order, cfg.alpha);

  F0Config f0cfg = cfg.f0;
  f0cfg.hop_size = cfg.hop_size;
  const F0Result f0 = extract_f0(wave, f0cfg);
  if (all_unvoiced_warning) *all_unvoiced_warning = f0.all_unvoiced;

  int ap_frames = 0;
  std::vector<double> ap = band_aperiodicity(wave, cfg.hop_size, &ap_frames);

  const int t_spec = spec.num_frames;
  const int t_f0 = static_cast<int>(f0.log_f0.size());
  const int lo = std::min({t_spec, t_f0, ap_frames});
  const int hi = std::max({t_spec, t_f0, ap_frames});
  if (hi - lo > 2)
    throw ShapeError("analyzer frame counts disagree by more than 2 frames: stft=" +
                     std::to_string(t_spec) + " f0=" + std::to_string(t_f0) +
                     " ap=" + std::to_string(ap_frames));

  FeatureSequence f;
  f.num_frames = lo;
  f.hop_size = cfg.hop_size;
  f.sample_rate = cfg.sample_rate;
  f.alpha = cfg.alpha;
  f.mcep.assign(mcep.begin(), mcep.begin() + static_cast<std::size_t>(lo) * kMcepDim);
  f.log_f0.assign(f0.log_f0.begin(), f0.log_f0.begin() + lo);
  f.uv.assign(f0.uv.begin(), f0.uv.begin() + lo);
  f.coded_ap.assign(ap.begin(), ap.begin() + static_cast<std::size_t>(lo) * kApDim);
  return f;
}

void write_features(const std::string& path, const FeatureSequence& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature file: " + path);
  out.write(kMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(f.num_frames));
  put_u32(out, static_cast<std::uint32_t>(f.hop_size));
  put_u32(out, static_cast<std::uint32_t>(f.sample_rate));
  put_u32(out, kMcepDim);
  put_u32(out, 1);
  put_u32(out, 1);
  put_u32(out, kApDim);
  write_f32_block(out, f.mcep);
  write_f32_block(out, f.log_f0);
  write_f32_block(out, f.uv);
  write_f32_block(out, f.coded_ap);
  if (!out) throw DataError("short write on feature file: " + path);
}

FeatureSequence read_features(const std::string& path, double alpha) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0)
    throw DataError("bad feature file magic: " + path);

  FeatureSequence f;
  f.num_frames = static_cast<int>(get_u32(in, path));
  f.hop_size = static_cast<int>(get_u32(in, path));
  f.sample_rate = static_cast<int>(get_u32(in, path));
  const std::uint32_t d_mcep = get_u32(in, path);
  const std::uint32_t d_lf0 = get_u32(in, path);
  const std::uint32_t d_uv = get_u32(in, path);
  const std::uint32_t d_ap = get_u32(in, path);
  if (d_mcep != kMcepDim || d_lf0 != 1 || d_uv != 1 || d_ap != kApDim)
    throw DataError("unexpected stream dims in feature file: " + path);
  f.alpha = alpha;
  const std::size_t t = static_cast<std::size_t>(f.num_frames);
  f.mcep = read_f32_block(in, t * kMcepDim, path);
  f.log_f0 = read_f32_block(in, t, path);
  f.uv = read_f32_block(in, t, path);
  f.coded_ap = read_f32_block(in, t * kApDim, path);
  return f;
}

std::vector<float> upsample_conditioning(const FeatureSequence& f, int hop) {
  const std::vector<float> frames = f.conditioning_matrix();
  std::vector<float> out(static_cast<std::size_t>(f.num_frames) * hop * kConditioningDim);
  for (int t = 0; t < f.num_frames; ++t) {
    const float* src = &frames[static_cast<std::size_t>(t) * kConditioningDim];
    for (int s = 0; s < hop; ++s) {
      float* dst = &out[(static_cast<std::size_t>(t) * hop + s) * kConditioningDim];
      std::memcpy(dst, src, kConditioningDim * sizeof(float));
    }
  }
  return out;
}

}  // namespace cycnpf::dsp
