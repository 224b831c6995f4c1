#include "cycnpf/dsp/wave.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cycnpf/util.hpp"

namespace cycnpf::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

void clip_waveform(Waveform& w) {
  for (double& s : w.samples) s = std::clamp(s, -1.0, 1.0);
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const std::uint32_t chunk_len = read_u32(p + off + 4);
    if (std::memcmp(p + off, "fmt ", 4) == 0 && off + 8 + 16 <= n) {
      const std::uint16_t format = read_u16(p + off + 8);
      channels = read_u16(p + off + 10);
      sample_rate = static_cast<int>(read_u32(p + off + 12));
      bits = read_u16(p + off + 22);
      if (format != 1) throw DataError("WAV is not PCM: " + path);
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      data = p + off + 8;
      data_len = std::min<std::size_t>(chunk_len, n - off - 8);
    }
    off += 8 + chunk_len + (chunk_len & 1);
  }
  if (!data || sample_rate <= 0) throw DataError("WAV missing fmt/data chunk: " + path);
  if (channels != 1) throw DataError("WAV must be mono: " + path);
  if (bits != 16) throw DataError("WAV must be PCM16: " + path);

  Waveform w;
  w.sample_rate = sample_rate;
  const std::size_t count = data_len / 2;
  w.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int16_t v = static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    w.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const int v = static_cast<int>(std::lrint(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write on WAV file: " + path);
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw DataError("target sample rate must be positive");
  if (w.sample_rate == target_rate) return w;

  constexpr int kHalfTaps = 32;
  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const double cutoff = 0.95 * std::min(1.0, ratio);  // relative to input Nyquist
  const std::size_t out_len =
      static_cast<std::size_t>(std::floor(static_cast<double>(w.samples.size()) * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);

  const auto& x = w.samples;
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double pos = static_cast<double>(m) / ratio;
    const std::int64_t center = static_cast<std::int64_t>(std::floor(pos));
    double acc = 0.0;
    for (std::int64_t k = center - kHalfTaps + 1; k <= center + kHalfTaps; ++k) {
      if (k < 0 || k >= n) continue;
      const double t = pos - static_cast<double>(k);
      double sinc;
      if (std::fabs(t) < 1e-12) {
        sinc = cutoff;
      } else {
        sinc = std::sin(kPi * cutoff * t) / (kPi * t);
      }
      const double win = 0.5 * (1.0 + std::cos(kPi * t / kHalfTaps));
      acc += x[static_cast<std::size_t>(k)] * sinc * win;
    }
    out.samples[m] = acc;
  }
  clip_waveform(out);
  return out;
}

}  // namespace cycnpf::dsp
