#include "cycnpf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cycnpf/util.hpp"

namespace cycnpf::corpus {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Resonator {
  double b0 = 1.0, a1 = 0.0, a2 = 0.0;
  double y1 = 0.0, y2 = 0.0;

  void set(double freq_hz, double bandwidth_hz, int sr) {
    const double r = std::exp(-kPi * bandwidth_hz / sr);
    const double theta = 2.0 * kPi * freq_hz / sr;
    a1 = -2.0 * r * std::cos(theta);
    a2 = r * r;
    b0 = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * theta) + r * r);
  }
  double tick(double x) {
    const double y = b0 * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// vowel formant targets (F1, F2, F3)
constexpr double kVowels[5][3] = {
    {730, 1090, 2440},  // a
    {270, 2290, 3010},  // i
    {300, 870, 2240},   // u
    {530, 1840, 2480},  // e
    {570, 840, 2410},   // o
};

}  // namespace

dsp::Waveform synth_utterance(std::uint64_t seed, int sample_rate, double seconds) {
  Rng rng(seed);
  const int total = static_cast<int>(seconds * sample_rate);

  dsp::Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(static_cast<std::size_t>(total), 0.0);

  const double base_f0 = rng.uniform(95.0, 210.0);
  const double vibrato_rate = rng.uniform(3.0, 6.0);
  const double vibrato_depth = rng.uniform(0.01, 0.03);

  Resonator f1, f2, f3, fric;
  fric.set(rng.uniform(3500.0, 5500.0), 1800.0, sample_rate);

  double phase = 0.0;
  int pos = 0;
  int vowel = static_cast<int>(rng.uniform_int(0, 4));

  while (pos < total) {
    // syllable: voiced vowel glide, then optionally a fricative burst / pause
    const int next_vowel = static_cast<int>(rng.uniform_int(0, 4));
    const int voiced_len = static_cast<int>(rng.uniform(0.16, 0.32) * sample_rate);
    const int burst_len =
        rng.uniform() < 0.4 ? static_cast<int>(rng.uniform(0.025, 0.05) * sample_rate) : 0;
    const int pause_len =
        rng.uniform() < 0.15 ? static_cast<int>(rng.uniform(0.02, 0.04) * sample_rate) : 0;

    for (int i = 0; i < voiced_len && pos < total; ++i, ++pos) {
      const double frac = static_cast<double>(i) / voiced_len;
      if (i % 240 == 0) {
        const double w = 0.5 - 0.5 * std::cos(kPi * frac);  // smooth vowel glide
        f1.set((1 - w) * kVowels[vowel][0] + w * kVowels[next_vowel][0], 90.0, sample_rate);
        f2.set((1 - w) * kVowels[vowel][1] + w * kVowels[next_vowel][1], 120.0, sample_rate);
        f3.set((1 - w) * kVowels[vowel][2] + w * kVowels[next_vowel][2], 160.0, sample_rate);
      }
      const double t_global = static_cast<double>(pos) / sample_rate;
      const double f0 = base_f0 * (1.0 - 0.12 * t_global / seconds) *
                        (1.0 + vibrato_depth * std::sin(2.0 * kPi * vibrato_rate * t_global));
      phase += f0 / sample_rate;
      if (phase >= 1.0) phase -= 1.0;

      // band-limited sawtooth-ish glottal source
      const int harmonics = std::min(24, static_cast<int>(0.45 * sample_rate / f0));
      double src = 0.0;
      for (int k = 1; k <= harmonics; ++k)
        src += std::sin(2.0 * kPi * k * phase) / k;
      src *= 0.35;
      src += 0.008 * rng.normal();  // breath noise

      const double env = std::min(1.0, 8.0 * frac) * std::min(1.0, 8.0 * (1.0 - frac));
      double v = f3.tick(f2.tick(f1.tick(src)));
      out.samples[static_cast<std::size_t>(pos)] = 0.18 * env * v;
    }
    for (int i = 0; i < burst_len && pos < total; ++i, ++pos) {
      const double frac = static_cast<double>(i) / std::max(1, burst_len);
      const double env = std::sin(kPi * frac);
      out.samples[static_cast<std::size_t>(pos)] = 0.05 * env * fric.tick(rng.normal());
    }
    pos += pause_len;  // silence
    vowel = next_vowel;
  }

  // normalize peak and clip
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 1e-9) {
    const double gain = 0.5 / peak;
    for (double& s : out.samples) s *= gain;
  }
  dsp::clip_waveform(out);
  return out;
}

void make_demo_corpus(const std::string& dir, const CorpusSpec& spec) {
  std::filesystem::create_directories(dir);
  Rng rng(spec.seed);
  for (int i = 0; i < spec.num_utterances; ++i) {
    const double seconds = rng.uniform(spec.min_seconds, spec.max_seconds);
    const dsp::Waveform w =
        synth_utterance(spec.seed * 1000003ULL + static_cast<std::uint64_t>(i), spec.sample_rate,
                        seconds);
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%03d.wav", i);
    dsp::write_wav(dir + "/" + name, w);
  }
}

}  // namespace cycnpf::corpus
