#pragma once

#include <cstdint>
#include <string>

#include "cycnpf/dsp/wave.hpp"

namespace cycnpf::corpus {

// Source-filter "vowel babble": harmonic glottal excitation through a
// time-varying three-formant resonator cascade, with unvoiced fricative
// bursts and short pauses between syllables. Enough like speech for the
// analyzers (clear F0, formant structure, voiced/unvoiced alternation) while
// staying fully deterministic.
struct CorpusSpec {
  int num_utterances = 32;
  int sample_rate = 24000;
  double min_seconds = 1.0;
  double max_seconds = 1.4;
  std::uint64_t seed = 1;
};

dsp::Waveform synth_utterance(std::uint64_t seed, int sample_rate, double seconds);

// Writes utt_000.wav .. utt_NNN.wav into dir (created if missing).
void make_demo_corpus(const std::string& dir, const CorpusSpec& spec);

}  // namespace cycnpf::corpus
