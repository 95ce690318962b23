#pragma once

#include <cstdint>
#include <string>

#include "melsynth/dsp/dsp.hpp"

namespace melsynth::pipeline {

struct ToyCorpusOptions {
    int utterances = 4;
    std::uint64_t seed = 1234;
    int frames_per_char = 6;
    int tail_frames = 2;
    double amplitude = 0.35;
};

// Seeded synthetic corpus: each character maps to a fixed two-partial tone
// segment (silence for spaces), so text-audio alignment is learnable from a
// handful of utterances and the repo needs no bundled recordings. Writes
// utt_*.wav plus manifest.txt into dir and returns the manifest path.
std::string make_toy_corpus(const std::string& dir, const ToyCorpusOptions& opt,
                            const dsp::DspConfig& cfg);

// The tone segment for one character; exposed for tests.
void append_char_tone(std::vector<double>& samples, char c, int segment_samples, int sample_rate,
                      double amplitude);

}  // namespace melsynth::pipeline
