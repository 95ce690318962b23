#pragma once

#include <string>
#include <vector>

#include "melsynth/autodiff/tensor.hpp"

namespace melsynth::train {

struct Utterance {
    std::string id;
    std::vector<int> char_ids;
    std::string normalized_text;
    autodiff::Tensor<float> features;  // (frames, feature_dim)
    std::string wav_path;
    std::vector<float> audio;  // [-1, 1), zero-padded to frames * hop when loaded
};

struct Dataset {
    std::vector<Utterance> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

// Reads a preprocess index and the referenced feature files. use_linear picks
// the linear-feature column; load_audio additionally pulls in waveforms padded
// to frames * hop_samples (required for vocoder training).
Dataset load_dataset(const std::string& index_path, bool use_linear, bool load_audio,
                     int sample_rate_hz, int hop_samples);

}  // namespace melsynth::train
