#include "melsynth/train/dataset.hpp"

#include <filesystem>
#include <stdexcept>

#include "melsynth/dsp/wav.hpp"
#include "melsynth/pipeline/feature_file.hpp"
#include "melsynth/pipeline/manifest.hpp"
#include "melsynth/pipeline/text.hpp"

namespace melsynth::train {

namespace fs = std::filesystem;

Dataset load_dataset(const std::string& index_path, bool use_linear, bool load_audio,
                     int sample_rate_hz, int hop_samples) {
    const auto entries = pipeline::read_index(index_path);
    const fs::path base = fs::path(index_path).parent_path();
    Dataset ds;
    for (const auto& e : entries) {
        const std::string& rel = use_linear ? e.linear_path : e.mel_path;
        if (rel == "-")
            throw std::invalid_argument("dataset: utterance " + e.id + " has no " +
                                        (use_linear ? "linear" : "mel") + " features");
        Utterance u;
        u.id = e.id;
        u.normalized_text = e.normalized_text;
        for (char c : e.normalized_text) {
            const int id = pipeline::char_to_id(c);
            u.char_ids.push_back(id >= 0 ? id : pipeline::kUnknownId);
        }
        const auto feat = pipeline::read_feature_file((base / rel).string());
        if (feat.dims.size() != 2)
            throw std::runtime_error("dataset: feature file for " + e.id + " is not rank-2");
        u.features = autodiff::Tensor<float>(
            autodiff::Shape{feat.dims[0], feat.dims[1]},
            std::vector<float>(feat.data.begin(), feat.data.end()));
        u.wav_path = e.wav_path;
        if (load_audio) {
            const fs::path wav = fs::path(e.wav_path).is_absolute()
                                     ? fs::path(e.wav_path)
                                     : base / e.wav_path;
            const dsp::Waveform w = dsp::read_wav(wav.string(), sample_rate_hz);
            u.audio.assign(w.samples.begin(), w.samples.end());
            const std::size_t want = feat.dims[0] * static_cast<std::size_t>(hop_samples);
            if (u.audio.size() > want) u.audio.resize(want);
            if (u.audio.size() < want) u.audio.resize(want, 0.0f);
        }
        ds.items.push_back(std::move(u));
    }
    return ds;
}

}  // namespace melsynth::train
