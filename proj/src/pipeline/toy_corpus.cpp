#include "melsynth/pipeline/toy_corpus.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "melsynth/dsp/wav.hpp"
#include "melsynth/pipeline/manifest.hpp"
#include "melsynth/rng.hpp"

namespace melsynth::pipeline {

namespace fs = std::filesystem;

void append_char_tone(std::vector<double>& samples, char c, int segment_samples, int sample_rate,
                      double amplitude) {
    if (c == ' ') {
        samples.insert(samples.end(), segment_samples, 0.0);
        return;
    }
    const int idx = c - 'a';
    const double f1 = 200.0 + 55.0 * idx;
    const double f2 = 2.1 * f1 + 130.0;
    const int ramp = segment_samples / 8;
    for (int i = 0; i < segment_samples; ++i) {
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
        else if (i >= segment_samples - ramp)
            env = 0.5 - 0.5 * std::cos(M_PI * (segment_samples - 1 - i) / ramp);
        const double t = static_cast<double>(i) / sample_rate;
        samples.push_back(amplitude * env *
                          (0.65 * std::sin(2.0 * M_PI * f1 * t) +
                           0.35 * std::sin(2.0 * M_PI * f2 * t)));
    }
}

std::string make_toy_corpus(const std::string& dir, const ToyCorpusOptions& opt,
                            const dsp::DspConfig& cfg) {
    if (opt.utterances <= 0) throw std::invalid_argument("toy corpus: utterances must be positive");
    cfg.validate();
    fs::create_directories(dir);
    Rng rng(opt.seed);
    const int hop = cfg.hop_length();
    const int seg = opt.frames_per_char * hop;

    std::vector<ManifestEntry> manifest;
    for (int n = 0; n < opt.utterances; ++n) {
        // two short words over a small alphabet so patterns repeat across
        // utterances and alignments stay short enough to learn quickly
        std::string text;
        for (int w = 0; w < 2; ++w) {
            if (w) text.push_back(' ');
            const int len = 2 + static_cast<int>(rng.index(2));
            for (int i = 0; i < len; ++i)
                text.push_back(static_cast<char>('a' + rng.index(8)));
        }
        std::vector<double> samples;
        samples.reserve((text.size() * seg) + opt.tail_frames * hop);
        for (char c : text)
            append_char_tone(samples, c, seg, cfg.sample_rate_hz, opt.amplitude);
        samples.insert(samples.end(), static_cast<std::size_t>(opt.tail_frames) * hop, 0.0);

        dsp::Waveform w;
        w.sample_rate_hz = cfg.sample_rate_hz;
        w.samples = std::move(samples);
        char name[32];
        std::snprintf(name, sizeof(name), "utt_%03d.wav", n);
        dsp::write_wav((fs::path(dir) / name).string(), w);
        char id[16];
        std::snprintf(id, sizeof(id), "utt_%03d", n);
        manifest.push_back({id, text, name});
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    write_manifest(manifest_path, manifest);
    return manifest_path;
}

}  // namespace melsynth::pipeline
