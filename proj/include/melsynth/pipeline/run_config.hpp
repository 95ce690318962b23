#pragma once

#include <cstdint>
#include <string>

#include "melsynth/autodiff/optim.hpp"
#include "melsynth/dsp/dsp.hpp"
#include "melsynth/predictor/config.hpp"
#include "melsynth/vocoder/config.hpp"

namespace melsynth::pipeline {

enum class FeatureKind { kMel, kLinear };

struct TrainSettings {
    int predictor_batch_size = 8;
    int vocoder_batch_size = 2;
    std::int64_t predictor_max_steps = 2000;
    std::int64_t vocoder_max_steps = 1000;
    std::int64_t checkpoint_every = 500;
    autodiff::LrSchedule predictor_lr;           // 1e-3 -> 1e-5 after 50k steps
    double predictor_adam_eps = 1e-6;
    double vocoder_adam_eps = 1e-8;
    double vocoder_lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double l2_weight = 1e-6;    // predictor only
    double ema_decay = 0.9999;  // vocoder only
    int vocoder_crop_samples = 4800;
    int stop_pad_frames = 10;  // padded-batch stop supervision per utterance
    double grad_clip_norm = 0.0;  // 0 disables clipping
    std::uint64_t seed = 42;

    void validate() const;
};

// Everything an invocation needs, loadable from one INI-style file with
// [dsp], [predictor], [vocoder] and [train] sections. Unknown keys and values
// violating the typed invariants are rejected at load.
struct RunConfig {
    dsp::DspConfig dsp;
    predictor::PredictorConfig predictor;
    vocoder::VocoderConfig vocoder;
    TrainSettings train;
    FeatureKind feature = FeatureKind::kMel;

    void validate() const;  // cross-module consistency included

    int vocoder_crop_frames() const { return train.vocoder_crop_samples / dsp.hop_length(); }
};

RunConfig load_run_config(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& section, const std::string& key,
                       const std::string& value);

}  // namespace melsynth::pipeline
