#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "melsynth/autodiff/checkpoint.hpp"
#include "melsynth/autodiff/optim.hpp"
#include "melsynth/pipeline/feature_file.hpp"
#include "melsynth/predictor/model.hpp"
#include "melsynth/train/dataset.hpp"
#include "melsynth/vocoder/generator.hpp"
#include "melsynth/vocoder/model.hpp"

namespace melsynth::train {

struct TrainLogRecord {
    std::int64_t step = 0;
    double mel_before = 0.0;
    double mel_after = 0.0;
    double stop_bce = 0.0;
    double nll = 0.0;
    double loss = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

// Append-only JSON-lines log; one object per optimizer step.
class TrainLogger {
public:
    TrainLogger() = default;
    explicit TrainLogger(const std::string& path);
    void log(const TrainLogRecord& r, bool vocoder_stage);

private:
    std::ofstream os_;
};

struct PredictorTrainOptions {
    int batch_size = 8;
    std::int64_t max_steps = 2000;
    std::int64_t checkpoint_every = 500;
    std::uint64_t seed = 42;
    autodiff::LrSchedule schedule;
    autodiff::AdamConfig adam{0.9, 0.999, 1e-6, 1e-6};
    double grad_clip_norm = 0.0;
    int stop_pad_frames = 10;  // extra zero-input steps carrying stop targets of 1
    std::string out_dir;  // empty disables checkpoints and the log file
};

// Teacher-forced maximum-likelihood training. Deterministic given the seed:
// batches are round-robin and all per-step randomness derives from
// (seed, step, batch slot), so resuming from a checkpoint replays the exact
// uninterrupted run.
class PredictorTrainer {
public:
    PredictorTrainer(predictor::PredictorModel<float>& model, const Dataset& data,
                     PredictorTrainOptions opt);

    std::int64_t step() const { return step_; }
    TrainLogRecord train_step();
    TrainLogRecord run();  // to max_steps; returns the last record
    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);
    std::string checkpoint_path(std::int64_t step) const;

private:
    predictor::PredictorModel<float>& model_;
    const Dataset& data_;
    PredictorTrainOptions opt_;
    autodiff::Adam<float> adam_;
    TrainLogger logger_;
    std::int64_t step_ = 0;
};

struct VocoderTrainOptions {
    int batch_size = 2;
    std::int64_t max_steps = 1000;
    std::int64_t checkpoint_every = 500;
    std::uint64_t seed = 42;
    double lr = 1e-4;
    autodiff::AdamConfig adam{0.9, 0.999, 1e-8, 0.0};
    double ema_decay = 0.9999;
    int crop_samples = 4800;  // multiple of the hop
    double grad_clip_norm = 0.0;
    std::string out_dir;
};

// MoL likelihood training on random fixed-length crops, with an EMA shadow of
// the parameters updated every step; checkpoints carry both raw and EMA
// weights.
class VocoderTrainer {
public:
    VocoderTrainer(vocoder::VocoderModel<float>& model, const Dataset& data,
                   VocoderTrainOptions opt);

    std::int64_t step() const { return step_; }
    autodiff::EmaState<float>& ema() { return ema_; }
    TrainLogRecord train_step();
    TrainLogRecord run();
    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);
    std::string checkpoint_path(std::int64_t step) const;

private:
    vocoder::VocoderModel<float>& model_;
    const Dataset& data_;
    VocoderTrainOptions opt_;
    autodiff::Adam<float> adam_;
    autodiff::EmaState<float> ema_;
    TrainLogger logger_;
    std::int64_t step_ = 0;
};

// Teacher-forced predictions, frame-aligned with the ground truth by
// construction; the after-postnet output becomes the vocoder's training input.
std::vector<pipeline::FeatureTensor> make_gta_features(predictor::PredictorModel<float>& model,
                                                       const Dataset& data, std::uint64_t seed);

// Frame-aligned crop selection: conditioning row r of the window covers audio
// samples [r*hop, (r+1)*hop) relative to the window start.
struct CropWindow {
    std::size_t frame_begin = 0;
    std::size_t frame_count = 0;
    std::size_t sample_begin = 0;
    std::size_t sample_count = 0;
};
CropWindow choose_crop(std::size_t total_frames, std::size_t crop_frames, int hop_samples,
                       Rng& rng);

}  // namespace melsynth::train
