#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "melsynth/predictor/model.hpp"
#include "melsynth/train/dataset.hpp"
#include "melsynth/vocoder/model.hpp"

namespace melsynth::train {

// Mean per-step L2 frame distance along the optimal dynamic-time-warping path;
// free-running output length varies, so a plain frame-wise distance would not
// be defined.
double dtw_distance(const autodiff::Tensor<float>& a, const autodiff::Tensor<float>& b);

// Fraction of decoder steps whose alignment argmax does not move backwards.
double monotonicity_ratio(const autodiff::Tensor<float>& alignments);

struct EvalMetrics {
    double teacher_forced_loss = 0.0;
    double free_running_dtw = 0.0;
    double stop_accuracy = 0.0;
    double monotonicity = 0.0;
    std::optional<double> vocoder_nll;
    std::string to_json() const;
};

// Objective proxies over a held-out set: teacher-forced loss, free-running
// DTW mel distance, stop prediction accuracy, alignment monotonicity, and the
// vocoder NLL when a vocoder is supplied.
EvalMetrics evaluate(predictor::PredictorModel<float>& model, const Dataset& data,
                     vocoder::VocoderModel<float>* voc, std::uint64_t seed);

}  // namespace melsynth::train
