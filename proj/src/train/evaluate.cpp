#include "melsynth/train/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <vector>

namespace melsynth::train {

double dtw_distance(const autodiff::Tensor<float>& a, const autodiff::Tensor<float>& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("dtw: feature dimensions differ");
    const std::size_t n = a.rows(), m = b.rows();
    auto frame_cost = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double d = static_cast<double>(a.at(i, c)) - b.at(j, c);
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j)
            cur[j] = frame_cost(i - 1, j - 1) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        std::swap(prev, cur);
    }
    return prev[m] / static_cast<double>(n + m);
}

double monotonicity_ratio(const autodiff::Tensor<float>& alignments) {
    const std::size_t frames = alignments.rows();
    if (frames < 2) return 1.0;
    auto argmax_row = [&](std::size_t t) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < alignments.cols(); ++j)
            if (alignments.at(t, j) > alignments.at(t, best)) best = j;
        return best;
    };
    std::size_t ok = 0;
    std::size_t prev = argmax_row(0);
    for (std::size_t t = 1; t < frames; ++t) {
        const std::size_t cur = argmax_row(t);
        if (cur >= prev) ++ok;
        prev = cur;
    }
    return static_cast<double>(ok) / static_cast<double>(frames - 1);
}

std::string EvalMetrics::to_json() const {
    nlohmann::json j;
    j["teacher_forced_loss"] = teacher_forced_loss;
    j["free_running_dtw"] = free_running_dtw;
    j["stop_accuracy"] = stop_accuracy;
    j["monotonicity"] = monotonicity;
    if (vocoder_nll) j["vocoder_nll"] = *vocoder_nll;
    return j.dump();
}

EvalMetrics evaluate(predictor::PredictorModel<float>& model, const Dataset& data,
                     vocoder::VocoderModel<float>* voc, std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    EvalMetrics m;
    std::size_t stop_hits = 0, stop_total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Utterance& u = data.items[i];
        auto tf = model.forward_teacher_forced(nullptr, u.char_ids, u.features, false,
                                               mix_seed(seed, i));
        auto stop_target = predictor::make_stop_target<float>(u.features.rows());
        m.teacher_forced_loss +=
            model.loss(nullptr, tf, u.features, stop_target)[0] / data.size();
        for (std::size_t t = 0; t < tf.stop_probs.size(); ++t) {
            const bool said_stop = tf.stop_probs[t] > model.config().stop_threshold;
            const bool is_stop = stop_target[t] > 0.5f;
            stop_hits += said_stop == is_stop;
            ++stop_total;
        }
        auto fr = model.infer(u.char_ids, mix_seed(seed, i, 0x1eaf));
        m.free_running_dtw += dtw_distance(fr.after, u.features) / data.size();
        m.monotonicity += monotonicity_ratio(fr.alignments) / data.size();
    }
    m.stop_accuracy = stop_total ? static_cast<double>(stop_hits) / stop_total : 0.0;
    if (voc) {
        const auto& vcfg = voc->config();
        double nll = 0.0;
        for (const auto& u : data.items) {
            if (u.audio.empty())
                throw std::invalid_argument("evaluate: vocoder NLL needs loaded audio");
            std::vector<float> scaled(u.audio.size());
            for (std::size_t i = 0; i < scaled.size(); ++i)
                scaled[i] = u.audio[i] * static_cast<float>(vcfg.target_scale);
            auto cond = voc->upsample(nullptr, u.features);
            auto mol = voc->forward(nullptr, scaled, cond);
            auto per_sample = voc->nll(nullptr, mol, scaled);
            double acc = 0.0;
            for (std::size_t i = 0; i < per_sample.size(); ++i) acc += per_sample[i];
            nll += acc / per_sample.size() / data.size();
        }
        m.vocoder_nll = nll;
    }
    return m;
}

}  // namespace melsynth::train
