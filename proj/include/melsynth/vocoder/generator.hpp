#pragma once

#include <cstdint>
#include <vector>

#include "melsynth/vocoder/model.hpp"
#include "melsynth/vocoder/mol.hpp"

namespace melsynth::vocoder {

// Sequential sampling path. Each layer keeps a ring buffer of its last
// 2*dilation inputs so one step costs O(layers * channels^2) instead of a full
// parallel pass; outputs agree with VocoderModel::forward on the same inputs.
template <class T>
class IncrementalSynth {
public:
    explicit IncrementalSynth(const VocoderModel<T>& model) : model_(model) {
        const auto& cfg = model.config();
        res_ = static_cast<std::size_t>(cfg.residual_channels);
        skip_ = static_cast<std::size_t>(cfg.skip_channels);
        cond_ = static_cast<std::size_t>(cfg.conditioning_channels);
        kk_ = static_cast<std::size_t>(cfg.mol_components);
        rings_.resize(model.layers());
        for (std::size_t k = 0; k < model.layers(); ++k)
            rings_[k].assign(2 * model.dilation(k) * res_, T(0));
        reset();
    }

    void reset() {
        t_ = 0;
        for (auto& r : rings_) std::fill(r.begin(), r.end(), T(0));
    }

    std::size_t step_index() const { return t_; }

    // prev_sample: scaled sample t-1 (0 for t = 0); cond_row: conditioning at
    // t. Returns the 3K MoL parameter row for sample t.
    std::vector<T> step(T prev_sample, const T* cond_row) {
        std::vector<T> r(res_);
        {
            const T* w = model_.input_w().data();  // (1, res)
            const T* b = model_.input_b().data();
            for (std::size_t j = 0; j < res_; ++j) r[j] = b[j] + prev_sample * w[j];
        }
        std::vector<T> skip_sum(skip_, T(0));
        std::vector<T> pre(2 * res_), z(res_);
        for (std::size_t k = 0; k < model_.layers(); ++k) {
            const std::size_t d = model_.dilation(k);
            auto w = model_.layer_weights(k);
            std::vector<T>& ring = rings_[k];
            const T* x_2d = t_ >= 2 * d ? &ring[(t_ % (2 * d)) * res_] : nullptr;
            const T* x_d = t_ >= d ? &ring[((t_ + d) % (2 * d)) * res_] : nullptr;

            const T* dw = w.dil_w->data();  // (3, res, 2res): taps t-2d, t-d, t
            std::copy(w.dil_b->data(), w.dil_b->data() + 2 * res_, pre.begin());
            auto accumulate_tap = [&](const T* x, std::size_t tap) {
                if (!x) return;
                const T* wt = dw + tap * res_ * 2 * res_;
                for (std::size_t ci = 0; ci < res_; ++ci) {
                    const T xv = x[ci];
                    if (xv == T(0)) continue;
                    const T* wrow = wt + ci * 2 * res_;
                    for (std::size_t u = 0; u < 2 * res_; ++u) pre[u] += xv * wrow[u];
                }
            };
            accumulate_tap(x_2d, 0);
            accumulate_tap(x_d, 1);
            accumulate_tap(r.data(), 2);
            {
                const T* cw = w.cond_w->data();  // (cond, 2res)
                for (std::size_t c = 0; c < cond_; ++c) {
                    const T cv = cond_row[c];
                    if (cv == T(0)) continue;
                    const T* wrow = cw + c * 2 * res_;
                    for (std::size_t u = 0; u < 2 * res_; ++u) pre[u] += cv * wrow[u];
                }
            }
            // push the layer input after reading the t-2d slot it replaces
            std::copy(r.begin(), r.end(), ring.begin() + (t_ % (2 * d)) * res_);

            for (std::size_t u = 0; u < res_; ++u)
                z[u] = std::tanh(pre[u]) * autodiff::sigmoid_scalar(pre[res_ + u]);
            {
                const T* sw = w.skip_w->data();
                const T* sb = w.skip_b->data();
                for (std::size_t o = 0; o < skip_; ++o) skip_sum[o] += sb[o];
                for (std::size_t u = 0; u < res_; ++u) {
                    const T zv = z[u];
                    if (zv == T(0)) continue;
                    const T* wrow = sw + u * skip_;
                    for (std::size_t o = 0; o < skip_; ++o) skip_sum[o] += zv * wrow[o];
                }
                const T* rw = w.res_w->data();
                const T* rb = w.res_b->data();
                std::vector<T> r_next(r);
                for (std::size_t o = 0; o < res_; ++o) r_next[o] += rb[o];
                for (std::size_t u = 0; u < res_; ++u) {
                    const T zv = z[u];
                    if (zv == T(0)) continue;
                    const T* wrow = rw + u * res_;
                    for (std::size_t o = 0; o < res_; ++o) r_next[o] += zv * wrow[o];
                }
                r.swap(r_next);
            }
        }
        std::vector<T> out(3 * kk_);
        const T* ow = model_.out_w().data();
        const T* ob = model_.out_b().data();
        std::copy(ob, ob + 3 * kk_, out.begin());
        for (std::size_t u = 0; u < skip_; ++u) {
            const T h = skip_sum[u] > T(0) ? skip_sum[u] : T(0);
            if (h == T(0)) continue;
            const T* wrow = ow + u * 3 * kk_;
            for (std::size_t o = 0; o < 3 * kk_; ++o) out[o] += h * wrow[o];
        }
        ++t_;
        return out;
    }

private:
    const VocoderModel<T>& model_;
    std::size_t res_ = 0, skip_ = 0, cond_ = 0, kk_ = 0;
    std::size_t t_ = 0;
    std::vector<std::vector<T>> rings_;  // per layer, 2*dilation rows of inputs
};

// Generates frames*hop samples conditioned on a mel tensor; waveform is the
// sampled scaled values divided back by target_scale.
template <class T>
std::vector<T> generate(VocoderModel<T>& model, const Tensor<T>& mel, std::uint64_t seed) {
    const auto& cfg = model.config();
    Tensor<T> cond = model.upsample(nullptr, mel);
    const std::size_t n = cond.rows();
    IncrementalSynth<T> synth(model);
    Rng rng(seed);
    std::vector<T> wav(n);
    T prev = T(0);
    const T floor_ls = static_cast<T>(cfg.log_scale_floor);
    const std::size_t kk = static_cast<std::size_t>(cfg.mol_components);
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<T> row = synth.step(prev, cond.data() + t * cond.cols());
        for (std::size_t k = 0; k < kk; ++k)
            row[2 * kk + k] = std::max(row[2 * kk + k], floor_ls);
        const T sample = mol_sample(row.data(), cfg.mol_components, cfg.target_scale, rng);
        prev = sample;
        wav[t] = sample / static_cast<T>(cfg.target_scale);
    }
    return wav;
}

// Teacher-forced incremental pass, for checking against the parallel forward.
template <class T>
Tensor<T> incremental_forward(VocoderModel<T>& model, const std::vector<T>& scaled_audio,
                              const Tensor<T>& conditioning) {
    IncrementalSynth<T> synth(model);
    const std::size_t n = scaled_audio.size();
    const std::size_t width = 3 * static_cast<std::size_t>(model.config().mol_components);
    Tensor<T> out(Shape{n, width});
    for (std::size_t t = 0; t < n; ++t) {
        const T prev = t == 0 ? T(0) : scaled_audio[t - 1];
        std::vector<T> row = synth.step(prev, conditioning.data() + t * conditioning.cols());
        std::copy(row.begin(), row.end(), out.data() + t * width);
    }
    return out;
}

}  // namespace melsynth::vocoder
