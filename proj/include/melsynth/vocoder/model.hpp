#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melsynth/autodiff/ops.hpp"
#include "melsynth/autodiff/params.hpp"
#include "melsynth/rng.hpp"
#include "melsynth/vocoder/config.hpp"
#include "melsynth/vocoder/mol.hpp"

namespace melsynth::vocoder {

using autodiff::PadMode;
using autodiff::ParamStore;
using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

// Dilated causal convolution stack with gated units, per-layer conditioning
// projections, residual/skip connections and a MoL head. The model input is
// the scaled audio shifted right by one sample, so the parameters emitted for
// sample t depend only on samples < t and conditioning <= t.
template <class T>
class VocoderModel {
public:
    VocoderModel(const VocoderConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(init_seed);
        build(rng);
    }

    const VocoderConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    std::size_t layers() const { return static_cast<std::size_t>(cfg_.total_layers); }
    std::size_t dilation(std::size_t k) const {
        return dilation_of(k, static_cast<std::size_t>(cfg_.dilation_cycle_size));
    }

    // (frames, C) -> (frames * hop, C) through two learned transposed convs,
    // centre-cropped to the exact length.
    Tensor<T> upsample(Tape<T>* tape, const Tensor<T>& mel) {
        if (mel.rank() != 2 || mel.cols() != static_cast<std::size_t>(cfg_.conditioning_channels))
            throw std::invalid_argument("upsample: expected (frames, " +
                                        std::to_string(cfg_.conditioning_channels) + ") input");
        Tensor<T> h = mel;
        const int strides[2] = {cfg_.upsample_factor_1, cfg_.upsample_factor_2};
        std::size_t want = mel.rows();
        for (int l = 0; l < 2; ++l) {
            h = autodiff::tconv1d(tape, h, up_w_[l], up_b_[l],
                                  static_cast<std::size_t>(strides[l]));
            want *= static_cast<std::size_t>(strides[l]);
            const std::size_t offset = (h.rows() - want) / 2;
            if (h.rows() != want) h = autodiff::slice_rows(tape, h, offset, offset + want);
            if (cfg_.upsample_activation == UpsampleActivation::kLeakyRelu)
                h = autodiff::leaky_relu(tape, h, static_cast<T>(cfg_.upsample_leaky_slope));
        }
        return h;
    }

    // scaled_audio: N samples in [-target_scale, target_scale]; conditioning:
    // (N, C). Returns MoL parameter rows (N, 3K).
    Tensor<T> forward(Tape<T>* tape, const std::vector<T>& scaled_audio,
                      const Tensor<T>& conditioning) {
        const std::size_t n = scaled_audio.size();
        if (conditioning.rank() != 2 || conditioning.rows() != n ||
            conditioning.cols() != static_cast<std::size_t>(cfg_.conditioning_channels))
            throw std::invalid_argument(
                "vocoder forward: conditioning " +
                (conditioning.rank() == 2 ? std::to_string(conditioning.rows()) : std::string("?")) +
                " rows does not match audio length " + std::to_string(n));
        Tensor<T> shifted(Shape{n, 1});
        for (std::size_t t = 1; t < n; ++t) shifted.at(t, 0) = scaled_audio[t - 1];

        Tensor<T> r = autodiff::linear(tape, shifted, input_w_, input_b_);
        Tensor<T> skip_sum;
        const std::size_t res = static_cast<std::size_t>(cfg_.residual_channels);
        for (std::size_t k = 0; k < layers(); ++k) {
            Tensor<T> a = autodiff::conv1d(tape, r, dil_w_[k], dil_b_[k], dilation(k),
                                           PadMode::kCausal);
            Tensor<T> c = autodiff::linear(tape, conditioning, cond_w_[k], Tensor<T>());
            Tensor<T> gate_in = autodiff::add(tape, a, c);
            Tensor<T> filt = autodiff::tanh_op(tape, autodiff::slice_cols(tape, gate_in, 0, res));
            Tensor<T> gate =
                autodiff::sigmoid(tape, autodiff::slice_cols(tape, gate_in, res, 2 * res));
            Tensor<T> z = autodiff::mul(tape, filt, gate);
            Tensor<T> s = autodiff::linear(tape, z, skip_w_[k], skip_b_[k]);
            skip_sum = k == 0 ? s : autodiff::add(tape, skip_sum, s);
            r = autodiff::add(tape, r, autodiff::linear(tape, z, res_w_[k], res_b_[k]));
        }
        Tensor<T> h = autodiff::relu(tape, skip_sum);
        return autodiff::linear(tape, h, out_w_, out_b_);
    }

    Tensor<T> nll(Tape<T>* tape, const Tensor<T>& mol_params, const std::vector<T>& scaled_targets) {
        return mol_nll(tape, mol_params, scaled_targets, cfg_.mol_components, cfg_.target_scale,
                       cfg_.log_scale_floor);
    }

    // Weight accessors for the incremental generator.
    struct LayerWeights {
        const Tensor<T>*dil_w, *dil_b, *cond_w, *skip_w, *skip_b, *res_w, *res_b;
    };
    LayerWeights layer_weights(std::size_t k) const {
        return {&dil_w_[k], &dil_b_[k], &cond_w_[k], &skip_w_[k], &skip_b_[k], &res_w_[k],
                &res_b_[k]};
    }
    const Tensor<T>& input_w() const { return input_w_; }
    const Tensor<T>& input_b() const { return input_b_; }
    const Tensor<T>& out_w() const { return out_w_; }
    const Tensor<T>& out_b() const { return out_b_; }

private:
    void build(Rng& rng) {
        const auto res = static_cast<std::size_t>(cfg_.residual_channels);
        const auto skip = static_cast<std::size_t>(cfg_.skip_channels);
        const auto cond = static_cast<std::size_t>(cfg_.conditioning_channels);
        const auto kk = static_cast<std::size_t>(cfg_.mol_components);

        const int strides[2] = {cfg_.upsample_factor_1, cfg_.upsample_factor_2};
        for (int l = 0; l < 2; ++l) {
            const auto klen = static_cast<std::size_t>(cfg_.upsample_kernel_scale * strides[l]);
            Tensor<T> w(Shape{klen, cond, cond});
            autodiff::init_glorot(w, rng, klen * cond / static_cast<std::size_t>(strides[l]),
                                  klen * cond / static_cast<std::size_t>(strides[l]));
            const std::string p = "upsample" + std::to_string(l);
            up_w_.push_back(store_.add(p + ".w", w, true));
            up_b_.push_back(store_.add(p + ".b", Tensor<T>(Shape{cond}), false));
        }

        // small input weights keep the +-target_scale inputs off the gate rails
        input_w_ = Tensor<T>(Shape{1, res});
        autodiff::init_uniform(input_w_, rng, -1.0 / cfg_.target_scale, 1.0 / cfg_.target_scale);
        store_.add("input.w", input_w_, true);
        input_b_ = store_.add("input.b", Tensor<T>(Shape{res}), false);

        for (std::size_t k = 0; k < layers(); ++k) {
            const std::string p = "layer" + std::to_string(k);
            Tensor<T> dw(Shape{3, res, 2 * res});
            autodiff::init_glorot(dw, rng, 3 * res, 3 * 2 * res);
            dil_w_.push_back(store_.add(p + ".dilated.w", dw, true));
            dil_b_.push_back(store_.add(p + ".dilated.b", Tensor<T>(Shape{2 * res}), false));
            Tensor<T> cw(Shape{cond, 2 * res});
            autodiff::init_glorot(cw, rng, cond, 2 * res);
            cond_w_.push_back(store_.add(p + ".cond.w", cw, true));
            Tensor<T> sw(Shape{res, skip});
            autodiff::init_glorot(sw, rng, res, skip);
            skip_w_.push_back(store_.add(p + ".skip.w", sw, true));
            skip_b_.push_back(store_.add(p + ".skip.b", Tensor<T>(Shape{skip}), false));
            Tensor<T> rw(Shape{res, res});
            autodiff::init_glorot(rw, rng, res, res);
            res_w_.push_back(store_.add(p + ".res.w", rw, true));
            res_b_.push_back(store_.add(p + ".res.b", Tensor<T>(Shape{res}), false));
        }

        out_w_ = Tensor<T>(Shape{skip, 3 * kk});
        autodiff::init_glorot(out_w_, rng, skip, 3 * kk);
        store_.add("head.w", out_w_, true);
        out_b_ = store_.add("head.b", Tensor<T>(Shape{3 * kk}), false);
    }

    VocoderConfig cfg_;
    ParamStore<T> store_;
    std::vector<Tensor<T>> up_w_, up_b_;
    Tensor<T> input_w_, input_b_;
    std::vector<Tensor<T>> dil_w_, dil_b_, cond_w_, skip_w_, skip_b_, res_w_, res_b_;
    Tensor<T> out_w_, out_b_;
};

}  // namespace melsynth::vocoder
