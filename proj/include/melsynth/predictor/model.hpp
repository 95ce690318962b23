#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "melsynth/autodiff/lstm.hpp"
#include "melsynth/autodiff/ops.hpp"
#include "melsynth/autodiff/params.hpp"
#include "melsynth/predictor/config.hpp"
#include "melsynth/rng.hpp"

namespace melsynth::predictor {

using autodiff::BatchNormState;
using autodiff::LstmState;
using autodiff::LstmWeights;
using autodiff::PadMode;
using autodiff::ParamStore;
using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

template <class T>
struct AttentionState {
    Tensor<T> alignment;   // sums to 1
    Tensor<T> cumulative;  // sum of all previous alignments
    Tensor<T> context;     // (encoder feature dim)
};

template <class T>
struct DecoderState {
    LstmState<T> lstm1;
    LstmState<T> lstm2;
    AttentionState<T> attn;
};

template <class T>
struct DecoderOutput {
    Tensor<T> before;       // (frames, output_dim)
    Tensor<T> after;        // same node as `before` when the post-net is off
    Tensor<T> stop_logits;  // (frames)
    Tensor<T> stop_probs;   // (frames), sigmoid of logits
    Tensor<T> alignments;   // (frames, encoder steps)
    bool truncated = false;
};

template <class T>
struct LossTerms {
    Tensor<T> mel_before;
    Tensor<T> mel_after;
    Tensor<T> stop_bce;
    Tensor<T> total;
};

// Runs step_fn(t) until the returned stop probability exceeds threshold (that
// step included) or max_steps is reached. Returns (steps emitted, truncated).
template <class StepFn>
std::pair<std::size_t, bool> autoregress(StepFn&& step_fn, std::size_t max_steps,
                                         double threshold) {
    for (std::size_t t = 0; t < max_steps; ++t)
        if (step_fn(t) > threshold) return {t + 1, false};
    return {max_steps, true};
}

// stop target: 1.0 at and after the final real frame (padding included)
template <class T>
Tensor<T> make_stop_target(std::size_t frames, std::size_t total_frames = 0) {
    if (total_frames < frames) total_frames = frames;
    Tensor<T> t(Shape{total_frames});
    for (std::size_t i = frames - 1; i < total_frames; ++i) t[i] = T(1);
    return t;
}

template <class T>
class PredictorModel {
public:
    PredictorModel(const PredictorConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(init_seed);
        build(rng);
    }

    const PredictorConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    std::size_t encoder_dim() const { return static_cast<std::size_t>(cfg_.encoder_lstm_units); }

    // ------------------------------------------------------------- encoder

    // embedding -> conv/batchnorm/relu/dropout stack -> BiLSTM; one row per id
    Tensor<T> encode(Tape<T>* tape, const std::vector<int>& ids, bool training, Rng& rng) {
        if (ids.empty()) throw std::invalid_argument("encode: empty character sequence");
        Tensor<T> x = autodiff::embedding(tape, ids, embedding_);
        for (int l = 0; l < cfg_.encoder_conv_layers; ++l) {
            x = autodiff::conv1d(tape, x, enc_conv_w_[l], enc_conv_b_[l], 1, PadMode::kSame);
            x = autodiff::batchnorm1d(tape, x, enc_bn_gamma_[l], enc_bn_beta_[l], enc_bn_[l],
                                      training);
            x = autodiff::relu(tape, x);
            x = autodiff::dropout(tape, x, cfg_.dropout_p, rng, training);
        }
        const std::size_t steps = ids.size();
        const std::size_t h = static_cast<std::size_t>(cfg_.encoder_lstm_units / 2);
        std::vector<Tensor<T>> fwd(steps), bwd(steps);
        LstmState<T> sf{Tensor<T>(Shape{h}), Tensor<T>(Shape{h})};
        for (std::size_t t = 0; t < steps; ++t) {
            Tensor<T> row = autodiff::slice_rows(tape, x, t, t + 1);
            row = autodiff::reshape(tape, row, Shape{x.cols()});
            sf = autodiff::lstm_cell(tape, row, sf.h, sf.c, enc_lstm_fwd_, cfg_.zoneout_p,
                                     training, rng);
            fwd[t] = sf.h;
        }
        LstmState<T> sb{Tensor<T>(Shape{h}), Tensor<T>(Shape{h})};
        for (std::size_t t = steps; t-- > 0;) {
            Tensor<T> row = autodiff::slice_rows(tape, x, t, t + 1);
            row = autodiff::reshape(tape, row, Shape{x.cols()});
            sb = autodiff::lstm_cell(tape, row, sb.h, sb.c, enc_lstm_bwd_, cfg_.zoneout_p,
                                     training, rng);
            bwd[t] = sb.h;
        }
        Tensor<T> f = autodiff::stack_rows(tape, fwd);
        Tensor<T> b = autodiff::stack_rows(tape, bwd);
        return autodiff::concat(tape, f, b, 1);
    }

    // Cached memory projection V*memory, constant across decoder steps.
    Tensor<T> project_memory(Tape<T>* tape, const Tensor<T>& memory) {
        return autodiff::linear(tape, memory, attn_memory_w_, Tensor<T>());
    }

    AttentionState<T> initial_attention(std::size_t enc_steps) const {
        AttentionState<T> s;
        s.alignment = Tensor<T>(Shape{enc_steps}, T(1) / static_cast<T>(enc_steps));
        s.cumulative = Tensor<T>(Shape{enc_steps});
        s.context = Tensor<T>(Shape{encoder_dim()});
        return s;
    }

    DecoderState<T> initial_decoder_state(std::size_t enc_steps) const {
        const std::size_t d = static_cast<std::size_t>(cfg_.decoder_lstm_units);
        DecoderState<T> s;
        s.lstm1 = {Tensor<T>(Shape{d}), Tensor<T>(Shape{d})};
        s.lstm2 = {Tensor<T>(Shape{d}), Tensor<T>(Shape{d})};
        s.attn = initial_attention(enc_steps);
        return s;
    }

    // ----------------------------------------------------------- attention

    // e_j = v . tanh(W q + V m_j + U f_j + b), f = conv(cumulative)
    std::pair<Tensor<T>, AttentionState<T>> attend(Tape<T>* tape, const Tensor<T>& query,
                                                   const Tensor<T>& memory,
                                                   const Tensor<T>& memory_proj,
                                                   const AttentionState<T>& state) {
        if (memory.rows() == 0) throw std::invalid_argument("attend: empty memory");
        Tensor<T> loc_in =
            autodiff::reshape(tape, state.cumulative, Shape{state.cumulative.size(), 1});
        Tensor<T> loc =
            autodiff::conv1d(tape, loc_in, attn_loc_conv_w_, Tensor<T>(), 1, PadMode::kSame);
        Tensor<T> u = autodiff::linear(tape, loc, attn_loc_proj_w_, Tensor<T>());
        Tensor<T> q = autodiff::linear(tape, query, attn_query_w_, Tensor<T>());
        Tensor<T> pre = autodiff::add_rowvec(tape, memory_proj, q);
        pre = autodiff::add(tape, pre, u);
        pre = autodiff::add_rowvec(tape, pre, attn_bias_);
        Tensor<T> energies = autodiff::matvec(tape, autodiff::tanh_op(tape, pre), attn_v_);
        Tensor<T> alignment = autodiff::softmax(tape, energies);
        Tensor<T> context = autodiff::vecmat(tape, alignment, memory);
        AttentionState<T> next;
        next.alignment = alignment;
        next.cumulative = autodiff::add(tape, state.cumulative, alignment);
        next.context = context;
        return {context, next};
    }

    // --------------------------------------------------------- decode step

    struct StepOutput {
        Tensor<T> frame;
        Tensor<T> stop_logit;  // scalar
        DecoderState<T> state;
    };

    // Pre-net dropout stays active in inference mode by design; it is the
    // model's only source of output variation at synthesis time.
    StepOutput decode_step(Tape<T>* tape, const Tensor<T>& prev_frame,
                           const DecoderState<T>& state, const Tensor<T>& memory,
                           const Tensor<T>& memory_proj, bool training, Rng& rng) {
        if (prev_frame.size() != static_cast<std::size_t>(cfg_.output_dim))
            throw std::invalid_argument("decode_step: prev frame has " +
                                        std::to_string(prev_frame.size()) + " entries, expected " +
                                        std::to_string(cfg_.output_dim));
        Tensor<T> p = prev_frame;
        for (std::size_t l = 0; l < prenet_w_.size(); ++l) {
            p = autodiff::relu(tape, autodiff::linear(tape, p, prenet_w_[l], prenet_b_[l]));
            p = autodiff::dropout(tape, p, cfg_.dropout_p, rng, /*training=*/true);
        }
        Tensor<T> x = autodiff::concat(tape, p, state.attn.context, 0);
        DecoderState<T> next = state;
        next.lstm1 = autodiff::lstm_cell(tape, x, state.lstm1.h, state.lstm1.c, dec_lstm1_,
                                         cfg_.zoneout_p, training, rng);
        next.lstm2 = autodiff::lstm_cell(tape, next.lstm1.h, state.lstm2.h, state.lstm2.c,
                                         dec_lstm2_, cfg_.zoneout_p, training, rng);
        const Tensor<T>& query =
            cfg_.attention_query == AttentionQuery::kFirstLstm ? next.lstm1.h : next.lstm2.h;
        auto [context, attn] = attend(tape, query, memory, memory_proj, state.attn);
        next.attn = attn;
        Tensor<T> cat = autodiff::concat(tape, next.lstm2.h, context, 0);
        StepOutput out;
        out.frame = autodiff::linear(tape, cat, frame_proj_w_, frame_proj_b_);
        out.stop_logit = autodiff::linear(tape, cat, stop_proj_w_, stop_proj_b_);
        out.state = std::move(next);
        for (T v : out.frame.value())
            if (!std::isfinite(v)) throw std::runtime_error("non-finite activation in frame projection");
        return out;
    }

    // ------------------------------------------------------------ post-net

    Tensor<T> postnet(Tape<T>* tape, const Tensor<T>& x, bool training, Rng& rng) {
        Tensor<T> h = x;
        for (int l = 0; l < cfg_.postnet_layers; ++l) {
            h = autodiff::conv1d(tape, h, post_conv_w_[l], post_conv_b_[l], 1, PadMode::kSame);
            h = autodiff::batchnorm1d(tape, h, post_bn_gamma_[l], post_bn_beta_[l], post_bn_[l],
                                      training);
            if (l + 1 < cfg_.postnet_layers) h = autodiff::tanh_op(tape, h);
            h = autodiff::dropout(tape, h, cfg_.dropout_p, rng, training);
        }
        return h;
    }

    // ------------------------------------------------------ whole-sequence

    // Frame t is conditioned on ground-truth frame t-1; frame -1 is the
    // all-zero go frame. pad_steps extends the loop past the target with
    // zero-frame inputs, reproducing padded-batch training: those frames carry
    // stop targets of 1 and are excluded from the spectrogram loss.
    DecoderOutput<T> forward_teacher_forced(Tape<T>* tape, const std::vector<int>& ids,
                                            const Tensor<T>& target, bool training,
                                            std::uint64_t seed, std::size_t pad_steps = 0) {
        if (target.rank() != 2 || target.rows() == 0 ||
            target.cols() != static_cast<std::size_t>(cfg_.output_dim))
            throw std::invalid_argument("teacher forcing: target must be (frames, output_dim)");
        Rng rng(seed);
        Tensor<T> memory = encode(tape, ids, training, rng);
        Tensor<T> memory_proj = project_memory(tape, memory);
        DecoderState<T> state = initial_decoder_state(ids.size());

        const std::size_t frames = target.rows();
        const std::size_t total = frames + pad_steps;
        std::vector<Tensor<T>> frame_rows(total), align_rows(total), stop_scalars(total);
        Tensor<T> prev = go_frame();
        for (std::size_t t = 0; t < total; ++t) {
            StepOutput step = decode_step(tape, prev, state, memory, memory_proj, training, rng);
            frame_rows[t] = step.frame;
            stop_scalars[t] = step.stop_logit;
            align_rows[t] = step.state.attn.alignment;
            state = std::move(step.state);
            prev = t < frames
                       ? Tensor<T>(Shape{target.cols()},
                                   std::vector<T>(&target.at(t, 0),
                                                  &target.at(t, 0) + target.cols()))
                       : go_frame();
        }
        return assemble(tape, frame_rows, stop_scalars, align_rows, training, rng, false);
    }

    // Autoregressive inference; feeds back the before-postnet frame and stops
    // at the first stop probability above the threshold (that frame included).
    DecoderOutput<T> infer(const std::vector<int>& ids, std::uint64_t seed) {
        Rng rng(seed);
        Tape<T>* tape = nullptr;
        Tensor<T> memory = encode(tape, ids, false, rng);
        Tensor<T> memory_proj = project_memory(tape, memory);
        DecoderState<T> state = initial_decoder_state(ids.size());

        std::vector<Tensor<T>> frame_rows, align_rows, stop_scalars;
        Tensor<T> prev = go_frame();
        auto [steps, truncated] = autoregress(
            [&](std::size_t) {
                StepOutput step =
                    decode_step(tape, prev, state, memory, memory_proj, false, rng);
                frame_rows.push_back(step.frame);
                stop_scalars.push_back(step.stop_logit);
                align_rows.push_back(step.state.attn.alignment);
                state = std::move(step.state);
                prev = step.frame;
                return static_cast<double>(autodiff::sigmoid_scalar(step.stop_logit[0]));
            },
            static_cast<std::size_t>(cfg_.max_decoder_steps), cfg_.stop_threshold);
        (void)steps;
        DecoderOutput<T> out = assemble(tape, frame_rows, stop_scalars, align_rows, false, rng,
                                        truncated);
        return out;
    }

    // Spectrogram terms cover only the real frames; the stop term spans the
    // whole (possibly padded) sequence.
    LossTerms<T> loss_terms(Tape<T>* tape, const DecoderOutput<T>& out, const Tensor<T>& target,
                            const Tensor<T>& stop_target) {
        if (out.before.rows() < target.rows() || out.stop_logits.size() != stop_target.size())
            throw std::invalid_argument("predictor loss: output shape " +
                                        autodiff::shape_str(out.before.shape()) +
                                        " incompatible with target " +
                                        autodiff::shape_str(target.shape()));
        Tensor<T> before = out.before, after = out.after;
        if (out.before.rows() > target.rows()) {
            before = autodiff::slice_rows(tape, out.before, 0, target.rows());
            after = autodiff::slice_rows(tape, out.after, 0, target.rows());
        }
        LossTerms<T> terms;
        terms.mel_before = autodiff::mse(tape, before, target);
        terms.mel_after = autodiff::mse(tape, after, target);
        terms.stop_bce = autodiff::bce_with_logits(tape, out.stop_logits, stop_target);
        terms.total = autodiff::add(tape, autodiff::add(tape, terms.mel_before, terms.mel_after),
                                    terms.stop_bce);
        return terms;
    }

    Tensor<T> loss(Tape<T>* tape, const DecoderOutput<T>& out, const Tensor<T>& target,
                   const Tensor<T>& stop_target) {
        return loss_terms(tape, out, target, stop_target).total;
    }

    Tensor<T> go_frame() const { return Tensor<T>(Shape{static_cast<std::size_t>(cfg_.output_dim)}); }

private:
    DecoderOutput<T> assemble(Tape<T>* tape, const std::vector<Tensor<T>>& frame_rows,
                              const std::vector<Tensor<T>>& stop_scalars,
                              const std::vector<Tensor<T>>& align_rows, bool training, Rng& rng,
                              bool truncated) {
        DecoderOutput<T> out;
        out.before = autodiff::stack_rows(tape, frame_rows);
        out.stop_logits = autodiff::stack_scalars(tape, stop_scalars);
        out.stop_probs = autodiff::sigmoid(tape, out.stop_logits);
        out.alignments = autodiff::stack_rows(tape, align_rows);
        out.truncated = truncated;
        if (cfg_.postnet_enabled) {
            Tensor<T> residual = postnet(tape, out.before, training, rng);
            out.after = autodiff::add(tape, out.before, residual);
        } else {
            out.after = out.before;
        }
        return out;
    }

    void build(Rng& rng) {
        const auto e = static_cast<std::size_t>(cfg_.embedding_dim);
        const auto filt = static_cast<std::size_t>(cfg_.encoder_conv_filters);
        const auto width = static_cast<std::size_t>(cfg_.encoder_conv_width);
        const auto enc = encoder_dim();
        const auto half = enc / 2;
        const auto attn = static_cast<std::size_t>(cfg_.attention_dim);
        const auto loc = static_cast<std::size_t>(cfg_.location_filters);
        const auto pre = static_cast<std::size_t>(cfg_.prenet_units);
        const auto dec = static_cast<std::size_t>(cfg_.decoder_lstm_units);
        const auto outd = static_cast<std::size_t>(cfg_.output_dim);
        const auto pfilt = static_cast<std::size_t>(cfg_.postnet_filters);
        const auto pwidth = static_cast<std::size_t>(cfg_.postnet_width);

        embedding_ = Tensor<T>(Shape{static_cast<std::size_t>(cfg_.vocab_size), e});
        autodiff::init_glorot(embedding_, rng, cfg_.vocab_size, e);
        store_.add("embedding", embedding_, /*decay=*/false);

        for (int l = 0; l < cfg_.encoder_conv_layers; ++l) {
            const std::size_t cin = l == 0 ? e : filt;
            Tensor<T> w(Shape{width, cin, filt});
            autodiff::init_glorot(w, rng, width * cin, width * filt);
            Tensor<T> b(Shape{filt});
            const std::string p = "encoder.conv" + std::to_string(l);
            enc_conv_w_.push_back(store_.add(p + ".w", w, true));
            enc_conv_b_.push_back(store_.add(p + ".b", b, false));
            add_batchnorm(p + ".bn", filt, enc_bn_gamma_, enc_bn_beta_, enc_bn_, rng);
        }
        enc_lstm_fwd_ = add_lstm("encoder.lstm_fwd", filt, half, rng);
        enc_lstm_bwd_ = add_lstm("encoder.lstm_bwd", filt, half, rng);

        attn_query_w_ = Tensor<T>(Shape{dec, attn});
        autodiff::init_glorot(attn_query_w_, rng, dec, attn);
        store_.add("attention.query_w", attn_query_w_, true);
        attn_memory_w_ = Tensor<T>(Shape{enc, attn});
        autodiff::init_glorot(attn_memory_w_, rng, enc, attn);
        store_.add("attention.memory_w", attn_memory_w_, true);
        attn_loc_conv_w_ =
            Tensor<T>(Shape{static_cast<std::size_t>(cfg_.location_kernel), 1, loc});
        autodiff::init_glorot(attn_loc_conv_w_, rng, cfg_.location_kernel, cfg_.location_kernel * loc);
        store_.add("attention.location_conv_w", attn_loc_conv_w_, true);
        attn_loc_proj_w_ = Tensor<T>(Shape{loc, attn});
        autodiff::init_glorot(attn_loc_proj_w_, rng, loc, attn);
        store_.add("attention.location_proj_w", attn_loc_proj_w_, true);
        attn_bias_ = Tensor<T>(Shape{attn});
        store_.add("attention.bias", attn_bias_, false);
        attn_v_ = Tensor<T>(Shape{attn});
        autodiff::init_glorot(attn_v_, rng, attn, 1);
        store_.add("attention.v", attn_v_, true);

        for (int l = 0; l < cfg_.prenet_layers; ++l) {
            const std::size_t in = l == 0 ? outd : pre;
            Tensor<T> w(Shape{in, pre});
            autodiff::init_glorot(w, rng, in, pre);
            Tensor<T> b(Shape{pre});
            const std::string p = "prenet" + std::to_string(l);
            prenet_w_.push_back(store_.add(p + ".w", w, true));
            prenet_b_.push_back(store_.add(p + ".b", b, false));
        }

        dec_lstm1_ = add_lstm("decoder.lstm1", pre + enc, dec, rng);
        dec_lstm2_ = add_lstm("decoder.lstm2", dec, dec, rng);

        frame_proj_w_ = Tensor<T>(Shape{dec + enc, outd});
        autodiff::init_glorot(frame_proj_w_, rng, dec + enc, outd);
        store_.add("frame_proj.w", frame_proj_w_, true);
        frame_proj_b_ = Tensor<T>(Shape{outd});
        store_.add("frame_proj.b", frame_proj_b_, false);
        stop_proj_w_ = Tensor<T>(Shape{dec + enc, 1});
        autodiff::init_glorot(stop_proj_w_, rng, dec + enc, 1);
        store_.add("stop_proj.w", stop_proj_w_, true);
        stop_proj_b_ = Tensor<T>(Shape{1});
        store_.add("stop_proj.b", stop_proj_b_, false);

        for (int l = 0; l < cfg_.postnet_layers; ++l) {
            const std::size_t cin = l == 0 ? outd : pfilt;
            const std::size_t cout = l + 1 == cfg_.postnet_layers ? outd : pfilt;
            Tensor<T> w(Shape{pwidth, cin, cout});
            autodiff::init_glorot(w, rng, pwidth * cin, pwidth * cout);
            Tensor<T> b(Shape{cout});
            const std::string p = "postnet.conv" + std::to_string(l);
            post_conv_w_.push_back(store_.add(p + ".w", w, true));
            post_conv_b_.push_back(store_.add(p + ".b", b, false));
            add_batchnorm(p + ".bn", cout, post_bn_gamma_, post_bn_beta_, post_bn_, rng);
        }
    }

    void add_batchnorm(const std::string& prefix, std::size_t channels,
                       std::vector<Tensor<T>>& gammas, std::vector<Tensor<T>>& betas,
                       std::vector<BatchNormState<T>>& states, Rng&) {
        Tensor<T> gamma(Shape{channels}, T(1));
        Tensor<T> beta(Shape{channels});
        gammas.push_back(store_.add(prefix + ".gamma", gamma, false));
        betas.push_back(store_.add(prefix + ".beta", beta, false));
        BatchNormState<T> st;
        st.running_mean = store_.add(prefix + ".running_mean", Tensor<T>(Shape{channels}), false,
                                     /*trainable=*/false);
        st.running_var = store_.add(prefix + ".running_var", Tensor<T>(Shape{channels}, T(1)),
                                    false, /*trainable=*/false);
        states.push_back(st);
    }

    LstmWeights<T> add_lstm(const std::string& prefix, std::size_t in, std::size_t hidden,
                            Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        LstmWeights<T> w;
        w.wx = Tensor<T>(Shape{in, 4 * hidden});
        autodiff::init_uniform(w.wx, rng, -bound, bound);
        w.wh = Tensor<T>(Shape{hidden, 4 * hidden});
        autodiff::init_uniform(w.wh, rng, -bound, bound);
        w.b = Tensor<T>(Shape{4 * hidden});
        for (std::size_t u = 0; u < hidden; ++u) w.b[hidden + u] = T(1);  // forget-gate bias
        store_.add(prefix + ".wx", w.wx, true);
        store_.add(prefix + ".wh", w.wh, true);
        store_.add(prefix + ".b", w.b, false);
        return w;
    }

    PredictorConfig cfg_;
    ParamStore<T> store_;

    Tensor<T> embedding_;
    std::vector<Tensor<T>> enc_conv_w_, enc_conv_b_, enc_bn_gamma_, enc_bn_beta_;
    std::vector<BatchNormState<T>> enc_bn_;
    LstmWeights<T> enc_lstm_fwd_, enc_lstm_bwd_;

    Tensor<T> attn_query_w_, attn_memory_w_, attn_loc_conv_w_, attn_loc_proj_w_, attn_bias_,
        attn_v_;

    std::vector<Tensor<T>> prenet_w_, prenet_b_;
    LstmWeights<T> dec_lstm1_, dec_lstm2_;
    Tensor<T> frame_proj_w_, frame_proj_b_, stop_proj_w_, stop_proj_b_;

    std::vector<Tensor<T>> post_conv_w_, post_conv_b_, post_bn_gamma_, post_bn_beta_;
    std::vector<BatchNormState<T>> post_bn_;
};

}  // namespace melsynth::predictor
