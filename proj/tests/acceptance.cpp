// End-to-end acceptance suite. Each criterion runs standalone, prints one
// PASS/FAIL line, and the binary exits nonzero if any failed.
//
//   acceptance [--only N]

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "gradcheck.hpp"
#include "melsynth/dsp/dsp.hpp"
#include "melsynth/dsp/wav.hpp"
#include "melsynth/pipeline/commands.hpp"
#include "melsynth/pipeline/manifest.hpp"
#include "melsynth/pipeline/text.hpp"
#include "melsynth/pipeline/toy_corpus.hpp"
#include "melsynth/predictor/model.hpp"
#include "melsynth/train/dataset.hpp"
#include "melsynth/train/evaluate.hpp"
#include "melsynth/train/trainer.hpp"
#include "melsynth/vocoder/generator.hpp"
#include "melsynth/vocoder/model.hpp"

using namespace melsynth;
namespace fs = std::filesystem;

namespace {

struct Check {
    std::string label;
    bool ok;
};

class Criterion {
public:
    Criterion(std::string name) : name_(std::move(name)) {}

    void require(const std::string& label, bool ok, const std::string& detail = "") {
        checks_.push_back({label + (detail.empty() ? "" : " [" + detail + "]"), ok});
    }

    template <class T>
    void require_le(const std::string& label, T value, T bound, const std::string& extra = "") {
        std::ostringstream os;
        os << value << " <= " << bound;
        if (!extra.empty()) os << "; " << extra;
        require(label, value <= bound, os.str());
    }
    template <class T>
    void require_ge(const std::string& label, T value, T bound, const std::string& extra = "") {
        std::ostringstream os;
        os << value << " >= " << bound;
        if (!extra.empty()) os << "; " << extra;
        require(label, value >= bound, os.str());
    }

    bool passed() const {
        for (const auto& c : checks_)
            if (!c.ok) return false;
        return true;
    }
    const std::vector<Check>& checks() const { return checks_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::vector<Check> checks_;
};

fs::path work_dir() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / "melsynth_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// Shared toy-corpus assets, preprocessed once and reused by criteria 6-10.
struct ToyAssets {
    std::string corpus_dir;
    std::string feature_dir;
    train::Dataset dataset;
};

const ToyAssets& toy_assets() {
    static ToyAssets assets = [] {
        ToyAssets a;
        a.corpus_dir = (work_dir() / "corpus").string();
        a.feature_dir = (work_dir() / "features").string();
        dsp::DspConfig dcfg;
        pipeline::ToyCorpusOptions topt;
        topt.utterances = 4;
        topt.seed = 1234;
        const std::string manifest = pipeline::make_toy_corpus(a.corpus_dir, topt, dcfg);
        pipeline::PreprocessOptions pre;
        pre.manifest_path = manifest;
        pre.out_dir = a.feature_dir;
        std::ostringstream out, err;
        if (pipeline::cmd_preprocess(pre, out, err) != 0)
            throw std::runtime_error("toy preprocess failed: " + err.str());
        a.dataset = train::load_dataset(a.feature_dir + "/index.txt", false, false, 24000, 300);
        return a;
    }();
    return assets;
}

// 2-second deterministic tone clip for the vocoder overfit.
dsp::Waveform vocoder_clip() {
    dsp::Waveform wav;
    wav.sample_rate_hz = 24000;
    for (char c : std::string("abcdefgh"))
        pipeline::append_char_tone(wav.samples, c, 6000, 24000, 0.35);
    return wav;
}

double mel_l2(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b) {
    const std::size_t n = std::min(a.data.size(), b.data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / n);
}

// ---------------------------------------------------------------- criteria

void criterion_table4(Criterion& c) {
    pipeline::AnalyzeRfOptions opt;
    opt.table4 = true;
    std::ostringstream out, err;
    const int code = pipeline::cmd_analyze_rf(opt, out, err);
    c.require("analyze-rf exit code 0", code == 0);
    const std::string s = out.str();
    for (const char* token : {"6,139 / 255.8", "505 / 21.0", "253 / 10.5", "61 / 2.5"})
        c.require(std::string("table row ") + token, s.find(token) != std::string::npos);
}

predictor::PredictorConfig gradcheck_predictor_config() {
    predictor::PredictorConfig cfg;  // every width at most 8
    cfg.embedding_dim = 6;
    cfg.encoder_conv_layers = 2;
    cfg.encoder_conv_filters = 6;
    cfg.encoder_conv_width = 3;
    cfg.encoder_lstm_units = 8;
    cfg.attention_dim = 7;
    cfg.location_filters = 3;
    cfg.location_kernel = 5;
    cfg.prenet_units = 6;
    cfg.decoder_lstm_units = 8;
    cfg.output_dim = 5;
    cfg.postnet_layers = 3;
    cfg.postnet_filters = 6;
    cfg.postnet_width = 3;
    cfg.max_decoder_steps = 20;
    return cfg;
}

void criterion_gradients(Criterion& c) {
    using autodiff::PadMode;
    using autodiff::Tape;
    using autodiff::Tensor;
    using gradcheck::random_tensor;

    const std::uint64_t seeds[3] = {11, 222, 3333};
    double worst_kernel = 0.0;

    auto check = [&](const std::vector<Tensor<double>>& leaves,
                     const std::function<Tensor<double>(Tape<double>*)>& fwd, std::uint64_t s) {
        Rng probe(s);
        const auto rep = gradcheck::max_rel_grad_error(leaves, fwd, probe, 6);
        worst_kernel = std::max(worst_kernel, rep.max_rel_err);
    };

    for (std::uint64_t s : seeds) {
        Rng rng(s);
        Tensor<double> x = random_tensor({7, 3}, rng);
        Tensor<double> w = random_tensor({3, 4}, rng, 0.5);
        Tensor<double> b = random_tensor({4}, rng, 0.1);
        Tensor<double> proj = random_tensor({7, 4}, rng);
        check({x, w, b},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, linear(t, x, w, b), proj);
              },
              s);

        Tensor<double> cw = random_tensor({3, 3, 4}, rng, 0.5);
        check({x, cw, b},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(
                      t, conv1d(t, x, cw, b, 2, PadMode::kCausal), proj);
              },
              s);
        Tensor<double> sw = random_tensor({5, 3, 4}, rng, 0.5);
        check({x, sw, b},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, conv1d(t, x, sw, b, 1, PadMode::kSame),
                                                      proj);
              },
              s);
        Tensor<double> tw = random_tensor({4, 3, 4}, rng, 0.5);
        Tensor<double> proj_t = random_tensor({(7 - 1) * 2 + 4, 4}, rng);
        check({x, tw, b},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, tconv1d(t, x, tw, b, 2), proj_t);
              },
              s);

        Tensor<double> table = random_tensor({5, 3}, rng);
        std::vector<int> ids{0, 3, 3, 1};
        Tensor<double> proj_e = random_tensor({4, 3}, rng);
        check({table},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, embedding(t, ids, table), proj_e);
              },
              s);

        Tensor<double> gamma = random_tensor({3}, rng, 0.3);
        Tensor<double> beta = random_tensor({3}, rng, 0.3);
        for (bool training : {true, false}) {
            autodiff::BatchNormState<double> st;
            st.running_mean = random_tensor({3}, rng, 0.2);
            st.running_var = Tensor<double>({3}, {0.5, 1.0, 2.0});
            Tensor<double> proj_x = random_tensor({7, 3}, rng);
            check({x, gamma, beta},
                  [&](Tape<double>* t) {
                      return gradcheck::project_to_scalar(
                          t, batchnorm1d(t, x, gamma, beta, st, training), proj_x);
                  },
                  s);
        }

        Tensor<double> v = random_tensor({7, 3}, rng, 1.5);
        Tensor<double> proj_v = random_tensor({7, 3}, rng);
        for (auto op : {0, 1, 2, 3, 4}) {
            check({v},
                  [&](Tape<double>* t) -> Tensor<double> {
                      Tensor<double> y;
                      switch (op) {
                          case 0: y = relu(t, v); break;
                          case 1: y = tanh_op(t, v); break;
                          case 2: y = sigmoid(t, v); break;
                          case 3: y = leaky_relu(t, v, 0.2); break;
                          default: y = softmax(t, v); break;
                      }
                      return gradcheck::project_to_scalar(t, y, proj_v);
                  },
                  s);
        }
        check({v},
              [&](Tape<double>* t) {
                  Rng drng(s + 9);
                  return gradcheck::project_to_scalar(t, dropout(t, v, 0.4, drng, true), proj_v);
              },
              s);

        Tensor<double> vec = random_tensor({3}, rng);
        Tensor<double> proj_mv = random_tensor({7}, rng);
        check({x, vec},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, matvec(t, x, vec), proj_mv);
              },
              s);
        Tensor<double> rowv = random_tensor({7}, rng);
        Tensor<double> proj_vm = random_tensor({3}, rng);
        check({rowv, x},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, vecmat(t, rowv, x), proj_vm);
              },
              s);
        Tensor<double> proj_rows = random_tensor({7, 3}, rng);
        check({x, vec},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, add_rowvec(t, x, vec), proj_rows);
              },
              s);

        Tensor<double> other = random_tensor({7, 3}, rng);
        Tensor<double> proj_cat = random_tensor({7, 6}, rng);
        check({x, other},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, concat(t, x, other, 1), proj_cat);
              },
              s);
        Tensor<double> proj_sl = random_tensor({3, 3}, rng);
        check({x},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, slice_rows(t, x, 2, 5), proj_sl);
              },
              s);
        Tensor<double> proj_sc = random_tensor({7, 2}, rng);
        check({x},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, slice_cols(t, x, 1, 3), proj_sc);
              },
              s);
        Tensor<double> proj_tr = random_tensor({3, 7}, rng);
        check({x},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, transpose(t, x), proj_tr);
              },
              s);
        Tensor<double> proj_rs = random_tensor({21}, rng);
        check({x},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, reshape(t, x, {21}), proj_rs);
              },
              s);
        std::vector<Tensor<double>> rows{random_tensor({3}, rng), random_tensor({3}, rng)};
        Tensor<double> proj_st = random_tensor({2, 3}, rng);
        check({rows[0], rows[1]},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, stack_rows(t, rows), proj_st);
              },
              s);
        check({x, other},
              [&](Tape<double>* t) {
                  return gradcheck::project_to_scalar(t, mul(t, add(t, x, other), sub(t, x, other)),
                                                      proj_rows);
              },
              s);
        check({x}, [&](Tape<double>* t) { return mse(t, scale(t, x, 1.3), other); }, s);
        Tensor<double> logits = random_tensor({6}, rng, 2.0);
        Tensor<double> labels({6}, {1.0, 0.0, 0.0, 1.0, 1.0, 0.0});
        check({logits}, [&](Tape<double>* t) { return bce_with_logits(t, logits, labels); }, s);

        // lstm cell in both modes, zoneout off and on
        const std::size_t in = 3, hidden = 4;
        Tensor<double> lx = random_tensor({in}, rng);
        Tensor<double> lh = random_tensor({hidden}, rng, 0.5);
        Tensor<double> lc = random_tensor({hidden}, rng, 0.5);
        autodiff::LstmWeights<double> lw;
        lw.wx = random_tensor({in, 4 * hidden}, rng, 0.5);
        lw.wh = random_tensor({hidden, 4 * hidden}, rng, 0.5);
        lw.b = random_tensor({4 * hidden}, rng, 0.2);
        Tensor<double> proj_h = random_tensor({hidden}, rng);
        Tensor<double> proj_c = random_tensor({hidden}, rng);
        for (double zp : {0.0, 0.3})
            for (bool training : {true, false})
                check({lx, lh, lc, lw.wx, lw.wh, lw.b},
                      [&](Tape<double>* t) {
                          Rng zrng(4242);
                          auto out = lstm_cell(t, lx, lh, lc, lw, zp, training, zrng);
                          return add(t, gradcheck::project_to_scalar(t, out.h, proj_h),
                                     gradcheck::project_to_scalar(t, out.c, proj_c));
                      },
                      s);

        // MoL likelihood: interior, both tails, far tail
        for (double target : {3.7, -127.5, 127.5, 90.0}) {
            Tensor<double> params(autodiff::Shape{1, 9});
            for (std::size_t i = 0; i < 3; ++i) {
                params[i] = rng.uniform(-1.0, 1.0);
                params[3 + i] = target == 90.0 ? -60.0 : rng.uniform(-20.0, 20.0);
                params[6 + i] = rng.uniform(-2.0, 1.0);
            }
            check({params},
                  [&](Tape<double>* t) {
                      return mean(t, vocoder::mol_nll(t, params, {target}, 3, 127.5, -7.0));
                  },
                  s);
        }
    }
    c.require_le("elementwise kernels max rel err", worst_kernel, 1e-4);

    // full networks at reduced precision targets
    double worst_pred = 0.0;
    const auto pcfg = gradcheck_predictor_config();
    for (std::uint64_t s : seeds) {
        predictor::PredictorModel<double> model(pcfg, s);
        Rng jitter(s + 100);
        std::vector<autodiff::Tensor<double>> leaves;
        for (auto& p : model.params().all())
            if (p.trainable) {
                for (std::size_t i = 0; i < p.tensor.size(); ++i)
                    p.tensor[i] += jitter.uniform(-0.05, 0.05);
                leaves.push_back(p.tensor);
            }
        Rng trng(s + 7);
        autodiff::Tensor<double> target(autodiff::Shape{3, (std::size_t)pcfg.output_dim});
        for (std::size_t i = 0; i < target.size(); ++i) target[i] = trng.normal();
        auto stop_target = predictor::make_stop_target<double>(3);
        const std::vector<int> ids{3, 5};
        Rng probe(s + 13);
        const auto rep = gradcheck::max_rel_grad_error(
            leaves,
            [&](autodiff::Tape<double>* tape) {
                auto out = model.forward_teacher_forced(tape, ids, target, true, s + 50);
                return model.loss(tape, out, target, stop_target);
            },
            probe, 4);
        worst_pred = std::max(worst_pred, rep.max_rel_err);
    }
    c.require_le("desk predictor max rel err", worst_pred, 1e-3);

    double worst_voc = 0.0;
    vocoder::VocoderConfig vcfg;
    vcfg.total_layers = 2;
    vcfg.dilation_cycle_size = 2;
    vcfg.residual_channels = 4;
    vcfg.skip_channels = 5;
    vcfg.conditioning_channels = 3;
    vcfg.upsample_factor_1 = 3;
    vcfg.upsample_factor_2 = 4;
    vcfg.mol_components = 2;
    vcfg.upsample_activation = vocoder::UpsampleActivation::kNone;
    for (std::uint64_t s : seeds) {
        vocoder::VocoderModel<double> model(vcfg, s);
        Rng jitter(s + 300);
        std::vector<autodiff::Tensor<double>> leaves;
        for (auto& p : model.params().all()) {
            for (std::size_t i = 0; i < p.tensor.size(); ++i)
                p.tensor[i] += jitter.uniform(-0.05, 0.05);
            leaves.push_back(p.tensor);
        }
        Rng mrng(s + 1);
        autodiff::Tensor<double> mel(autodiff::Shape{2, 3});
        for (std::size_t i = 0; i < mel.size(); ++i) mel[i] = mrng.normal();
        std::vector<double> audio(2 * vcfg.hop());
        Rng arng(s + 2);
        for (auto& v : audio) v = arng.uniform(-1.0, 1.0) * vcfg.target_scale;
        Rng probe(s + 17);
        const auto rep = gradcheck::max_rel_grad_error(
            leaves,
            [&](autodiff::Tape<double>* tape) {
                auto cond = model.upsample(tape, mel);
                auto params = model.forward(tape, audio, cond);
                return autodiff::mean(tape, model.nll(tape, params, audio));
            },
            probe, 4);
        worst_voc = std::max(worst_voc, rep.max_rel_err);
    }
    c.require_le("desk vocoder max rel err", worst_voc, 1e-3);
}

void criterion_mol_normalization(Criterion& c) {
    const double scale = 127.5;
    double worst_sum = 0.0;
    {
        const int levels = 256;
        const double half = vocoder::mol_bin_half_width(scale, levels);
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(seed * 7 + 1);
            const int k = 1 + static_cast<int>(rng.index(4));
            std::vector<double> p(3 * k);
            for (int i = 0; i < k; ++i) {
                p[i] = rng.uniform(-2.0, 2.0);
                p[k + i] = rng.uniform(-140.0, 140.0);
                p[2 * k + i] = rng.uniform(-4.0, 4.0);
            }
            autodiff::Tensor<double> params(autodiff::Shape{1, (std::size_t)(3 * k)}, p);
            double total = 0.0;
            for (int bin = 0; bin < levels; ++bin) {
                const double x = -scale + 2.0 * half * bin;
                auto nll = vocoder::mol_nll<double>(nullptr, params, {x}, k, scale, -30.0, levels);
                total += std::exp(-nll[0]);
            }
            worst_sum = std::max(worst_sum, std::abs(total - 1.0));
        }
    }
    c.require_le("256-bin partition |sum - 1|", worst_sum, 1e-9);

    double worst_spot = 0.0;
    {
        const int levels = 65536;
        const double half = vocoder::mol_bin_half_width(scale, levels);
        auto cdf = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
        Rng rng(99);
        for (int trial = 0; trial < 100; ++trial) {
            const int k = 1 + static_cast<int>(rng.index(3));
            std::vector<double> p(3 * k);
            for (int i = 0; i < k; ++i) {
                p[i] = rng.uniform(-1.5, 1.5);
                p[k + i] = rng.uniform(-120.0, 120.0);
                p[2 * k + i] = rng.uniform(-2.0, 3.0);
            }
            const std::size_t bin = rng.index(levels);
            const double x = -scale + 2.0 * half * static_cast<double>(bin);
            double wmax = p[0];
            for (int i = 1; i < k; ++i) wmax = std::max(wmax, p[i]);
            double wsum = 0.0;
            for (int i = 0; i < k; ++i) wsum += std::exp(p[i] - wmax);
            double lik = 0.0;
            for (int i = 0; i < k; ++i) {
                const double s = std::exp(p[2 * k + i]);
                double comp;
                if (x <= -scale + half) comp = cdf((x + half - p[k + i]) / s);
                else if (x >= scale - half) comp = 1.0 - cdf((x - half - p[k + i]) / s);
                else comp = cdf((x + half - p[k + i]) / s) - cdf((x - half - p[k + i]) / s);
                lik += std::exp(p[i] - wmax) / wsum * comp;
            }
            autodiff::Tensor<double> params(autodiff::Shape{1, (std::size_t)(3 * k)}, p);
            auto nll = vocoder::mol_nll<double>(nullptr, params, {x}, k, scale, -30.0, levels);
            worst_spot = std::max(worst_spot, std::abs(std::exp(-nll[0]) - lik));
        }
    }
    c.require_le("16-bit spot check max |diff|", worst_spot, 1e-9);
}

void criterion_causality(Criterion& c) {
    using autodiff::PadMode;
    using autodiff::Tensor;

    bool conv_ok = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        Tensor<double> x(autodiff::Shape{24, 2});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        Tensor<double> w(autodiff::Shape{3, 2, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal();
        const std::size_t dil = 1 + rng.index(4);
        auto y0 = conv1d<double>(nullptr, x, w, Tensor<double>(), dil, PadMode::kCausal);
        const std::size_t t0 = 4 + rng.index(16);
        x[t0 * 2] += 5.0;
        auto y1 = conv1d<double>(nullptr, x, w, Tensor<double>(), dil, PadMode::kCausal);
        for (std::size_t t = 0; t < t0; ++t)
            for (std::size_t ch = 0; ch < 3; ++ch)
                if (y0.at(t, ch) != y1.at(t, ch)) conv_ok = false;
    }
    c.require("causal conv: past outputs identical under future perturbation", conv_ok);

    bool voc_ok = true, voc_changed = true;
    vocoder::VocoderConfig vcfg;
    vcfg.total_layers = 4;
    vcfg.dilation_cycle_size = 2;
    vcfg.residual_channels = 6;
    vcfg.skip_channels = 8;
    vcfg.conditioning_channels = 4;
    vcfg.upsample_factor_1 = 3;
    vcfg.upsample_factor_2 = 4;
    vcfg.mol_components = 2;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        vocoder::VocoderModel<float> model(vcfg, seed);
        Rng rng(seed + 50);
        const std::size_t n = 36;
        Tensor<float> cond(autodiff::Shape{n, 4});
        for (std::size_t i = 0; i < cond.size(); ++i) cond[i] = (float)rng.normal();
        std::vector<float> audio(n);
        for (auto& v : audio) v = (float)(rng.uniform(-1.0, 1.0) * vcfg.target_scale);
        auto p0 = model.forward(nullptr, audio, cond);
        const std::size_t t0 = 5 + rng.index(n - 10);
        audio[t0] += 3.0f;
        auto p1 = model.forward(nullptr, audio, cond);
        for (std::size_t t = 0; t <= t0; ++t)
            for (std::size_t ch = 0; ch < p0.cols(); ++ch)
                if (p0.at(t, ch) != p1.at(t, ch)) voc_ok = false;
        bool changed = false;
        for (std::size_t t = t0 + 1; t < n && !changed; ++t)
            for (std::size_t ch = 0; ch < p0.cols(); ++ch)
                if (p0.at(t, ch) != p1.at(t, ch)) changed = true;
        if (!changed) voc_changed = false;
    }
    c.require("vocoder: outputs <= t exactly unchanged", voc_ok);
    c.require("vocoder: later outputs do change", voc_changed);
}

void criterion_dsp(Criterion& c) {
    dsp::DspConfig cfg;
    auto snr = [&](const dsp::Waveform& w) {
        const auto rec = dsp::istft(dsp::stft_complex(w, cfg), cfg);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
            const double d = rec.samples[i] - w.samples[i];
            num += d * d;
            den += w.samples[i] * w.samples[i];
        }
        return 10.0 * std::log10(den / std::max(num, 1e-300));
    };

    dsp::Waveform noise;
    noise.sample_rate_hz = 24000;
    Rng rng(5);
    noise.samples.resize(24000);
    for (auto& v : noise.samples) v = rng.uniform(-0.7, 0.7);
    c.require_ge("white noise round-trip SNR dB", snr(noise), 60.0);

    dsp::Waveform chirp;
    chirp.sample_rate_hz = 24000;
    chirp.samples.resize(24000);
    for (std::size_t i = 0; i < chirp.samples.size(); ++i) {
        const double t = static_cast<double>(i) / 24000.0;
        chirp.samples[i] = 0.6 * std::sin(2.0 * M_PI * (150.0 * t + 0.5 * 3000.0 * t * t));
    }
    c.require_ge("chirp round-trip SNR dB", snr(chirp), 60.0);

    dsp::Waveform tone;
    tone.sample_rate_hz = 24000;
    tone.samples.resize(12000);
    for (std::size_t i = 0; i < tone.samples.size(); ++i)
        tone.samples[i] = 0.8 * std::sin(2.0 * M_PI * 440.0 * i / 24000.0);
    const auto target = dsp::stft(tone, cfg);
    const auto gl = dsp::griffin_lim(target, cfg, 60, 7);
    bool monotone = true;
    for (std::size_t i = 1; i < gl.errors.size(); ++i)
        if (gl.errors[i] > gl.errors[i - 1] + 1e-12) monotone = false;
    c.require("griffin-lim error non-increasing over 60 iterations", monotone);
    c.require_ge("griffin-lim error reduction factor", gl.errors.front() / gl.errors.back(), 10.0);
}

struct OverfitResult {
    std::string predictor_ckpt;
};

void criterion_predictor_overfit(Criterion& c, OverfitResult& artifacts) {
    const auto& assets = toy_assets();
    const auto pcfg = predictor::PredictorConfig::desk();
    const std::uint64_t seed = 42;
    predictor::PredictorModel<float> model(pcfg, mix_seed(seed, 0x9ed1));

    train::PredictorTrainOptions opt;
    opt.batch_size = 4;
    opt.max_steps = 2000;
    opt.checkpoint_every = 2000;
    opt.seed = seed;
    opt.schedule.lr_init = 2e-3;
    opt.schedule.lr_final = 2e-5;
    opt.out_dir = (work_dir() / "predictor_run").string();
    train::PredictorTrainer trainer(model, assets.dataset, opt);

    double first_loss = -1.0;
    train::TrainLogRecord last{};
    while (trainer.step() < opt.max_steps) {
        last = trainer.train_step();
        if (first_loss < 0) first_loss = last.loss;
    }
    artifacts.predictor_ckpt = trainer.checkpoint_path(2000);
    trainer.save_checkpoint(artifacts.predictor_ckpt);

    c.require_ge("teacher-forced loss reduction", 1.0 - last.loss / first_loss, 0.90);

    double mono_sum = 0.0;
    bool lengths_ok = true, stops_ok = true;
    std::string detail;
    for (std::size_t i = 0; i < assets.dataset.size(); ++i) {
        const auto& u = assets.dataset.items[i];
        auto out = model.infer(u.char_ids, mix_seed(seed, i, 0xf8ee));
        mono_sum += train::monotonicity_ratio(out.alignments) / assets.dataset.size();
        if (out.truncated) stops_ok = false;
        const double ratio =
            static_cast<double>(out.before.rows()) / static_cast<double>(u.features.rows());
        if (ratio < 0.8 || ratio > 1.2) lengths_ok = false;
        detail += (detail.empty() ? "" : ", ") + std::to_string(out.before.rows()) + "/" +
                  std::to_string(u.features.rows());
    }
    c.require_ge("alignment monotonicity ratio", mono_sum, 0.90);
    c.require("free-running inference terminates via the stop token", stops_ok);
    c.require("free-running lengths within 20% of targets", lengths_ok, detail);
}

void criterion_vocoder_overfit(Criterion& c) {
    dsp::DspConfig dcfg;
    const dsp::Waveform clip = vocoder_clip();
    const auto mel = dsp::mel_spectrogram(clip, dcfg);

    train::Dataset data;
    train::Utterance u;
    u.id = "clip";
    u.features = autodiff::Tensor<float>(autodiff::Shape{mel.frames, mel.channels});
    for (std::size_t i = 0; i < mel.data.size(); ++i) u.features[i] = (float)mel.data[i];
    u.audio.assign(clip.samples.begin(), clip.samples.end());
    u.audio.resize(mel.frames * 300, 0.0f);
    data.items.push_back(std::move(u));

    vocoder::VocoderConfig vcfg = vocoder::VocoderConfig::desk();  // 12 layers, cycle 6
    vocoder::VocoderModel<float> model(vcfg, mix_seed(42, 0x90c0));

    double first_nll = -1.0;
    train::TrainLogRecord last{};
    {
        train::VocoderTrainOptions opt;
        opt.batch_size = 1;
        opt.max_steps = 1600;
        opt.checkpoint_every = 1000000;
        opt.seed = 42;
        opt.lr = 2e-3;
        opt.crop_samples = 1800;
        opt.grad_clip_norm = 1.0;
        train::VocoderTrainer trainer(model, data, opt);
        while (trainer.step() < opt.max_steps) {
            last = trainer.train_step();
            if (first_nll < 0) first_nll = last.nll;
        }
    }
    {
        train::VocoderTrainOptions opt;
        opt.batch_size = 1;
        opt.max_steps = 800;
        opt.checkpoint_every = 1000000;
        opt.seed = 43;
        opt.lr = 1e-4;
        opt.crop_samples = 1800;
        opt.grad_clip_norm = 1.0;
        train::VocoderTrainer trainer(model, data, opt);
        while (trainer.step() < opt.max_steps) last = trainer.train_step();
    }
    c.require_ge("vocoder NLL reduction", 1.0 - last.nll / first_nll, 0.90,
                 std::to_string(first_nll) + " -> " + std::to_string(last.nll));

    const auto gen = vocoder::generate(model, data.items[0].features, 777);
    dsp::Waveform gw;
    gw.sample_rate_hz = 24000;
    gw.samples.assign(gen.begin(), gen.end());
    const double trained_dist = mel_l2(dsp::mel_spectrogram(gw, dcfg), mel);

    vocoder::VocoderModel<float> random_model(vcfg, mix_seed(4242, 0x90c0));
    const auto rgen = vocoder::generate(random_model, data.items[0].features, 777);
    dsp::Waveform rw;
    rw.sample_rate_hz = 24000;
    rw.samples.assign(rgen.begin(), rgen.end());
    const double random_dist = mel_l2(dsp::mel_spectrogram(rw, dcfg), mel);

    c.require_le("generated mel distance vs random baseline", trained_dist, 0.5 * random_dist,
                 std::to_string(trained_dist) + " vs " + std::to_string(random_dist));
}

void criterion_gta(Criterion& c, const OverfitResult& artifacts) {
    const auto& assets = toy_assets();
    const auto pcfg = predictor::PredictorConfig::desk();
    predictor::PredictorModel<float> model(pcfg, 1);
    if (!artifacts.predictor_ckpt.empty()) {
        const auto ckpt = autodiff::Checkpoint::load(artifacts.predictor_ckpt);
        autodiff::load_store(ckpt, model.params(), "model.");
    }
    const auto gta = train::make_gta_features(model, assets.dataset, 42);
    bool aligned = true;
    for (std::size_t i = 0; i < gta.size(); ++i)
        if (gta[i].dims[0] != assets.dataset.items[i].features.rows()) aligned = false;
    c.require("GTA frame counts equal ground truth for all utterances", aligned);

    // the command-level path writes an index whose frame counts also match
    pipeline::MakeGtaOptions opt;
    opt.index_path = assets.feature_dir + "/index.txt";
    opt.predictor_ckpt = artifacts.predictor_ckpt;
    opt.out_dir = (work_dir() / "gta").string();
    std::ostringstream out, err;
    const int code = pipeline::cmd_make_gta(opt, out, err);
    c.require("make-gta exit code 0", code == 0);
    const auto index = pipeline::read_index((work_dir() / "gta" / "index.txt").string());
    bool files_aligned = true;
    for (const auto& e : index) {
        const auto t = pipeline::read_feature_file((work_dir() / "gta" / e.mel_path).string());
        if (t.dims[0] != e.frames) files_aligned = false;
    }
    c.require("GTA feature files frame-aligned on disk", files_aligned);
}

void criterion_ablations(Criterion& c) {
    const auto& assets = toy_assets();

    // post-net toggle
    {
        auto pcfg = predictor::PredictorConfig::desk();
        pcfg.postnet_enabled = false;
        predictor::PredictorModel<float> model(pcfg, 5);
        train::PredictorTrainOptions opt;
        opt.batch_size = 2;
        opt.max_steps = 1;
        train::PredictorTrainer trainer(model, assets.dataset, opt);
        trainer.train_step();
        auto out = model.infer(assets.dataset.items[0].char_ids, 6);
        c.require("post-net off trains a step and infers",
                  out.after.same_node(out.before) && out.before.rows() > 0);
    }

    // linear-spectrogram predictor + Griffin-Lim synthesis
    {
        pipeline::PreprocessOptions pre;
        pre.manifest_path = assets.corpus_dir + "/manifest.txt";
        pre.out_dir = (work_dir() / "features_linear").string();
        pre.write_linear = true;
        std::ostringstream out, err;
        if (pipeline::cmd_preprocess(pre, out, err) != 0)
            throw std::runtime_error("linear preprocess failed");
        auto data = train::load_dataset(pre.out_dir + "/index.txt", true, false, 24000, 300);

        dsp::DspConfig dcfg;
        auto pcfg = predictor::PredictorConfig::desk();
        pcfg.output_dim = dcfg.fft_bins();  // 1025 linear bins
        predictor::PredictorModel<float> model(pcfg, 7);
        train::PredictorTrainOptions opt;
        opt.batch_size = 2;
        opt.max_steps = 1;
        train::PredictorTrainer trainer(model, data, opt);
        const auto rec = trainer.train_step();
        c.require("linear-output predictor trains a step", std::isfinite(rec.loss));

        auto pred = model.infer(data.items[0].char_ids, 8);
        dsp::LinearSpectrogram mag;
        mag.frames = std::min<std::size_t>(pred.after.rows(), 12);
        mag.bins = pred.after.cols();
        mag.data.resize(mag.frames * mag.bins);
        for (std::size_t i = 0; i < mag.data.size(); ++i)
            mag.data[i] = std::exp((double)pred.after.value()[i]);
        const auto gl = dsp::griffin_lim(mag, dcfg, 8, 9);
        c.require("Griffin-Lim path produces audio",
                  gl.waveform.samples.size() == mag.frames * 300);
    }

    // the four reference vocoder geometries instantiate, train, and generate
    {
        struct Geometry {
            int layers, cycle;
        };
        const Geometry table[] = {{30, 10}, {24, 6}, {12, 6}, {30, 1}};
        bool all_ok = true;
        std::string detail;
        for (const auto& g : table) {
            vocoder::VocoderConfig vcfg = vocoder::VocoderConfig::desk();
            vcfg.total_layers = g.layers;
            vcfg.dilation_cycle_size = g.cycle;
            vcfg.residual_channels = 8;
            vcfg.skip_channels = 8;
            vocoder::VocoderModel<float> model(vcfg, 11);

            dsp::DspConfig dcfg;
            dsp::Waveform tone;
            tone.sample_rate_hz = 24000;
            tone.samples.resize(9000);
            for (std::size_t i = 0; i < tone.samples.size(); ++i)
                tone.samples[i] = 0.3 * std::sin(2.0 * M_PI * 330.0 * i / 24000.0);
            const auto mel = dsp::mel_spectrogram(tone, dcfg);
            train::Dataset data;
            train::Utterance u;
            u.id = "tone";
            u.features = autodiff::Tensor<float>(autodiff::Shape{mel.frames, mel.channels});
            for (std::size_t i = 0; i < mel.data.size(); ++i) u.features[i] = (float)mel.data[i];
            u.audio.assign(tone.samples.begin(), tone.samples.end());
            u.audio.resize(mel.frames * 300, 0.0f);
            data.items.push_back(std::move(u));

            train::VocoderTrainOptions opt;
            opt.batch_size = 1;
            opt.max_steps = 1;
            opt.crop_samples = 900;
            train::VocoderTrainer trainer(model, data, opt);
            const auto rec = trainer.train_step();

            autodiff::Tensor<float> short_mel(autodiff::Shape{4, mel.channels});
            for (std::size_t i = 0; i < short_mel.size(); ++i) short_mel[i] = u.features[i];
            const auto gen = vocoder::generate(model, short_mel, 12);
            const bool ok = std::isfinite(rec.nll) && gen.size() == 4 * 300;
            if (!ok) all_ok = false;
            detail += (detail.empty() ? "" : ", ") + std::to_string(g.layers) + "x" +
                      std::to_string(g.cycle) + (ok ? " ok" : " FAIL");
        }
        c.require("table-4 geometries instantiate, train one step, generate", all_ok, detail);
    }
}

void criterion_determinism(Criterion& c) {
    const auto& assets = toy_assets();
    const fs::path dir = work_dir() / "determinism";
    fs::create_directories(dir);

    // small trained checkpoints for the synthesize command
    auto pcfg = predictor::PredictorConfig::desk();
    pcfg.max_decoder_steps = 40;
    predictor::PredictorModel<float> pred(pcfg, 21);
    train::PredictorTrainOptions popt;
    popt.batch_size = 2;
    popt.max_steps = 5;
    train::PredictorTrainer ptrainer(pred, assets.dataset, popt);
    while (ptrainer.step() < 5) ptrainer.train_step();
    const std::string pred_ckpt = (dir / "predictor.ckpt").string();
    ptrainer.save_checkpoint(pred_ckpt);

    vocoder::VocoderConfig vcfg = vocoder::VocoderConfig::desk();
    vcfg.residual_channels = 8;
    vcfg.skip_channels = 8;
    vocoder::VocoderModel<float> voc(vcfg, 22);
    train::Dataset vdata;
    {
        train::Utterance u;
        u.id = "v";
        u.features = assets.dataset.items[0].features;
        const auto w = dsp::read_wav(assets.dataset.items[0].wav_path, 24000);
        u.audio.assign(w.samples.begin(), w.samples.end());
        u.audio.resize(u.features.rows() * 300, 0.0f);
        vdata.items.push_back(std::move(u));
    }
    train::VocoderTrainOptions vopt;
    vopt.batch_size = 1;
    vopt.max_steps = 5;
    vopt.crop_samples = 1200;
    train::VocoderTrainer vtrainer(voc, vdata, vopt);
    while (vtrainer.step() < 5) vtrainer.train_step();
    const std::string voc_ckpt = (dir / "vocoder.ckpt").string();
    vtrainer.save_checkpoint(voc_ckpt);

    // config file matching the desk models
    const std::string cfg_path = (dir / "desk.ini").string();
    {
        std::ofstream os(cfg_path);
        os << "[predictor]\nembedding_dim = 32\nencoder_conv_filters = 32\n"
              "encoder_lstm_units = 32\nattention_dim = 32\nlocation_filters = 8\n"
              "location_kernel = 31\nprenet_units = 64\ndecoder_lstm_units = 128\n"
              "postnet_filters = 32\nmax_decoder_steps = 40\n"
              "[vocoder]\ntotal_layers = 12\ndilation_cycle_size = 6\n"
              "residual_channels = 8\nskip_channels = 8\n";
    }

    pipeline::SynthesizeOptions sopt;
    sopt.config_path = cfg_path;
    sopt.text = "bead cafe";
    sopt.predictor_ckpt = pred_ckpt;
    sopt.vocoder_ckpt = voc_ckpt;
    sopt.seed = 77;
    sopt.out_wav = (dir / "a.wav").string();
    std::ostringstream so1, se1;
    const int code1 = pipeline::cmd_synthesize(sopt, so1, se1);
    sopt.out_wav = (dir / "b.wav").string();
    std::ostringstream so2, se2;
    const int code2 = pipeline::cmd_synthesize(sopt, so2, se2);
    c.require("synthesize runs", code1 == 0 && code2 == 0);
    c.require("same seed gives byte-identical WAVs",
              file_bytes((dir / "a.wav").string()) == file_bytes((dir / "b.wav").string()) &&
                  !file_bytes((dir / "a.wav").string()).empty());

    sopt.out_wav = (dir / "c.wav").string();
    sopt.seed = 78;
    std::ostringstream so3, se3;
    pipeline::cmd_synthesize(sopt, so3, se3);
    c.require("different seeds give different WAVs",
              file_bytes((dir / "a.wav").string()) != file_bytes((dir / "c.wav").string()));

    // 50-step resume equals the uninterrupted 50-step run bit for bit
    auto run_params = [&](bool split) {
        predictor::PredictorModel<float> model(pcfg, 31);
        train::PredictorTrainOptions opt;
        opt.batch_size = 2;
        opt.max_steps = 50;
        opt.checkpoint_every = 25;
        opt.seed = 33;
        opt.out_dir = (dir / (split ? "resume_b" : "resume_a")).string();
        train::PredictorTrainer trainer(model, assets.dataset, opt);
        if (!split) {
            trainer.run();
        } else {
            while (trainer.step() < 25) trainer.train_step();
            trainer.save_checkpoint(opt.out_dir + "/predictor_00000025.ckpt");
            predictor::PredictorModel<float> fresh(pcfg, 999);
            train::PredictorTrainer resumed(fresh, assets.dataset, opt);
            resumed.load_checkpoint(opt.out_dir + "/predictor_00000025.ckpt");
            resumed.run();
            std::vector<float> out;
            for (auto& p : fresh.params().all())
                out.insert(out.end(), p.tensor.value().begin(), p.tensor.value().end());
            return out;
        }
        std::vector<float> out;
        for (auto& p : model.params().all())
            out.insert(out.end(), p.tensor.value().begin(), p.tensor.value().end());
        return out;
    };
    c.require("checkpoint resume reproduces 50 training steps bit-identically",
              run_params(false) == run_params(true));
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

    OverfitResult artifacts;
    std::vector<std::pair<std::string, std::function<void(Criterion&)>>> criteria = {
        {"Table 4 receptive-field geometry", criterion_table4},
        {"gradient integrity (kernels, predictor, vocoder)", criterion_gradients},
        {"discretized MoL normalization", criterion_mol_normalization},
        {"causality", criterion_causality},
        {"DSP round trip and Griffin-Lim convergence", criterion_dsp},
        {"toy overfit: spectrogram predictor",
         [&](Criterion& c) { criterion_predictor_overfit(c, artifacts); }},
        {"toy overfit: vocoder", criterion_vocoder_overfit},
        {"GTA frame alignment", [&](Criterion& c) { criterion_gta(c, artifacts); }},
        {"ablation toggles", criterion_ablations},
        {"determinism and persistence", criterion_determinism},
    };

    bool all_ok = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (only != 0 && only != id) continue;
        Criterion c(criteria[i].first);
        const auto t0 = std::chrono::steady_clock::now();
        std::string error;
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = error.empty() && c.passed();
        all_ok = all_ok && ok;
        std::printf("[%s] %d. %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, c.name().c_str(), secs);
        if (!error.empty()) std::printf("       exception: %s\n", error.c_str());
        for (const auto& chk : c.checks())
            if (!chk.ok || only != 0) std::printf("       %s %s\n", chk.ok ? "ok:" : "FAILED:",
                                                  chk.label.c_str());
    }
    return all_ok ? 0 : 1;
}
