#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "melsynth/vocoder/config.hpp"
#include "melsynth/vocoder/generator.hpp"
#include "melsynth/vocoder/model.hpp"
#include "melsynth/vocoder/mol.hpp"

using namespace melsynth;
using namespace melsynth::vocoder;
using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

namespace {

VocoderConfig tiny_config() {
    VocoderConfig c;
    c.total_layers = 2;
    c.dilation_cycle_size = 2;
    c.residual_channels = 4;
    c.skip_channels = 5;
    c.conditioning_channels = 3;
    c.upsample_factor_1 = 3;
    c.upsample_factor_2 = 4;  // hop 12
    c.mol_components = 2;
    c.upsample_activation = UpsampleActivation::kNone;
    return c;
}

template <class T>
Tensor<T> random_mel(std::size_t frames, std::size_t channels, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<T> t(Shape{frames, channels});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal());
    return t;
}

std::vector<float> random_audio(std::size_t n, std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::vector<float> a(n);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1.0, 1.0) * scale);
    return a;
}

double logistic_cdf(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// independent oracle: direct CDF difference with open tails
double bin_probability_oracle(double x, double mu, double s, double half, double scale) {
    if (x <= -scale + half) return logistic_cdf((x + half - mu) / s);
    if (x >= scale - half) return 1.0 - logistic_cdf((x - half - mu) / s);
    return logistic_cdf((x + half - mu) / s) - logistic_cdf((x - half - mu) / s);
}

}  // namespace

TEST_CASE("dilation schedule follows 2^(k mod cycle)") {
    CHECK(dilation_of(0, 10) == 1);
    CHECK(dilation_of(9, 10) == 512);
    CHECK(dilation_of(10, 10) == 1);
    CHECK(dilation_of(29, 10) == 512);
    for (std::size_t k = 0; k < 40; ++k) CHECK(dilation_of(k, 1) == 1);
    CHECK(dilation_of(13, 6) == 2);  // 13 mod 6 = 1
}

TEST_CASE("receptive field reproduces the reference geometries exactly") {
    // ms values round to one decimal for display
    auto rf = receptive_field(30, 10, 3);
    CHECK(rf.samples == 6139);
    CHECK(std::abs(rf.ms - 255.8) < 0.05);
    rf = receptive_field(24, 6, 3);
    CHECK(rf.samples == 505);
    CHECK(std::abs(rf.ms - 21.0) < 0.05);
    rf = receptive_field(12, 6, 3);
    CHECK(rf.samples == 253);
    CHECK(std::abs(rf.ms - 10.5) < 0.05);
    rf = receptive_field(30, 1, 3);
    CHECK(rf.samples == 61);
    CHECK(std::abs(rf.ms - 2.5) < 0.05);
    CHECK(receptive_field(1, 1, 3).samples == 3);
    CHECK(receptive_field(1, 1, 1).samples == 1);
}

TEST_CASE("upsampling yields exactly frames x hop rows for either factor order") {
    for (auto factors : {std::pair{3, 4}, std::pair{4, 3}}) {
        VocoderConfig cfg = tiny_config();
        cfg.upsample_factor_1 = factors.first;
        cfg.upsample_factor_2 = factors.second;
        VocoderModel<float> model(cfg, 1);
        auto mel = random_mel<float>(10, cfg.conditioning_channels, 2);
        auto cond = model.upsample(nullptr, mel);
        CHECK(cond.rows() == 120);
        CHECK(cond.cols() == static_cast<std::size_t>(cfg.conditioning_channels));
    }
}

TEST_CASE("identity kernels with kernel = stride reproduce nearest-neighbor repetition") {
    VocoderConfig cfg = tiny_config();
    cfg.conditioning_channels = 2;
    cfg.upsample_kernel_scale = 1;  // kernel width == stride
    cfg.upsample_activation = UpsampleActivation::kNone;
    VocoderModel<float> model(cfg, 3);
    // identity per tap: w[k][ci][co] = 1 if ci == co
    for (auto& p : model.params().all()) {
        if (p.name.rfind("upsample", 0) != 0) continue;
        auto& t = p.tensor;
        std::fill(t.value().begin(), t.value().end(), 0.0f);
        if (p.name.find(".w") != std::string::npos) {
            const std::size_t k_len = t.dim(0), cin = t.dim(1), cout = t.dim(2);
            for (std::size_t k = 0; k < k_len; ++k)
                for (std::size_t c = 0; c < std::min(cin, cout); ++c)
                    t[(k * cin + c) * cout + c] = 1.0f;
        }
    }
    auto mel = random_mel<float>(5, 2, 4);
    auto cond = model.upsample(nullptr, mel);
    REQUIRE(cond.rows() == 60);
    for (std::size_t r = 0; r < cond.rows(); ++r)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(cond.at(r, c) == doctest::Approx(mel.at(r / 12, c)));
}

TEST_CASE("upsample rejects a factor product that misses the hop") {
    VocoderConfig cfg = tiny_config();
    CHECK_THROWS_AS(cfg.validate_hop(300), std::invalid_argument);
    cfg.upsample_factor_1 = 15;
    cfg.upsample_factor_2 = 20;
    cfg.validate_hop(300);
}

TEST_CASE("forward emits 3K channels and respects causality exactly") {
    VocoderConfig cfg = tiny_config();
    VocoderModel<float> model(cfg, 5);
    const std::size_t n = 40;
    auto cond = random_mel<float>(n, cfg.conditioning_channels, 6);
    auto audio = random_audio(n, 7, cfg.target_scale);

    auto params = model.forward(nullptr, audio, cond);
    CHECK(params.rows() == n);
    CHECK(params.cols() == 6);  // 3K with K=2

    VocoderConfig paper = tiny_config();
    paper.mol_components = 10;
    VocoderModel<float> paper_model(paper, 8);
    auto p10 = paper_model.forward(nullptr, random_audio(10, 9, paper.target_scale),
                                   random_mel<float>(10, paper.conditioning_channels, 10));
    CHECK(p10.cols() == 30);

    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull, 9ull, 10ull}) {
        Rng rng(seed);
        auto perturbed = audio;
        const std::size_t t0 = 5 + rng.index(n - 10);  // keep room for a later effect
        perturbed[t0] += 3.0f;
        auto params2 = model.forward(nullptr, perturbed, cond);
        // the shifted input means sample t0 first affects outputs at t0 + 1
        for (std::size_t t = 0; t <= t0; ++t)
            for (std::size_t c = 0; c < params.cols(); ++c)
                CHECK(params.at(t, c) == params2.at(t, c));
        bool changed = false;
        for (std::size_t t = t0 + 1; t < n && !changed; ++t)
            for (std::size_t c = 0; c < params.cols(); ++c)
                if (params.at(t, c) != params2.at(t, c)) changed = true;
        CHECK(changed);
    }
}

TEST_CASE("desk vocoder gradients match finite differences") {
    VocoderConfig cfg = tiny_config();
    const std::size_t frames = 2;
    int n = 0;
    for (std::uint64_t seed : {41ull, 42ull, 43ull}) {
        VocoderModel<double> model(cfg, seed);
        Rng jitter(seed + 100);
        std::vector<Tensor<double>> leaves;
        for (auto& p : model.params().all()) {
            for (std::size_t i = 0; i < p.tensor.size(); ++i)
                p.tensor[i] += jitter.uniform(-0.05, 0.05);
            leaves.push_back(p.tensor);
        }
        auto mel = random_mel<double>(frames, cfg.conditioning_channels, seed + 1);
        std::vector<double> audio(frames * cfg.hop());
        Rng arng(seed + 2);
        for (auto& v : audio) v = arng.uniform(-1.0, 1.0) * cfg.target_scale;

        auto forward = [&](Tape<double>* tape) {
            auto cond = model.upsample(tape, mel);
            auto params = model.forward(tape, audio, cond);
            auto nll = model.nll(tape, params, audio);
            return autodiff::mean(tape, nll);
        };
        Rng probe(500 + n++);
        auto rep = gradcheck::max_rel_grad_error(leaves, forward, probe, 4);
        INFO("worst: ", rep.worst);
        CHECK(rep.max_rel_err < 1e-3);
    }
}

TEST_CASE("single-component NLL at the mean with half-width = s") {
    // likelihood 2*sigma(1) - 1, NLL -log of that
    const double scale = 127.5;
    const double half = mol_bin_half_width(scale);
    Tensor<double> params(Shape{1, 3}, {0.0, 10.0, std::log(half)});
    auto nll = mol_nll<double>(nullptr, params, {10.0}, 1, scale, -30.0);
    const double expect = -std::log(2.0 * logistic_cdf(1.0) - 1.0);
    CHECK(nll[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(nll[0] == doctest::Approx(0.771937).epsilon(1e-4));
}

TEST_CASE("two equal components give the single-component NLL") {
    const double scale = 127.5;
    const double ls = std::log(0.8);
    Tensor<double> one(Shape{1, 3}, {0.3, 5.0, ls});
    Tensor<double> two(Shape{1, 6}, {0.7, 0.7, 5.0, 5.0, ls, ls});
    auto a = mol_nll<double>(nullptr, one, {4.8}, 1, scale, -30.0);
    auto b = mol_nll<double>(nullptr, two, {4.8}, 2, scale, -30.0);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
}

TEST_CASE("discretized mixture sums to one over a 256-bin partition") {
    const double scale = 127.5;
    const int levels = 256;
    const double half = mol_bin_half_width(scale, levels);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7 + 1);
        const int k = 1 + static_cast<int>(rng.index(4));
        std::vector<double> p(3 * k);
        for (int i = 0; i < k; ++i) {
            p[i] = rng.uniform(-2.0, 2.0);
            p[k + i] = rng.uniform(-140.0, 140.0);  // means may sit outside the range
            p[2 * k + i] = rng.uniform(-4.0, 4.0);
        }
        double total = 0.0;
        for (int bin = 0; bin < levels; ++bin) {
            const double x = -scale + 2.0 * half * bin;
            Tensor<double> params(Shape{1, static_cast<std::size_t>(3 * k)}, p);
            auto nll = mol_nll<double>(nullptr, params, {x}, k, scale, -30.0, levels);
            total += std::exp(-nll[0]);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("16-bit likelihoods agree with direct CDF differences") {
    const double scale = 127.5;
    const int levels = 65536;
    const double half = mol_bin_half_width(scale, levels);
    CHECK(half == doctest::Approx(scale / 32767.5 / 2.0));
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

        // oracle: softmax weights + direct CDF differences in double
        double wmax = p[0];
        for (int i = 1; i < k; ++i) wmax = std::max(wmax, p[i]);
        double wsum = 0.0;
        for (int i = 0; i < k; ++i) wsum += std::exp(p[i] - wmax);
        double lik = 0.0;
        for (int i = 0; i < k; ++i)
            lik += std::exp(p[i] - wmax) / wsum *
                   bin_probability_oracle(x, p[k + i], std::exp(p[2 * k + i]), half, scale);

        Tensor<double> params(Shape{1, static_cast<std::size_t>(3 * k)}, p);
        auto nll = mol_nll<double>(nullptr, params, {x}, k, scale, -30.0, levels);
        CHECK(std::abs(std::exp(-nll[0]) - lik) < 1e-9);
    }
}

TEST_CASE("mol_nll gradients match finite differences on every branch") {
    const double scale = 127.5;
    Rng rng(123);
    // interior, left tail, right tail, far tail (pdf fallback)
    const double targets[] = {3.7, -scale, scale, 90.0};
    for (double x : targets) {
        Tensor<double> params(Shape{1, 9});
        for (std::size_t i = 0; i < 3; ++i) {
            params[i] = rng.uniform(-1.0, 1.0);
            params[3 + i] = x == 90.0 ? -60.0 : rng.uniform(-20.0, 20.0);  // far from target
            params[6 + i] = rng.uniform(-2.0, 1.0);
        }
        std::vector<Tensor<double>> leaves{params};
        auto forward = [&](Tape<double>* t) {
            return autodiff::mean(t, mol_nll(t, params, {x}, 3, scale, -7.0));
        };
        Rng probe(7);
        auto rep = gradcheck::max_rel_grad_error(leaves, forward, probe, 9);
        INFO("target ", x, " worst: ", rep.worst);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("mol_nll rejects non-finite parameters") {
    Tensor<double> params(Shape{1, 3}, {0.0, std::nan(""), 0.0});
    CHECK_THROWS_AS(mol_nll<double>(nullptr, params, {0.0}, 1, 127.5, -7.0), std::runtime_error);
}

TEST_CASE("mol_sample returns the mean as scale vanishes and is seed-deterministic") {
    const double mu = 42.25;
    std::vector<double> p{0.0, mu, -30.0};
    Rng r1(5), r2(5), r3(6);
    const double a = mol_sample(p.data(), 1, 127.5, r1);
    CHECK(a == doctest::Approx(mu).epsilon(1e-9));
    const double b = mol_sample(p.data(), 1, 127.5, r2);
    CHECK(a == b);
    std::vector<double> wide{0.0, 0.0, 2.0};
    Rng r4(7), r5(8);
    CHECK(mol_sample(wide.data(), 1, 127.5, r4) != mol_sample(wide.data(), 1, 127.5, r5));
}

TEST_CASE("mol_sample empirical mean matches the analytic mixture mean") {
    const int k = 3;
    std::vector<double> p{0.2, -0.4, 1.1, -20.0, 5.0, 40.0, 1.0, 0.5, 1.5};
    double wsum = 0.0, mean = 0.0, second = 0.0;
    std::vector<double> w(k);
    for (int i = 0; i < k; ++i) wsum += std::exp(p[i]);
    for (int i = 0; i < k; ++i) {
        w[i] = std::exp(p[i]) / wsum;
        const double s = std::exp(p[2 * k + i]);
        mean += w[i] * p[k + i];
        second += w[i] * (p[k + i] * p[k + i] + s * s * M_PI * M_PI / 3.0);
    }
    const double variance = second - mean * mean;

    Rng rng(2024);
    const int n = 100000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += mol_sample(p.data(), k, 127.5, rng);
    acc /= n;
    const double se = std::sqrt(variance / n);
    CHECK(std::abs(acc - mean) < 3.0 * se);
}

TEST_CASE("generation emits frames x hop samples in [-1, 1], deterministically per seed") {
    VocoderConfig cfg = tiny_config();
    VocoderModel<float> model(cfg, 11);
    auto mel = random_mel<float>(7, cfg.conditioning_channels, 12);
    auto a = generate(model, mel, 77);
    CHECK(a.size() == 7 * 12);
    for (float v : a) {
        CHECK(v <= 1.0f);
        CHECK(v >= -1.0f);
    }
    auto b = generate(model, mel, 77);
    auto c = generate(model, mel, 78);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("incremental forward agrees with the parallel forward within 1e-5") {
    for (std::uint64_t seed : {21ull, 22ull}) {
        VocoderConfig cfg = tiny_config();
        cfg.total_layers = 4;
        cfg.dilation_cycle_size = 3;
        VocoderModel<float> model(cfg, seed);
        const std::size_t n = 60;
        auto cond = random_mel<float>(n, cfg.conditioning_channels, seed + 1);
        auto audio = random_audio(n, seed + 2, cfg.target_scale);

        auto parallel = model.forward(nullptr, audio, cond);
        auto incremental = incremental_forward(model, audio, cond);
        REQUIRE(parallel.shape() == incremental.shape());
        float max_diff = 0.0f;
        for (std::size_t i = 0; i < parallel.size(); ++i)
            max_diff = std::max(max_diff, std::abs(parallel[i] - incremental[i]));
        CHECK(max_diff < 1e-5f);
    }
}

TEST_CASE("vocoder config invariants") {
    VocoderConfig cfg = tiny_config();
    cfg.kernel_size = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.mol_components = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.upsample_factor_1 = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
