#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "melsynth/autodiff/ops.hpp"
#include "melsynth/autodiff/tensor.hpp"
#include "melsynth/rng.hpp"

// Discretized mixture-of-logistics output head. Parameter rows are
// [weight_logits K | means K | log_scales K]; everything lives in the scaled
// sample domain (targets multiplied by target_scale).

namespace melsynth::vocoder {

using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

// Half-width of one quantization bin: levels points tile [-scale, scale] with
// spacing 2*scale/(levels-1); the likelihood integrates the logistic CDF over
// +-half a spacing, with open tails at the extreme bins so the partition sums
// to exactly 1.
inline double mol_bin_half_width(double target_scale, int levels = 65536) {
    return target_scale / (levels - 1);
}

// Per-sample negative log-likelihood, differentiable w.r.t. params.
// params: (N, 3K); targets: N scaled samples; returns (N).
template <class T>
Tensor<T> mol_nll(Tape<T>* tape, const Tensor<T>& params, const std::vector<T>& targets, int k_comp,
                  double target_scale, double log_scale_floor, int levels = 65536) {
    if (params.rank() != 2 || params.cols() != static_cast<std::size_t>(3 * k_comp))
        throw std::invalid_argument("mol_nll: params must be (N, 3K)");
    if (params.rows() != targets.size())
        throw std::invalid_argument("mol_nll: " + std::to_string(params.rows()) +
                                    " parameter rows vs " + std::to_string(targets.size()) +
                                    " targets");
    const std::size_t n = params.rows();
    const std::size_t kk = static_cast<std::size_t>(k_comp);
    const T h = static_cast<T>(mol_bin_half_width(target_scale, levels));
    const T scale = static_cast<T>(target_scale);
    const T floor_ls = static_cast<T>(log_scale_floor);

    struct Saved {
        std::vector<std::uint8_t> branch;  // 0 interior, 1 left tail, 2 right tail
        std::vector<T> resp;               // responsibilities, (N,K)
        std::vector<T> wgt;                // softmax weights, (N,K)
        std::vector<T> s_inv;              // 1/s
        std::vector<T> a, b, c;            // CDF arguments; c = 2h/s
        std::vector<std::uint8_t> clamped;
    };
    auto sv = std::make_shared<Saved>();
    sv->branch.resize(n * kk);
    sv->resp.resize(n * kk);
    sv->wgt.resize(n * kk);
    sv->s_inv.resize(n * kk);
    sv->a.resize(n * kk);
    sv->b.resize(n * kk);
    sv->c.resize(n * kk);
    sv->clamped.resize(n * kk);

    Tensor<T> out = autodiff::make_output(tape, Shape{n});
    std::vector<T> lp(kk);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = targets[i];
        if (!std::isfinite(x)) throw std::runtime_error("mol_nll: non-finite target");
        const T* row = params.data() + i * 3 * kk;

        // log softmax of the weight logits
        T lmax = row[0];
        for (std::size_t k = 1; k < kk; ++k) lmax = std::max(lmax, row[k]);
        T lsum = T(0);
        for (std::size_t k = 0; k < kk; ++k) lsum += std::exp(row[k] - lmax);
        const T lse = lmax + std::log(lsum);

        for (std::size_t k = 0; k < kk; ++k) {
            const std::size_t j = i * kk + k;
            const T mu = row[kk + k];
            const T ls_raw = row[2 * kk + k];
            if (!std::isfinite(row[k]) || !std::isfinite(mu) || !std::isfinite(ls_raw))
                throw std::runtime_error("mol_nll: non-finite mixture parameter");
            const T ls = std::max(ls_raw, floor_ls);
            sv->clamped[j] = ls_raw < floor_ls ? 1 : 0;
            const T s_inv = std::exp(-ls);
            sv->s_inv[j] = s_inv;
            const T centered = x - mu;
            const T a = (centered + h) * s_inv;
            const T b = (centered - h) * s_inv;
            sv->a[j] = a;
            sv->b[j] = b;
            sv->c[j] = T(2) * h * s_inv;
            T logp;
            if (x <= -scale + h) {
                sv->branch[j] = 1;
                logp = -autodiff::softplus_scalar(-a);
            } else if (x >= scale - h) {
                sv->branch[j] = 2;
                logp = -autodiff::softplus_scalar(b);
            } else {
                // log(sigma(a) - sigma(b)) = log sigma(a) + log sigma(-b)
                //                           + log(1 - e^(b-a)), cancellation-free
                sv->branch[j] = 0;
                logp = -autodiff::softplus_scalar(-a) - autodiff::softplus_scalar(b) +
                       std::log(-std::expm1(-sv->c[j]));
            }
            const T lw = row[k] - lse;
            sv->wgt[j] = std::exp(lw);
            lp[k] = lw + logp;
        }
        T pmax = lp[0];
        for (std::size_t k = 1; k < kk; ++k) pmax = std::max(pmax, lp[k]);
        T psum = T(0);
        for (std::size_t k = 0; k < kk; ++k) psum += std::exp(lp[k] - pmax);
        const T log_lik = pmax + std::log(psum);
        out[i] = -log_lik;
        for (std::size_t k = 0; k < kk; ++k) sv->resp[i * kk + k] = std::exp(lp[k] - log_lik);
    }

    if (tape && params.requires_grad())
        tape->record([params, out, sv, n, kk] {
            for (std::size_t i = 0; i < n; ++i) {
                const T g = out.grad()[i];
                if (g == T(0)) continue;
                T* grow = params.grad().data() + i * 3 * kk;
                for (std::size_t k = 0; k < kk; ++k) {
                    const std::size_t j = i * kk + k;
                    const T r = sv->resp[j];
                    grow[k] += g * (sv->wgt[j] - r);
                    const T dlogp = -g * r;
                    const T s_inv = sv->s_inv[j];
                    T dmu, dls;
                    switch (sv->branch[j]) {
                        case 1: {  // log sigma(a)
                            const T one_m = T(1) - autodiff::sigmoid_scalar(sv->a[j]);
                            dmu = dlogp * one_m * (-s_inv);
                            dls = dlogp * one_m * (-sv->a[j]);
                            break;
                        }
                        case 2: {  // log(1 - sigma(b))
                            const T sb = autodiff::sigmoid_scalar(sv->b[j]);
                            dmu = dlogp * sb * s_inv;
                            dls = dlogp * sb * sv->b[j];
                            break;
                        }
                        default: {  // interior bin
                            const T sa = autodiff::sigmoid_scalar(sv->a[j]);
                            const T sb = autodiff::sigmoid_scalar(sv->b[j]);
                            const T c = sv->c[j];
                            // d/dc of log(1 - e^(-c)) is 1/(e^c - 1); dc/dls = -c
                            const T c_term = c > T(30) ? T(0) : c / std::expm1(c);
                            dmu = dlogp * (sa + sb - T(1)) * s_inv;
                            dls = dlogp * (-sv->a[j] * (T(1) - sa) + sv->b[j] * sb - c_term);
                            break;
                        }
                    }
                    grow[kk + k] += dmu;
                    if (!sv->clamped[j]) grow[2 * kk + k] += dls;
                }
            }
        });
    return out;
}

// Draw one scaled sample: pick a component by its softmax weight, invert the
// logistic CDF, clamp to the representable range.
template <class T>
T mol_sample(const T* param_row, int k_comp, double target_scale, Rng& rng) {
    const std::size_t kk = static_cast<std::size_t>(k_comp);
    double wmax = param_row[0];
    for (std::size_t k = 1; k < kk; ++k) wmax = std::max<double>(wmax, param_row[k]);
    double wsum = 0.0;
    std::vector<double> w(kk);
    for (std::size_t k = 0; k < kk; ++k) {
        w[k] = std::exp(static_cast<double>(param_row[k]) - wmax);
        wsum += w[k];
    }
    const double u1 = rng.uniform() * wsum;
    std::size_t comp = kk - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < kk; ++k) {
        acc += w[k];
        if (u1 < acc) {
            comp = k;
            break;
        }
    }
    const double mu = param_row[kk + comp];
    const double s = std::exp(static_cast<double>(param_row[2 * kk + comp]));
    const double u2 = rng.uniform_open();
    double x = mu + s * (std::log(u2) - std::log1p(-u2));
    x = std::min(std::max(x, -target_scale), target_scale);
    return static_cast<T>(x);
}

}  // namespace melsynth::vocoder
