#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>

#include "melsynth/autodiff/ops.hpp"
#include "melsynth/autodiff/tensor.hpp"
#include "melsynth/rng.hpp"

namespace melsynth::autodiff {

template <class T>
struct LstmWeights {
    Tensor<T> wx;  // (in, 4H), gate order i,f,g,o
    Tensor<T> wh;  // (H, 4H)
    Tensor<T> b;   // (4H)
};

template <class T>
struct LstmState {
    Tensor<T> h;
    Tensor<T> c;
};

// Single fused LSTM cell step with zoneout. In training mode each hidden and
// cell unit keeps its previous value with probability zoneout_p (independent
// masks); in inference mode the expectation form blends old and new states.
// The new hidden uses tanh of the post-zoneout cell, as in the zoneout paper.
template <class T>
LstmState<T> lstm_cell(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                       const LstmWeights<T>& w, double zoneout_p, bool training, Rng& rng) {
    if (x.rank() != 1 || h.rank() != 1 || c.rank() != 1)
        throw std::invalid_argument("lstm_cell: x, h, c must be rank-1");
    const std::size_t in = x.dim(0), hidden = h.dim(0);
    if (c.dim(0) != hidden || w.wx.rank() != 2 || w.wx.rows() != in ||
        w.wx.cols() != 4 * hidden || w.wh.rows() != hidden || w.wh.cols() != 4 * hidden ||
        w.b.size() != 4 * hidden)
        throw std::invalid_argument("lstm_cell: weight shapes " + shape_str(w.wx.shape()) + "/" +
                                    shape_str(w.wh.shape()) + " do not match x " +
                                    shape_str(x.shape()) + ", h " + shape_str(h.shape()));
    if (zoneout_p < 0.0 || zoneout_p > 1.0)
        throw std::invalid_argument("lstm_cell: zoneout_p must be in [0,1]");

    struct Saved {
        std::vector<T> i, f, g, o, tanh_c, mask_h, mask_c;
    };
    auto sv = std::make_shared<Saved>();
    sv->i.resize(hidden);
    sv->f.resize(hidden);
    sv->g.resize(hidden);
    sv->o.resize(hidden);
    sv->tanh_c.resize(hidden);
    sv->mask_h.resize(hidden);
    sv->mask_c.resize(hidden);

    // masks are drawn before any value-dependent work so the stream is stable
    if (training && zoneout_p > 0.0) {
        for (std::size_t u = 0; u < hidden; ++u) sv->mask_h[u] = rng.bernoulli(zoneout_p) ? T(1) : T(0);
        for (std::size_t u = 0; u < hidden; ++u) sv->mask_c[u] = rng.bernoulli(zoneout_p) ? T(1) : T(0);
    } else {
        const T p = training ? T(0) : static_cast<T>(zoneout_p);
        std::fill(sv->mask_h.begin(), sv->mask_h.end(), p);
        std::fill(sv->mask_c.begin(), sv->mask_c.end(), p);
    }

    std::vector<T> z(4 * hidden);
    std::copy(w.b.value().begin(), w.b.value().end(), z.begin());
    for (std::size_t j = 0; j < in; ++j) {
        const T xv = x[j];
        if (xv == T(0)) continue;
        const T* wrow = w.wx.data() + j * 4 * hidden;
        for (std::size_t u = 0; u < 4 * hidden; ++u) z[u] += xv * wrow[u];
    }
    for (std::size_t j = 0; j < hidden; ++j) {
        const T hv = h[j];
        if (hv == T(0)) continue;
        const T* wrow = w.wh.data() + j * 4 * hidden;
        for (std::size_t u = 0; u < 4 * hidden; ++u) z[u] += hv * wrow[u];
    }

    Tensor<T> h_out = make_output(tape, Shape{hidden});
    Tensor<T> c_out = make_output(tape, Shape{hidden});
    for (std::size_t u = 0; u < hidden; ++u) {
        sv->i[u] = sigmoid_scalar(z[u]);
        sv->f[u] = sigmoid_scalar(z[hidden + u]);
        sv->g[u] = std::tanh(z[2 * hidden + u]);
        sv->o[u] = sigmoid_scalar(z[3 * hidden + u]);
        const T c_new = sv->f[u] * c[u] + sv->i[u] * sv->g[u];
        c_out[u] = sv->mask_c[u] * c[u] + (T(1) - sv->mask_c[u]) * c_new;
        sv->tanh_c[u] = std::tanh(c_out[u]);
        const T h_new = sv->o[u] * sv->tanh_c[u];
        h_out[u] = sv->mask_h[u] * h[u] + (T(1) - sv->mask_h[u]) * h_new;
    }

    if (tape) {
        LstmWeights<T> wcopy = w;
        tape->record([x, h, c, wcopy, h_out, c_out, sv, in, hidden] {
            std::vector<T> dz(4 * hidden);
            for (std::size_t u = 0; u < hidden; ++u) {
                const T dh_out = h_out.grad()[u];
                const T dh_new = dh_out * (T(1) - sv->mask_h[u]);
                if (h.requires_grad()) h.accumulate_grad(u, dh_out * sv->mask_h[u]);
                const T d_o = dh_new * sv->tanh_c[u];
                const T dc_tot = c_out.grad()[u] +
                                 dh_new * sv->o[u] * (T(1) - sv->tanh_c[u] * sv->tanh_c[u]);
                const T dc_new = dc_tot * (T(1) - sv->mask_c[u]);
                if (c.requires_grad())
                    c.accumulate_grad(u, dc_tot * sv->mask_c[u] + dc_new * sv->f[u]);
                const T d_f = dc_new * c[u];
                const T d_i = dc_new * sv->g[u];
                const T d_g = dc_new * sv->i[u];
                dz[u] = d_i * sv->i[u] * (T(1) - sv->i[u]);
                dz[hidden + u] = d_f * sv->f[u] * (T(1) - sv->f[u]);
                dz[2 * hidden + u] = d_g * (T(1) - sv->g[u] * sv->g[u]);
                dz[3 * hidden + u] = d_o * sv->o[u] * (T(1) - sv->o[u]);
            }
            if (x.requires_grad())
                for (std::size_t j = 0; j < in; ++j) {
                    const T* wrow = wcopy.wx.data() + j * 4 * hidden;
                    T acc = T(0);
                    for (std::size_t u = 0; u < 4 * hidden; ++u) acc += wrow[u] * dz[u];
                    x.accumulate_grad(j, acc);
                }
            if (wcopy.wx.requires_grad())
                for (std::size_t j = 0; j < in; ++j) {
                    const T xv = x[j];
                    if (xv == T(0)) continue;
                    T* gw = wcopy.wx.grad().data() + j * 4 * hidden;
                    for (std::size_t u = 0; u < 4 * hidden; ++u) gw[u] += xv * dz[u];
                }
            if (h.requires_grad())
                for (std::size_t j = 0; j < hidden; ++j) {
                    const T* wrow = wcopy.wh.data() + j * 4 * hidden;
                    T acc = T(0);
                    for (std::size_t u = 0; u < 4 * hidden; ++u) acc += wrow[u] * dz[u];
                    h.accumulate_grad(j, acc);
                }
            if (wcopy.wh.requires_grad())
                for (std::size_t j = 0; j < hidden; ++j) {
                    const T hv = h[j];
                    if (hv == T(0)) continue;
                    T* gw = wcopy.wh.grad().data() + j * 4 * hidden;
                    for (std::size_t u = 0; u < 4 * hidden; ++u) gw[u] += hv * dz[u];
                }
            if (wcopy.b.requires_grad())
                for (std::size_t u = 0; u < 4 * hidden; ++u) wcopy.b.accumulate_grad(u, dz[u]);
        });
    }
    return {h_out, c_out};
}

}  // namespace melsynth::autodiff
