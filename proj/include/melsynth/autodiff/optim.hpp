#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsynth/autodiff/params.hpp"
#include "melsynth/autodiff/tensor.hpp"

namespace melsynth::autodiff {

// Piecewise learning rate: constant until decay_start, then per-step geometric
// decay reaching lr_final at decay_end, clamped there afterwards.
struct LrSchedule {
    double lr_init = 1e-3;
    double lr_final = 1e-5;
    std::int64_t decay_start = 50000;
    std::int64_t decay_end = 150000;

    void validate() const {
        if (lr_init <= 0 || lr_final <= 0)
            throw std::invalid_argument("lr schedule: rates must be positive");
        if (lr_final > lr_init)
            throw std::invalid_argument("lr schedule: lr_final exceeds lr_init");
        if (decay_end <= decay_start)
            throw std::invalid_argument("lr schedule: decay_end must follow decay_start");
    }

    double value(std::int64_t step) const {
        if (step < 0) throw std::invalid_argument("lr schedule: negative step");
        if (step <= decay_start || lr_final == lr_init) return lr_init;
        if (step >= decay_end) return lr_final;
        const double r = std::pow(lr_final / lr_init,
                                  1.0 / static_cast<double>(decay_end - decay_start));
        return lr_init * std::pow(r, static_cast<double>(step - decay_start));
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double l2_weight = 0.0;  // applied only to params flagged decay
};

template <class T>
class Adam {
public:
    Adam() = default;
    Adam(ParamStore<T>& store, AdamConfig cfg) : cfg_(cfg) { attach(store); }

    void attach(ParamStore<T>& store) {
        m_.clear();
        v_.clear();
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            m_.emplace_back(p.tensor.size(), T(0));
            v_.emplace_back(p.tensor.size(), T(0));
        }
        t_ = 0;
    }

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    std::vector<std::vector<T>>& moments_m() { return m_; }
    std::vector<std::vector<T>>& moments_v() { return v_; }
    const AdamConfig& config() const { return cfg_; }
    void set_config(AdamConfig cfg) { cfg_ = cfg; }

    void step(ParamStore<T>& store, double lr) {
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T corr1 = T(1) - std::pow(b1, static_cast<T>(t_));
        const T corr2 = T(1) - std::pow(b2, static_cast<T>(t_));
        std::size_t slot = 0;
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            auto& grad = p.tensor.grad();
            if (grad.size() != p.tensor.size())
                throw std::runtime_error("adam: missing gradient for parameter " + p.name);
            auto& m = m_[slot];
            auto& v = v_[slot];
            ++slot;
            for (std::size_t i = 0; i < grad.size(); ++i) {
                T g = grad[i];
                if (!std::isfinite(g))
                    throw std::runtime_error("non-finite gradient in parameter " + p.name);
                if (p.decay && cfg_.l2_weight != 0.0)
                    g += static_cast<T>(cfg_.l2_weight) * p.tensor[i];
                m[i] = b1 * m[i] + (T(1) - b1) * g;
                v[i] = b2 * v[i] + (T(1) - b2) * g * g;
                const T m_hat = m[i] / corr1;
                const T v_hat = v[i] / corr2;
                p.tensor[i] -= static_cast<T>(lr) * m_hat /
                               (std::sqrt(v_hat) + static_cast<T>(cfg_.eps));
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

// Returns the pre-clip global norm.
template <class T>
double clip_global_norm(ParamStore<T>& store, double max_norm) {
    double sq = 0.0;
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            for (T& g : p.tensor.grad()) g *= s;
        }
    }
    return norm;
}

// Exponentially weighted shadow of every trainable parameter.
template <class T>
class EmaState {
public:
    EmaState() = default;
    EmaState(const ParamStore<T>& store, double decay) : decay_(decay) {
        for (const auto& p : store.all())
            if (p.trainable) shadow_.push_back(p.tensor.value());
    }

    double decay() const { return decay_; }
    std::vector<std::vector<T>>& shadow() { return shadow_; }

    void update(const ParamStore<T>& store) {
        const T d = static_cast<T>(decay_);
        std::size_t slot = 0;
        for (const auto& p : store.all()) {
            if (!p.trainable) continue;
            auto& s = shadow_[slot++];
            for (std::size_t i = 0; i < s.size(); ++i)
                s[i] = d * s[i] + (T(1) - d) * p.tensor[i];
        }
    }

    void swap_in(ParamStore<T>& store) const {
        std::size_t slot = 0;
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            const auto& s = shadow_[slot++];
            std::copy(s.begin(), s.end(), p.tensor.value().begin());
        }
    }

private:
    double decay_ = 0.9999;
    std::vector<std::vector<T>> shadow_;
};

}  // namespace melsynth::autodiff
