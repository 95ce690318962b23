#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "melsynth/autodiff/tensor.hpp"
#include "melsynth/rng.hpp"

namespace melsynth::autodiff {

// One named model tensor. `decay` marks weights subject to L2; biases, norm
// parameters and embedding tables stay out. `trainable` is false for state
// carried in checkpoints but not optimized (batchnorm running stats).
template <class T>
struct Param {
    std::string name;
    Tensor<T> tensor;
    bool decay = false;
    bool trainable = true;
};

template <class T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t, bool decay, bool trainable = true) {
        for (const auto& p : params_)
            if (p.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
        if (trainable) t.set_requires_grad(true);
        params_.push_back(Param<T>{name, std::move(t), decay, trainable});
        return params_.back().tensor;
    }

    std::vector<Param<T>>& all() { return params_; }
    const std::vector<Param<T>>& all() const { return params_; }

    Param<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_)
            if (p.trainable) p.tensor.zero_grad();
    }

    std::size_t count_values() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

private:
    std::vector<Param<T>> params_;
};

// ------------------------------------------------------------ initializers

template <class T>
void init_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
}

template <class T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
}

// Glorot uniform given explicit fan sizes.
template <class T>
void init_glorot(Tensor<T>& t, Rng& rng, std::size_t fan_in, std::size_t fan_out,
                 double gain = 1.0) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    init_uniform(t, rng, -bound, bound);
}

}  // namespace melsynth::autodiff
