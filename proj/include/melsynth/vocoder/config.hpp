#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace melsynth::vocoder {

enum class UpsampleActivation { kNone, kLeakyRelu };

struct VocoderConfig {
    int total_layers = 30;
    int dilation_cycle_size = 10;
    int kernel_size = 3;  // fixed; receptive fields below assume two past taps
    int residual_channels = 64;
    int skip_channels = 128;
    int conditioning_channels = 80;  // = mel channels
    int upsample_factor_1 = 15;
    int upsample_factor_2 = 20;  // product must equal the frame hop in samples
    int upsample_kernel_scale = 2;  // kernel width = scale * stride per layer
    UpsampleActivation upsample_activation = UpsampleActivation::kLeakyRelu;
    double upsample_leaky_slope = 0.1;
    int mol_components = 10;
    int sample_rate_hz = 24000;
    double target_scale = 127.5;
    double log_scale_floor = -7.0;

    int hop() const { return upsample_factor_1 * upsample_factor_2; }

    void validate() const {
        if (total_layers <= 0 || dilation_cycle_size <= 0)
            throw std::invalid_argument("vocoder config: layer counts must be positive");
        if (kernel_size != 3)
            throw std::invalid_argument("vocoder config: kernel_size must be 3");
        if (residual_channels <= 0 || skip_channels <= 0 || conditioning_channels <= 0)
            throw std::invalid_argument("vocoder config: channel widths must be positive");
        if (upsample_factor_1 <= 0 || upsample_factor_2 <= 0)
            throw std::invalid_argument("vocoder config: upsample factors must be positive");
        if (upsample_kernel_scale <= 0)
            throw std::invalid_argument("vocoder config: upsample_kernel_scale must be positive");
        if (mol_components < 1)
            throw std::invalid_argument("vocoder config: mol_components must be >= 1");
        if (target_scale <= 0)
            throw std::invalid_argument("vocoder config: target_scale must be positive");
        if (dilation_cycle_size > 30)
            throw std::invalid_argument("vocoder config: dilation cycle too large");
    }

    void validate_hop(int hop_samples) const {
        if (hop() != hop_samples)
            throw std::invalid_argument(
                "vocoder config: upsample factor product " + std::to_string(hop()) +
                " does not equal frame hop " + std::to_string(hop_samples));
    }

    static VocoderConfig desk() {
        VocoderConfig c;
        c.total_layers = 12;
        c.dilation_cycle_size = 6;
        c.residual_channels = 16;
        c.skip_channels = 32;
        return c;
    }
};

inline std::size_t dilation_of(std::size_t k, std::size_t cycle_size) {
    if (cycle_size == 0) throw std::invalid_argument("dilation_of: cycle_size must be >= 1");
    return static_cast<std::size_t>(1) << (k % cycle_size);
}

struct ReceptiveField {
    long long samples = 0;
    double ms = 0.0;
};

inline ReceptiveField receptive_field(int layers, int cycle_size, int kernel_size,
                                      int sample_rate_hz = 24000) {
    if (layers <= 0 || cycle_size <= 0 || kernel_size <= 0 || sample_rate_hz <= 0)
        throw std::invalid_argument("receptive_field: arguments must be positive");
    long long sum = 0;
    for (int k = 0; k < layers; ++k)
        sum += static_cast<long long>(dilation_of(static_cast<std::size_t>(k),
                                                  static_cast<std::size_t>(cycle_size)));
    ReceptiveField rf;
    rf.samples = 1 + static_cast<long long>(kernel_size - 1) * sum;
    rf.ms = static_cast<double>(rf.samples) / sample_rate_hz * 1000.0;
    return rf;
}

}  // namespace melsynth::vocoder
