#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace melsynth::dsp {

struct DspConfig {
    int sample_rate_hz = 24000;
    double frame_length_ms = 50.0;
    double hop_ms = 12.5;
    int fft_size = 2048;
    int mel_channels = 80;
    double mel_fmin_hz = 125.0;
    double mel_fmax_hz = 7600.0;
    double clip_floor = 0.01;
    int griffin_lim_iters = 60;

    int frame_length() const;  // samples
    int hop_length() const;    // samples
    int fft_bins() const { return fft_size / 2 + 1; }

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

struct Waveform {
    std::vector<double> samples;  // in [-1, 1)
    int sample_rate_hz = 24000;
};

// frames x (fft_size/2 + 1) STFT magnitudes, all >= 0
struct LinearSpectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> data;  // row-major

    double& at(std::size_t f, std::size_t b) { return data[f * bins + b]; }
    double at(std::size_t f, std::size_t b) const { return data[f * bins + b]; }
};

// frames x mel_channels log-compressed mel energies, all >= log(clip_floor)
struct MelSpectrogram {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    double& at(std::size_t f, std::size_t c) { return data[f * channels + c]; }
    double at(std::size_t f, std::size_t c) const { return data[f * channels + c]; }
};

struct ComplexSpectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(std::size_t f, std::size_t b) { return data[f * bins + b]; }
    const std::complex<double>& at(std::size_t f, std::size_t b) const {
        return data[f * bins + b];
    }
};

// Center-padded framing: frame t is centered at sample t*hop (reflection
// padding of frame_length/2 on each side), giving ceil(len/hop) frames, so
// frames * hop covers the signal exactly when len is a hop multiple.
std::size_t frame_count(std::size_t num_samples, const DspConfig& cfg);

ComplexSpectrogram stft_complex(const Waveform& w, const DspConfig& cfg);
LinearSpectrogram stft(const Waveform& w, const DspConfig& cfg);
Waveform istft(const ComplexSpectrogram& spec, const DspConfig& cfg);

// mel_channels x fft_bins triangular filters, HTK mel scale, peak-1 triangles.
struct MelFilterbank {
    std::size_t channels = 0;
    std::size_t bins = 0;
    std::vector<double> weights;          // row-major (channel, bin)
    std::vector<double> center_hz;        // per channel

    double at(std::size_t c, std::size_t b) const { return weights[c * bins + b]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
MelFilterbank mel_filterbank(const DspConfig& cfg);

// log(max(filterbank * |STFT|, clip_floor)), natural log
MelSpectrogram mel_spectrogram(const Waveform& w, const DspConfig& cfg);

// ln(max(magnitude, clip_floor)) per bin; the linear-feature variant.
LinearSpectrogram log_linear_spectrogram(const Waveform& w, const DspConfig& cfg);

struct GriffinLimResult {
    Waveform waveform;
    std::vector<double> errors;  // spectral-convergence error per iteration (index 0 = init)
};

// Plain alternating-projection phase reconstruction; iters = 0 returns the
// ISTFT of the magnitudes under seeded random phase.
GriffinLimResult griffin_lim(const LinearSpectrogram& s, const DspConfig& cfg, int iters,
                             std::uint64_t seed);

std::vector<double> scale_targets(const Waveform& w, double factor);

}  // namespace melsynth::dsp
