#include "melsynth/dsp/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "melsynth/rng.hpp"

namespace melsynth::dsp {

namespace {

// FFTW plan creation touches global state; execution is thread-safe.
std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(int n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    // time domain (n) -> half spectrum (n/2+1)
    void forward(const double* time, std::complex<double>* spec) {
        std::copy(time, time + n_, in_);
        fftw_execute(fwd_);
        const auto* o = reinterpret_cast<std::complex<double>*>(out_);
        std::copy(o, o + n_ / 2 + 1, spec);
    }

    // half spectrum -> time domain, normalized by 1/n
    void inverse(const std::complex<double>* spec, double* time) {
        auto* dst = reinterpret_cast<std::complex<double>*>(out_);
        std::copy(spec, spec + n_ / 2 + 1, dst);
        fftw_execute(inv_);
        const double norm = 1.0 / n_;
        for (int i = 0; i < n_; ++i) time[i] = in_[i] * norm;
    }

private:
    int n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan fwd_, inv_;
};

std::vector<double> hann_window(int n) {
    // periodic form
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    return w;
}

// symmetric reflection (no repeated edge sample), robust for short signals
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(n) - 2;
    std::ptrdiff_t j = i % period;
    if (j < 0) j += period;
    if (j >= static_cast<std::ptrdiff_t>(n)) j = period - j;
    return static_cast<std::size_t>(j);
}

void check_input(const Waveform& w) {
    if (w.samples.empty()) throw std::invalid_argument("empty input");
    for (double s : w.samples)
        if (!std::isfinite(s)) throw std::runtime_error("non-finite sample");
}

}  // namespace

int DspConfig::frame_length() const {
    return static_cast<int>(std::lround(frame_length_ms * sample_rate_hz / 1000.0));
}

int DspConfig::hop_length() const {
    return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void DspConfig::validate() const {
    if (sample_rate_hz <= 0) throw std::invalid_argument("dsp: sample rate must be positive");
    if (frame_length_ms <= 0 || hop_ms <= 0)
        throw std::invalid_argument("dsp: frame length and hop must be positive");
    const double hop_exact = hop_ms * sample_rate_hz / 1000.0;
    if (std::abs(hop_exact - std::lround(hop_exact)) > 1e-9)
        throw std::invalid_argument("dsp: hop must be a whole number of samples");
    if (fft_size < frame_length())
        throw std::invalid_argument("dsp: fft_size smaller than frame length in samples");
    if (mel_channels <= 0) throw std::invalid_argument("dsp: mel_channels must be positive");
    if (!(0.0 < mel_fmin_hz && mel_fmin_hz < mel_fmax_hz &&
          mel_fmax_hz <= sample_rate_hz / 2.0))
        throw std::invalid_argument("dsp: need 0 < mel_fmin < mel_fmax <= sample_rate/2");
    if (clip_floor <= 0.0) throw std::invalid_argument("dsp: clip_floor must be positive");
    if (griffin_lim_iters < 0) throw std::invalid_argument("dsp: griffin_lim_iters negative");
}

std::size_t frame_count(std::size_t num_samples, const DspConfig& cfg) {
    const std::size_t frame = static_cast<std::size_t>(cfg.frame_length());
    const std::size_t hop = static_cast<std::size_t>(cfg.hop_length());
    const std::size_t len = std::max(num_samples, frame);
    return (len + hop - 1) / hop;
}

ComplexSpectrogram stft_complex(const Waveform& w, const DspConfig& cfg) {
    cfg.validate();
    check_input(w);
    const std::size_t frame = static_cast<std::size_t>(cfg.frame_length());
    const std::size_t hop = static_cast<std::size_t>(cfg.hop_length());
    const std::size_t pad = frame / 2;

    std::vector<double> x(w.samples);
    if (x.size() < frame) x.resize(frame, 0.0);
    const std::size_t n_frames = (x.size() + hop - 1) / hop;

    const auto window = hann_window(static_cast<int>(frame));
    ComplexSpectrogram spec;
    spec.frames = n_frames;
    spec.bins = static_cast<std::size_t>(cfg.fft_bins());
    spec.data.resize(n_frames * spec.bins);

    RealFft fft(cfg.fft_size);
    std::vector<double> buf(cfg.fft_size, 0.0);
    for (std::size_t t = 0; t < n_frames; ++t) {
        // frame t covers padded samples [t*hop, t*hop + frame), center at t*hop
        std::fill(buf.begin(), buf.end(), 0.0);
        for (std::size_t i = 0; i < frame; ++i) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(t * hop + i) - static_cast<std::ptrdiff_t>(pad);
            buf[i] = x[reflect_index(src, x.size())] * window[i];
        }
        fft.forward(buf.data(), &spec.at(t, 0));
    }
    return spec;
}

LinearSpectrogram stft(const Waveform& w, const DspConfig& cfg) {
    const ComplexSpectrogram spec = stft_complex(w, cfg);
    LinearSpectrogram mag;
    mag.frames = spec.frames;
    mag.bins = spec.bins;
    mag.data.resize(spec.data.size());
    for (std::size_t i = 0; i < spec.data.size(); ++i) mag.data[i] = std::abs(spec.data[i]);
    return mag;
}

Waveform istft(const ComplexSpectrogram& spec, const DspConfig& cfg) {
    cfg.validate();
    const std::size_t frame = static_cast<std::size_t>(cfg.frame_length());
    const std::size_t hop = static_cast<std::size_t>(cfg.hop_length());
    const std::size_t pad = frame / 2;
    if (spec.bins != static_cast<std::size_t>(cfg.fft_bins()))
        throw std::invalid_argument("istft: spectrogram bins " + std::to_string(spec.bins) +
                                    " do not match fft size " + std::to_string(cfg.fft_size));
    if (spec.frames == 0) throw std::invalid_argument("istft: empty spectrogram");

    const auto window = hann_window(static_cast<int>(frame));
    const std::size_t padded_len = (spec.frames - 1) * hop + frame;
    std::vector<double> acc(padded_len, 0.0), wsum(padded_len, 0.0);

    RealFft fft(cfg.fft_size);
    std::vector<double> buf(cfg.fft_size, 0.0);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        fft.inverse(&spec.at(t, 0), buf.data());
        for (std::size_t i = 0; i < frame; ++i) {
            acc[t * hop + i] += buf[i] * window[i];
            wsum[t * hop + i] += window[i] * window[i];
        }
    }

    const std::size_t out_len = spec.frames * hop;
    Waveform out;
    out.sample_rate_hz = cfg.sample_rate_hz;
    out.samples.resize(out_len, 0.0);
    for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t j = i + pad;
        if (j < padded_len && wsum[j] > 1e-10) out.samples[i] = acc[j] / wsum[j];
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(const DspConfig& cfg) {
    cfg.validate();
    const std::size_t c_len = static_cast<std::size_t>(cfg.mel_channels);
    const std::size_t bins = static_cast<std::size_t>(cfg.fft_bins());

    // channel c rises over [edge(c), edge(c+1)] and falls over [edge(c+1), edge(c+2)]
    std::vector<double> edges_hz(c_len + 2);
    const double mel_lo = hz_to_mel(cfg.mel_fmin_hz);
    const double mel_hi = hz_to_mel(cfg.mel_fmax_hz);
    for (std::size_t i = 0; i < c_len + 2; ++i)
        edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (c_len + 1));

    MelFilterbank fb;
    fb.channels = c_len;
    fb.bins = bins;
    fb.weights.assign(c_len * bins, 0.0);
    fb.center_hz.resize(c_len);
    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    for (std::size_t c = 0; c < c_len; ++c) {
        const double left = edges_hz[c], center = edges_hz[c + 1], right = edges_hz[c + 2];
        fb.center_hz[c] = center;
        bool any = false;
        for (std::size_t b = 0; b < bins; ++b) {
            const double f = b * bin_hz;
            double wgt = 0.0;
            if (f > left && f < center)
                wgt = (f - left) / (center - left);
            else if (f >= center && f < right)
                wgt = (right - f) / (right - center);
            if (wgt > 0.0) {
                fb.weights[c * bins + b] = wgt;
                any = true;
            }
        }
        if (!any) throw std::invalid_argument("filterbank underresolved");
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const DspConfig& cfg) {
    const LinearSpectrogram mag = stft(w, cfg);
    const MelFilterbank fb = mel_filterbank(cfg);
    MelSpectrogram mel;
    mel.frames = mag.frames;
    mel.channels = fb.channels;
    mel.data.resize(mel.frames * mel.channels);
    for (std::size_t t = 0; t < mag.frames; ++t)
        for (std::size_t c = 0; c < fb.channels; ++c) {
            double e = 0.0;
            for (std::size_t b = 0; b < mag.bins; ++b)
                e += fb.weights[c * mag.bins + b] * mag.at(t, b);
            mel.at(t, c) = std::log(std::max(e, cfg.clip_floor));
        }
    return mel;
}

LinearSpectrogram log_linear_spectrogram(const Waveform& w, const DspConfig& cfg) {
    LinearSpectrogram mag = stft(w, cfg);
    for (double& v : mag.data) v = std::log(std::max(v, cfg.clip_floor));
    return mag;
}

GriffinLimResult griffin_lim(const LinearSpectrogram& s, const DspConfig& cfg, int iters,
                             std::uint64_t seed) {
    cfg.validate();
    if (iters < 0) throw std::invalid_argument("griffin_lim: iters must be >= 0");
    for (double v : s.data)
        if (!(v >= 0.0)) throw std::invalid_argument("griffin_lim: magnitudes must be >= 0");

    double s_norm = 0.0;
    for (double v : s.data) s_norm += v * v;
    s_norm = std::sqrt(s_norm);

    Rng rng(seed);
    ComplexSpectrogram spec;
    spec.frames = s.frames;
    spec.bins = s.bins;
    spec.data.resize(s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double phase = rng.uniform(-M_PI, M_PI);
        spec.data[i] = std::polar(s.data[i], phase);
    }

    auto error_of = [&](const Waveform& wave) {
        if (s_norm == 0.0) return 0.0;
        const LinearSpectrogram m = stft(wave, cfg);
        double e = 0.0;
        for (std::size_t i = 0; i < s.data.size(); ++i) {
            const double d = m.data[i] - s.data[i];
            e += d * d;
        }
        return std::sqrt(e) / s_norm;
    };
    // magnitude replacement followed by the istft/stft consistency projection
    auto project = [&](const Waveform& in) {
        const ComplexSpectrogram est = stft_complex(in, cfg);
        ComplexSpectrogram replaced = spec;
        for (std::size_t i = 0; i < replaced.data.size(); ++i) {
            const double mag = std::abs(est.data[i]);
            const std::complex<double> phase =
                mag > 1e-300 ? est.data[i] / mag : std::complex<double>(1.0, 0.0);
            replaced.data[i] = s.data[i] * phase;
        }
        return istft(replaced, cfg);
    };

    GriffinLimResult result;
    Waveform x = istft(spec, cfg);
    Waveform x_prev = x;
    double err = error_of(x);
    result.errors.push_back(err);

    // momentum extrapolation (fast variant); an iteration that would raise the
    // error falls back to the plain projection, so the sequence stays monotone
    const double momentum = 0.9;
    for (int it = 0; it < iters; ++it) {
        Waveform extrapolated = x;
        for (std::size_t i = 0; i < x.samples.size(); ++i)
            extrapolated.samples[i] += momentum * (x.samples[i] - x_prev.samples[i]);
        Waveform cand = project(extrapolated);
        double cand_err = error_of(cand);
        if (cand_err > err) {
            cand = project(x);
            cand_err = error_of(cand);
            if (cand_err > err) {
                cand = x;
                cand_err = err;
            }
        }
        x_prev = std::move(x);
        x = std::move(cand);
        err = cand_err;
        result.errors.push_back(err);
    }
    result.waveform = std::move(x);
    return result;
}

std::vector<double> scale_targets(const Waveform& w, double factor) {
    if (factor <= 0.0) throw std::invalid_argument("scale_targets: factor must be positive");
    std::vector<double> out(w.samples.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.samples[i] * factor;
    return out;
}

}  // namespace melsynth::dsp
