#include "melsynth/pipeline/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "melsynth/pipeline/text.hpp"

namespace melsynth::pipeline {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

void TrainSettings::validate() const {
    if (predictor_batch_size <= 0 || vocoder_batch_size <= 0)
        throw std::invalid_argument("train config: batch sizes must be positive");
    if (predictor_max_steps <= 0 || vocoder_max_steps <= 0 || checkpoint_every <= 0)
        throw std::invalid_argument("train config: step counts must be positive");
    predictor_lr.validate();
    if (vocoder_lr <= 0 || predictor_adam_eps <= 0 || vocoder_adam_eps <= 0)
        throw std::invalid_argument("train config: rates and eps must be positive");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw std::invalid_argument("train config: betas must be in [0,1)");
    if (l2_weight < 0) throw std::invalid_argument("train config: l2_weight must be >= 0");
    if (ema_decay < 0 || ema_decay > 1)
        throw std::invalid_argument("train config: ema_decay must be in [0,1]");
    if (vocoder_crop_samples <= 0)
        throw std::invalid_argument("train config: vocoder_crop_samples must be positive");
    if (stop_pad_frames < 0)
        throw std::invalid_argument("train config: stop_pad_frames must be >= 0");
    if (grad_clip_norm < 0)
        throw std::invalid_argument("train config: grad_clip_norm must be >= 0");
}

void RunConfig::validate() const {
    dsp.validate();
    predictor.validate();
    vocoder.validate();
    train.validate();
    if (predictor.vocab_size != kVocabSize)
        throw std::invalid_argument("config: predictor vocab_size must match the charset (" +
                                    std::to_string(kVocabSize) + ")");
    const int expected_out =
        feature == FeatureKind::kMel ? dsp.mel_channels : dsp.fft_bins();
    if (predictor.output_dim != expected_out)
        throw std::invalid_argument(
            "config: predictor output_dim " + std::to_string(predictor.output_dim) +
            " does not match the " + (feature == FeatureKind::kMel ? "mel" : "linear") +
            " feature dimension " + std::to_string(expected_out));
    vocoder.validate_hop(dsp.hop_length());
    if (vocoder.conditioning_channels != dsp.mel_channels)
        throw std::invalid_argument("config: vocoder conditioning_channels must equal mel_channels");
    if (vocoder.sample_rate_hz != dsp.sample_rate_hz)
        throw std::invalid_argument("config: vocoder sample rate must match dsp sample rate");
    if (train.vocoder_crop_samples % dsp.hop_length() != 0)
        throw std::invalid_argument("config: vocoder_crop_samples must be a multiple of the hop");
}

void apply_config_line(RunConfig& cfg, const std::string& section, const std::string& key,
                       const std::string& value) {
    const std::string where = "[" + section + "] " + key;
    if (section == "dsp") {
        auto& d = cfg.dsp;
        if (key == "sample_rate_hz") d.sample_rate_hz = to_int(where, value);
        else if (key == "frame_length_ms") d.frame_length_ms = to_double(where, value);
        else if (key == "hop_ms") d.hop_ms = to_double(where, value);
        else if (key == "fft_size") d.fft_size = to_int(where, value);
        else if (key == "mel_channels") d.mel_channels = to_int(where, value);
        else if (key == "mel_fmin_hz") d.mel_fmin_hz = to_double(where, value);
        else if (key == "mel_fmax_hz") d.mel_fmax_hz = to_double(where, value);
        else if (key == "clip_floor") d.clip_floor = to_double(where, value);
        else if (key == "griffin_lim_iters") d.griffin_lim_iters = to_int(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
        return;
    }
    if (section == "predictor") {
        auto& p = cfg.predictor;
        if (key == "feature") {
            if (value == "mel") cfg.feature = FeatureKind::kMel;
            else if (value == "linear") cfg.feature = FeatureKind::kLinear;
            else throw std::invalid_argument("config: feature must be mel or linear");
        } else if (key == "embedding_dim") p.embedding_dim = to_int(where, value);
        else if (key == "encoder_conv_layers") p.encoder_conv_layers = to_int(where, value);
        else if (key == "encoder_conv_filters") p.encoder_conv_filters = to_int(where, value);
        else if (key == "encoder_conv_width") p.encoder_conv_width = to_int(where, value);
        else if (key == "encoder_lstm_units") p.encoder_lstm_units = to_int(where, value);
        else if (key == "attention_dim") p.attention_dim = to_int(where, value);
        else if (key == "location_filters") p.location_filters = to_int(where, value);
        else if (key == "location_kernel") p.location_kernel = to_int(where, value);
        else if (key == "prenet_units") p.prenet_units = to_int(where, value);
        else if (key == "decoder_lstm_units") p.decoder_lstm_units = to_int(where, value);
        else if (key == "output_dim") p.output_dim = to_int(where, value);
        else if (key == "postnet_layers") p.postnet_layers = to_int(where, value);
        else if (key == "postnet_filters") p.postnet_filters = to_int(where, value);
        else if (key == "postnet_width") p.postnet_width = to_int(where, value);
        else if (key == "dropout_p") p.dropout_p = to_double(where, value);
        else if (key == "zoneout_p") p.zoneout_p = to_double(where, value);
        else if (key == "stop_threshold") p.stop_threshold = to_double(where, value);
        else if (key == "max_decoder_steps") p.max_decoder_steps = to_int(where, value);
        else if (key == "postnet_enabled") p.postnet_enabled = to_bool(where, value);
        else if (key == "attention_query") {
            if (value == "first") p.attention_query = predictor::AttentionQuery::kFirstLstm;
            else if (value == "final") p.attention_query = predictor::AttentionQuery::kFinalLstm;
            else throw std::invalid_argument("config: attention_query must be first or final");
        } else throw std::invalid_argument("config: unknown key " + where);
        return;
    }
    if (section == "vocoder") {
        auto& v = cfg.vocoder;
        if (key == "total_layers") v.total_layers = to_int(where, value);
        else if (key == "dilation_cycle_size") v.dilation_cycle_size = to_int(where, value);
        else if (key == "kernel_size") v.kernel_size = to_int(where, value);
        else if (key == "residual_channels") v.residual_channels = to_int(where, value);
        else if (key == "skip_channels") v.skip_channels = to_int(where, value);
        else if (key == "conditioning_channels") v.conditioning_channels = to_int(where, value);
        else if (key == "upsample_factor_1") v.upsample_factor_1 = to_int(where, value);
        else if (key == "upsample_factor_2") v.upsample_factor_2 = to_int(where, value);
        else if (key == "upsample_kernel_scale") v.upsample_kernel_scale = to_int(where, value);
        else if (key == "upsample_activation") {
            if (value == "none") v.upsample_activation = vocoder::UpsampleActivation::kNone;
            else if (value == "leaky_relu")
                v.upsample_activation = vocoder::UpsampleActivation::kLeakyRelu;
            else throw std::invalid_argument("config: upsample_activation must be none or leaky_relu");
        } else if (key == "upsample_leaky_slope") v.upsample_leaky_slope = to_double(where, value);
        else if (key == "mol_components") v.mol_components = to_int(where, value);
        else if (key == "sample_rate_hz") v.sample_rate_hz = to_int(where, value);
        else if (key == "target_scale") v.target_scale = to_double(where, value);
        else if (key == "log_scale_floor") v.log_scale_floor = to_double(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
        return;
    }
    if (section == "train") {
        auto& t = cfg.train;
        if (key == "predictor_batch_size") t.predictor_batch_size = to_int(where, value);
        else if (key == "vocoder_batch_size") t.vocoder_batch_size = to_int(where, value);
        else if (key == "predictor_max_steps") t.predictor_max_steps = to_i64(where, value);
        else if (key == "vocoder_max_steps") t.vocoder_max_steps = to_i64(where, value);
        else if (key == "checkpoint_every") t.checkpoint_every = to_i64(where, value);
        else if (key == "predictor_lr") t.predictor_lr.lr_init = to_double(where, value);
        else if (key == "predictor_lr_final") t.predictor_lr.lr_final = to_double(where, value);
        else if (key == "predictor_lr_decay_start")
            t.predictor_lr.decay_start = to_i64(where, value);
        else if (key == "predictor_lr_decay_end") t.predictor_lr.decay_end = to_i64(where, value);
        else if (key == "predictor_adam_eps") t.predictor_adam_eps = to_double(where, value);
        else if (key == "vocoder_adam_eps") t.vocoder_adam_eps = to_double(where, value);
        else if (key == "vocoder_lr") t.vocoder_lr = to_double(where, value);
        else if (key == "adam_beta1") t.adam_beta1 = to_double(where, value);
        else if (key == "adam_beta2") t.adam_beta2 = to_double(where, value);
        else if (key == "l2_weight") t.l2_weight = to_double(where, value);
        else if (key == "ema_decay") t.ema_decay = to_double(where, value);
        else if (key == "vocoder_crop_samples") t.vocoder_crop_samples = to_int(where, value);
        else if (key == "stop_pad_frames") t.stop_pad_frames = to_int(where, value);
        else if (key == "grad_clip_norm") t.grad_clip_norm = to_double(where, value);
        else if (key == "seed") t.seed = static_cast<std::uint64_t>(to_i64(where, value));
        else throw std::invalid_argument("config: unknown key " + where);
        return;
    }
    throw std::invalid_argument("config: unknown section [" + section + "]");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    RunConfig cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(line_no));
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key=value at line " +
                                        std::to_string(line_no));
        if (section.empty())
            throw std::invalid_argument("config: key outside any section at line " +
                                        std::to_string(line_no));
        apply_config_line(cfg, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

}  // namespace melsynth::pipeline
