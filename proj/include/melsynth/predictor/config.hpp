#pragma once

#include <stdexcept>

namespace melsynth::predictor {

enum class AttentionQuery { kFirstLstm, kFinalLstm };

// Architectural widths/depths as data; defaults are the full-scale network.
struct PredictorConfig {
    int vocab_size = 35;
    int embedding_dim = 512;
    int encoder_conv_layers = 3;
    int encoder_conv_filters = 512;
    int encoder_conv_width = 5;
    int encoder_lstm_units = 512;  // total across both directions
    int attention_dim = 128;
    int location_filters = 32;
    int location_kernel = 31;
    int prenet_units = 256;
    int prenet_layers = 2;
    int decoder_lstm_units = 1024;
    int decoder_lstm_layers = 2;
    int output_dim = 80;
    int postnet_layers = 5;
    int postnet_filters = 512;
    int postnet_width = 5;
    double dropout_p = 0.5;
    double zoneout_p = 0.1;
    double stop_threshold = 0.5;
    int max_decoder_steps = 1000;
    bool postnet_enabled = true;
    AttentionQuery attention_query = AttentionQuery::kFinalLstm;

    void validate() const {
        if (vocab_size <= 0 || embedding_dim <= 0 || encoder_conv_layers <= 0 ||
            encoder_conv_filters <= 0 || encoder_conv_width <= 0 || encoder_lstm_units <= 0 ||
            attention_dim <= 0 || location_filters <= 0 || location_kernel <= 0 ||
            prenet_units <= 0 || prenet_layers <= 0 || decoder_lstm_units <= 0 ||
            decoder_lstm_layers <= 0 || output_dim <= 0 || postnet_layers <= 0 ||
            postnet_filters <= 0 || postnet_width <= 0 || max_decoder_steps <= 0)
            throw std::invalid_argument("predictor config: all sizes must be positive");
        if (encoder_lstm_units % 2 != 0)
            throw std::invalid_argument("predictor config: encoder_lstm_units must be even");
        if (encoder_conv_width % 2 == 0 || location_kernel % 2 == 0 || postnet_width % 2 == 0)
            throw std::invalid_argument("predictor config: conv widths must be odd");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw std::invalid_argument("predictor config: dropout_p must be in [0,1)");
        if (zoneout_p < 0.0 || zoneout_p > 1.0)
            throw std::invalid_argument("predictor config: zoneout_p must be in [0,1]");
        if (stop_threshold <= 0.0 || stop_threshold >= 1.0)
            throw std::invalid_argument("predictor config: stop_threshold must be in (0,1)");
    }

    // Small instantiation for tests and CPU-sized experiments.
    static PredictorConfig desk() {
        PredictorConfig c;
        c.embedding_dim = 32;
        c.encoder_conv_filters = 32;
        c.encoder_lstm_units = 32;
        c.attention_dim = 32;
        c.location_filters = 8;
        c.location_kernel = 31;
        c.prenet_units = 64;
        c.decoder_lstm_units = 128;
        c.postnet_filters = 32;
        c.max_decoder_steps = 200;
        return c;
    }
};

}  // namespace melsynth::predictor
