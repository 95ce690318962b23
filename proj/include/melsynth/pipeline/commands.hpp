#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "melsynth/pipeline/run_config.hpp"

namespace melsynth::pipeline {

// Command implementations behind the CLI, returning process exit codes:
// 0 success, 1 validation error, 2 runtime error. The CLI wrapper maps
// exceptions onto the same contract.

struct PreprocessOptions {
    std::string manifest_path;
    std::string out_dir;
    std::string config_path;  // empty uses built-in defaults
    bool write_linear = false;
    int jobs = 1;
};
int cmd_preprocess(const PreprocessOptions& opt, std::ostream& out, std::ostream& err);

struct TrainPredictorOptions {
    std::string config_path;
    std::string index_path;
    std::string out_dir;
    std::optional<std::int64_t> max_steps;
    std::optional<std::uint64_t> seed;
    std::string resume_ckpt;
};
int cmd_train_predictor(const TrainPredictorOptions& opt, std::ostream& out, std::ostream& err);

struct MakeGtaOptions {
    std::string config_path;
    std::string index_path;
    std::string predictor_ckpt;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};
int cmd_make_gta(const MakeGtaOptions& opt, std::ostream& out, std::ostream& err);

struct TrainVocoderOptions {
    std::string config_path;
    std::string index_path;  // ground-truth or GTA index
    std::string out_dir;
    std::optional<std::int64_t> max_steps;
    std::optional<std::uint64_t> seed;
    std::string resume_ckpt;
};
int cmd_train_vocoder(const TrainVocoderOptions& opt, std::ostream& out, std::ostream& err);

struct SynthesizeOptions {
    std::string config_path;
    std::string text;
    std::string predictor_ckpt;
    std::string vocoder_ckpt;  // empty selects Griffin-Lim
    bool use_griffin_lim = false;
    bool use_ema = true;
    std::string out_wav;
    std::uint64_t seed = 42;
};
int cmd_synthesize(const SynthesizeOptions& opt, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
    std::string config_path;
    std::string index_path;
    std::string predictor_ckpt;
    std::string vocoder_ckpt;  // optional
    std::optional<std::uint64_t> seed;
};
int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err);

struct AnalyzeRfOptions {
    int layers = 30;
    int cycles = 3;
    int cycle_size = 10;
    bool table4 = false;
};
int cmd_analyze_rf(const AnalyzeRfOptions& opt, std::ostream& out, std::ostream& err);

struct MakeToyOptions {
    std::string out_dir;
    std::string config_path;
    int utterances = 4;
    std::uint64_t seed = 1234;
};
int cmd_make_toy(const MakeToyOptions& opt, std::ostream& out, std::ostream& err);

// "6,139 / 255.8" style formatting used by analyze-rf.
std::string format_receptive_field(long long samples, double ms);

}  // namespace melsynth::pipeline
