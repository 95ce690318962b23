// Command-line surface for the two-stage synthesis pipeline:
//   preprocess -> train-predictor -> make-gta -> train-vocoder -> synthesize

#include <CLI11.hpp>
#include <iostream>

#include "melsynth/pipeline/commands.hpp"

using namespace melsynth::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"melsynth: text-to-speech with a mel predictor and a sample-level vocoder"};
    app.require_subcommand(1);

    PreprocessOptions pre;
    auto* c_pre = app.add_subcommand("preprocess", "extract features from a manifest of WAVs");
    c_pre->add_option("--manifest", pre.manifest_path, "id|transcript|wav manifest")->required();
    c_pre->add_option("--out", pre.out_dir, "output directory")->required();
    c_pre->add_option("--config", pre.config_path, "INI config file");
    c_pre->add_flag("--linear", pre.write_linear, "also write log linear spectrograms");
    c_pre->add_option("--jobs", pre.jobs, "parallel workers");

    TrainPredictorOptions tp;
    std::int64_t tp_steps = -1;
    std::int64_t tp_seed = -1;
    auto* c_tp = app.add_subcommand("train-predictor", "train the spectrogram predictor");
    c_tp->add_option("--config", tp.config_path, "INI config file");
    c_tp->add_option("--index", tp.index_path, "preprocess index")->required();
    c_tp->add_option("--out", tp.out_dir, "checkpoint/log directory")->required();
    c_tp->add_option("--steps", tp_steps, "override max steps");
    c_tp->add_option("--seed", tp_seed, "override seed");
    c_tp->add_option("--resume", tp.resume_ckpt, "resume from checkpoint");

    MakeGtaOptions mg;
    std::int64_t mg_seed = -1;
    auto* c_mg = app.add_subcommand("make-gta", "write ground-truth-aligned predicted features");
    c_mg->add_option("--config", mg.config_path, "INI config file");
    c_mg->add_option("--index", mg.index_path, "preprocess index")->required();
    c_mg->add_option("--predictor", mg.predictor_ckpt, "predictor checkpoint")->required();
    c_mg->add_option("--out", mg.out_dir, "output directory")->required();
    c_mg->add_option("--seed", mg_seed, "override seed");

    TrainVocoderOptions tv;
    std::int64_t tv_steps = -1, tv_seed = -1;
    auto* c_tv = app.add_subcommand("train-vocoder", "train the sample-level vocoder");
    c_tv->add_option("--config", tv.config_path, "INI config file");
    c_tv->add_option("--index", tv.index_path, "feature index (ground truth or GTA)")->required();
    c_tv->add_option("--out", tv.out_dir, "checkpoint/log directory")->required();
    c_tv->add_option("--steps", tv_steps, "override max steps");
    c_tv->add_option("--seed", tv_seed, "override seed");
    c_tv->add_option("--resume", tv.resume_ckpt, "resume from checkpoint");

    SynthesizeOptions sy;
    auto* c_sy = app.add_subcommand("synthesize", "text to WAV");
    c_sy->add_option("--config", sy.config_path, "INI config file");
    c_sy->add_option("--text", sy.text, "input text (digits must be spelled out)")->required();
    c_sy->add_option("--predictor", sy.predictor_ckpt, "predictor checkpoint")->required();
    c_sy->add_option("--vocoder", sy.vocoder_ckpt, "vocoder checkpoint");
    c_sy->add_flag("--griffin-lim", sy.use_griffin_lim,
                   "reconstruct phase from a linear-spectrogram predictor");
    c_sy->add_flag("!--no-ema", sy.use_ema, "use raw instead of EMA vocoder weights");
    c_sy->add_option("--out", sy.out_wav, "output WAV path")->required();
    c_sy->add_option("--seed", sy.seed, "sampling seed");

    EvaluateOptions ev;
    std::int64_t ev_seed = -1;
    auto* c_ev = app.add_subcommand("evaluate", "objective metrics on a feature index");
    c_ev->add_option("--config", ev.config_path, "INI config file");
    c_ev->add_option("--index", ev.index_path, "preprocess index")->required();
    c_ev->add_option("--predictor", ev.predictor_ckpt, "predictor checkpoint")->required();
    c_ev->add_option("--vocoder", ev.vocoder_ckpt, "vocoder checkpoint (adds NLL)");
    c_ev->add_option("--seed", ev_seed, "override seed");

    AnalyzeRfOptions rf;
    auto* c_rf = app.add_subcommand("analyze-rf", "dilated-stack receptive field report");
    c_rf->add_option("--layers", rf.layers, "total layers");
    c_rf->add_option("--cycles", rf.cycles, "number of dilation cycles");
    c_rf->add_option("--cycle-size", rf.cycle_size, "layers per dilation cycle");
    c_rf->add_flag("--table4", rf.table4, "print the four reference geometries");

    MakeToyOptions mt;
    auto* c_mt = app.add_subcommand("make-toy", "generate the synthetic toy corpus");
    c_mt->add_option("--out", mt.out_dir, "output directory")->required();
    c_mt->add_option("--config", mt.config_path, "INI config file");
    c_mt->add_option("--utterances", mt.utterances, "number of utterances");
    c_mt->add_option("--seed", mt.seed, "corpus seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_pre) return cmd_preprocess(pre, std::cout, std::cerr);
        if (*c_tp) {
            if (tp_steps >= 0) tp.max_steps = tp_steps;
            if (tp_seed >= 0) tp.seed = static_cast<std::uint64_t>(tp_seed);
            return cmd_train_predictor(tp, std::cout, std::cerr);
        }
        if (*c_mg) {
            if (mg_seed >= 0) mg.seed = static_cast<std::uint64_t>(mg_seed);
            return cmd_make_gta(mg, std::cout, std::cerr);
        }
        if (*c_tv) {
            if (tv_steps >= 0) tv.max_steps = tv_steps;
            if (tv_seed >= 0) tv.seed = static_cast<std::uint64_t>(tv_seed);
            return cmd_train_vocoder(tv, std::cout, std::cerr);
        }
        if (*c_sy) return cmd_synthesize(sy, std::cout, std::cerr);
        if (*c_ev) {
            if (ev_seed >= 0) ev.seed = static_cast<std::uint64_t>(ev_seed);
            return cmd_evaluate(ev, std::cout, std::cerr);
        }
        if (*c_rf) return cmd_analyze_rf(rf, std::cout, std::cerr);
        if (*c_mt) return cmd_make_toy(mt, std::cout, std::cerr);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
