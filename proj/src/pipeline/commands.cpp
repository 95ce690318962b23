#include "melsynth/pipeline/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>
#include <vector>

#include "melsynth/common.hpp"
#include "melsynth/dsp/wav.hpp"
#include "melsynth/pipeline/feature_file.hpp"
#include "melsynth/pipeline/manifest.hpp"
#include "melsynth/pipeline/text.hpp"
#include "melsynth/pipeline/toy_corpus.hpp"
#include "melsynth/train/dataset.hpp"
#include "melsynth/train/evaluate.hpp"
#include "melsynth/train/trainer.hpp"
#include "melsynth/vocoder/generator.hpp"

namespace melsynth::pipeline {

namespace fs = std::filesystem;

namespace {

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_run_config(path);
}

train::Dataset load_training_dataset(const RunConfig& cfg, const std::string& index_path,
                                     bool load_audio) {
    return train::load_dataset(index_path, cfg.feature == FeatureKind::kLinear, load_audio,
                               cfg.dsp.sample_rate_hz, cfg.dsp.hop_length());
}

predictor::PredictorModel<float> build_predictor(const RunConfig& cfg, std::uint64_t seed,
                                                 const std::string& ckpt_path) {
    predictor::PredictorModel<float> model(cfg.predictor, mix_seed(seed, 0x9ed1));
    if (!ckpt_path.empty()) {
        const auto ckpt = autodiff::Checkpoint::load(ckpt_path);
        autodiff::load_store(ckpt, model.params(), "model.");
    }
    return model;
}

}  // namespace

int cmd_preprocess(const PreprocessOptions& opt, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    const auto manifest = read_manifest(opt.manifest_path);
    const fs::path manifest_dir = fs::absolute(fs::path(opt.manifest_path)).parent_path();
    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir / "mel");
    const bool want_linear = opt.write_linear || cfg.feature == FeatureKind::kLinear;
    if (want_linear) fs::create_directories(out_dir / "linear");

    struct Failure {
        std::string id, reason;
    };
    std::vector<std::optional<IndexEntry>> results(manifest.size());
    std::vector<Failure> failures;
    std::mutex fail_mutex;

    auto process = [&](std::size_t i) {
        const auto& entry = manifest[i];
        try {
            const fs::path wav_path = fs::path(entry.wav_path).is_absolute()
                                          ? fs::path(entry.wav_path)
                                          : manifest_dir / entry.wav_path;
            const dsp::Waveform w = dsp::read_wav(wav_path.string(), cfg.dsp.sample_rate_hz);
            const CharSequence chars = normalize_text(entry.transcript);
            const dsp::MelSpectrogram mel = dsp::mel_spectrogram(w, cfg.dsp);

            IndexEntry ie;
            ie.id = entry.id;
            ie.frames = mel.frames;
            ie.chars = chars.ids.size();
            ie.wav_path = wav_path.string();
            ie.normalized_text = chars.normalized_text;

            FeatureTensor mt;
            mt.dims = {mel.frames, mel.channels};
            mt.data.assign(mel.data.begin(), mel.data.end());
            ie.mel_path = "mel/" + entry.id + ".tft";
            write_feature_file((out_dir / ie.mel_path).string(), mt);

            if (want_linear) {
                const dsp::LinearSpectrogram lin = dsp::log_linear_spectrogram(w, cfg.dsp);
                FeatureTensor lt;
                lt.dims = {lin.frames, lin.bins};
                lt.data.assign(lin.data.begin(), lin.data.end());
                ie.linear_path = "linear/" + entry.id + ".tft";
                write_feature_file((out_dir / ie.linear_path).string(), lt);
            } else {
                ie.linear_path = "-";
            }
            results[i] = std::move(ie);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(fail_mutex);
            failures.push_back({entry.id, e.what()});
        }
    };

    if (opt.jobs <= 1) {
        for (std::size_t i = 0; i < manifest.size(); ++i) process(i);
    } else {
        std::atomic<std::size_t> next(0);
        std::vector<std::thread> workers;
        for (int j = 0; j < opt.jobs; ++j)
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < manifest.size(); i = next++) process(i);
            });
        for (auto& w : workers) w.join();
    }

    std::vector<IndexEntry> index;
    for (auto& r : results)
        if (r) index.push_back(std::move(*r));
    if (!index.empty()) write_index((out_dir / "index.txt").string(), index);

    out << "preprocessed " << index.size() << "/" << manifest.size() << " utterances into "
        << out_dir.string() << "\n";
    if (!failures.empty()) {
        err << "failed utterances:\n";
        for (const auto& f : failures) err << "  " << f.id << ": " << f.reason << "\n";
        return 1;
    }
    return 0;
}

int cmd_train_predictor(const TrainPredictorOptions& opt, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    const std::uint64_t seed = opt.seed.value_or(cfg.train.seed);
    auto model = build_predictor(cfg, seed, "");

    train::PredictorTrainOptions topt;
    topt.batch_size = cfg.train.predictor_batch_size;
    topt.max_steps = opt.max_steps.value_or(cfg.train.predictor_max_steps);
    topt.checkpoint_every = cfg.train.checkpoint_every;
    topt.seed = seed;
    topt.schedule = cfg.train.predictor_lr;
    topt.adam = {cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.predictor_adam_eps,
                 cfg.train.l2_weight};
    topt.grad_clip_norm = cfg.train.grad_clip_norm;
    topt.stop_pad_frames = cfg.train.stop_pad_frames;
    topt.out_dir = opt.out_dir;

    const auto data = load_training_dataset(cfg, opt.index_path, /*load_audio=*/false);
    train::PredictorTrainer trainer(model, data, topt);
    if (!opt.resume_ckpt.empty()) trainer.load_checkpoint(opt.resume_ckpt);
    const auto rec = trainer.run();
    out << "trained predictor to step " << trainer.step() << ", final loss " << rec.loss
        << ", checkpoint " << trainer.checkpoint_path(trainer.step()) << "\n";
    return 0;
}

int cmd_make_gta(const MakeGtaOptions& opt, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    const std::uint64_t seed = opt.seed.value_or(cfg.train.seed);
    auto model = build_predictor(cfg, seed, opt.predictor_ckpt);
    const auto data = load_training_dataset(cfg, opt.index_path, /*load_audio=*/false);

    const auto gta = train::make_gta_features(model, data, seed);
    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir / "gta");
    auto index = read_index(opt.index_path);
    const fs::path src_base = fs::absolute(fs::path(opt.index_path)).parent_path();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const std::string rel = "gta/" + index[i].id + ".tft";
        write_feature_file((out_dir / rel).string(), gta[i]);
        index[i].mel_path = rel;
        index[i].linear_path = "-";
        if (!fs::path(index[i].wav_path).is_absolute())
            index[i].wav_path = (src_base / index[i].wav_path).string();
    }
    write_index((out_dir / "index.txt").string(), index);
    out << "wrote " << gta.size() << " ground-truth-aligned feature files into "
        << out_dir.string() << "\n";
    return 0;
}

int cmd_train_vocoder(const TrainVocoderOptions& opt, std::ostream& out, std::ostream&) {
    RunConfig cfg = load_config_or_default(opt.config_path);
    if (cfg.feature == FeatureKind::kLinear)
        throw std::invalid_argument(
            "train-vocoder: the vocoder conditions on mel features; [predictor] feature=linear "
            "configs train the Griffin-Lim variant instead");
    const std::uint64_t seed = opt.seed.value_or(cfg.train.seed);
    vocoder::VocoderModel<float> model(cfg.vocoder, mix_seed(seed, 0x90c0));

    train::VocoderTrainOptions topt;
    topt.batch_size = cfg.train.vocoder_batch_size;
    topt.max_steps = opt.max_steps.value_or(cfg.train.vocoder_max_steps);
    topt.checkpoint_every = cfg.train.checkpoint_every;
    topt.seed = seed;
    topt.lr = cfg.train.vocoder_lr;
    topt.adam = {cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.vocoder_adam_eps, 0.0};
    topt.ema_decay = cfg.train.ema_decay;
    topt.crop_samples = cfg.train.vocoder_crop_samples;
    topt.grad_clip_norm = cfg.train.grad_clip_norm;
    topt.out_dir = opt.out_dir;

    const auto data = load_training_dataset(cfg, opt.index_path, /*load_audio=*/true);
    train::VocoderTrainer trainer(model, data, topt);
    if (!opt.resume_ckpt.empty()) trainer.load_checkpoint(opt.resume_ckpt);
    const auto rec = trainer.run();
    out << "trained vocoder to step " << trainer.step() << ", final nll " << rec.nll
        << ", checkpoint " << trainer.checkpoint_path(trainer.step()) << "\n";
    return 0;
}

int cmd_synthesize(const SynthesizeOptions& opt, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    const bool griffin = opt.use_griffin_lim || opt.vocoder_ckpt.empty();
    if (griffin && cfg.feature != FeatureKind::kLinear)
        throw std::invalid_argument(
            "synthesize: Griffin-Lim inverts linear spectrograms; this predictor emits mel "
            "features. Train with [predictor] feature=linear to use the Griffin-Lim path.");
    if (!griffin && cfg.feature != FeatureKind::kMel)
        throw std::invalid_argument("synthesize: the vocoder path requires mel features");

    auto model = build_predictor(cfg, opt.seed, opt.predictor_ckpt);
    const CharSequence chars = normalize_text(opt.text);
    auto pred = model.infer(chars.ids, mix_seed(opt.seed, 0x5eed));
    const std::size_t frames = pred.after.rows();

    dsp::Waveform wave;
    wave.sample_rate_hz = cfg.dsp.sample_rate_hz;
    if (griffin) {
        dsp::LinearSpectrogram mag;
        mag.frames = frames;
        mag.bins = pred.after.cols();
        mag.data.resize(frames * mag.bins);
        for (std::size_t i = 0; i < mag.data.size(); ++i)
            mag.data[i] = std::exp(static_cast<double>(pred.after.value()[i]));
        auto gl = dsp::griffin_lim(mag, cfg.dsp, cfg.dsp.griffin_lim_iters,
                                   mix_seed(opt.seed, 0x91f));
        wave.samples = std::move(gl.waveform.samples);
    } else {
        vocoder::VocoderModel<float> voc(cfg.vocoder, mix_seed(opt.seed, 0x90c0));
        const auto ckpt = autodiff::Checkpoint::load(opt.vocoder_ckpt);
        autodiff::load_store(ckpt, voc.params(), "model.");
        if (opt.use_ema && ckpt.has("ema." + voc.params().all().front().name)) {
            autodiff::EmaState<float> ema(voc.params(), cfg.train.ema_decay);
            autodiff::load_ema(ckpt, ema, voc.params());
            ema.swap_in(voc.params());
        }
        const auto samples = vocoder::generate(voc, pred.after, mix_seed(opt.seed, 0xa0d10));
        wave.samples.assign(samples.begin(), samples.end());
    }
    dsp::write_wav(opt.out_wav, wave);
    out << "frames=" << frames << " samples=" << wave.samples.size()
        << " truncated=" << (pred.truncated ? 1 : 0) << " duration_ms="
        << static_cast<double>(wave.samples.size()) * 1000.0 / cfg.dsp.sample_rate_hz << "\n";
    return 0;
}

int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    const std::uint64_t seed = opt.seed.value_or(cfg.train.seed);
    auto model = build_predictor(cfg, seed, opt.predictor_ckpt);
    const bool with_vocoder = !opt.vocoder_ckpt.empty();
    const auto data = load_training_dataset(cfg, opt.index_path, with_vocoder);

    std::optional<vocoder::VocoderModel<float>> voc;
    if (with_vocoder) {
        voc.emplace(cfg.vocoder, mix_seed(seed, 0x90c0));
        const auto ckpt = autodiff::Checkpoint::load(opt.vocoder_ckpt);
        autodiff::load_store(ckpt, voc->params(), "model.");
    }
    const auto metrics = train::evaluate(model, data, voc ? &*voc : nullptr, seed);
    out << metrics.to_json() << "\n";
    return 0;
}

std::string format_receptive_field(long long samples, double ms) {
    char buf[64];
    if (ms >= 1.0)
        std::snprintf(buf, sizeof(buf), "%.1f", ms);
    else
        std::snprintf(buf, sizeof(buf), "%.3f", ms);
    return format_thousands(samples) + " / " + buf;
}

int cmd_analyze_rf(const AnalyzeRfOptions& opt, std::ostream& out, std::ostream&) {
    out << "layers  cycles  cycle_size  receptive_field (samples / ms)\n";
    auto print_row = [&](int layers, int cycles, int cycle_size) {
        if (layers != cycles * cycle_size)
            throw std::invalid_argument("analyze-rf: layers must equal cycles * cycle_size");
        const auto rf = vocoder::receptive_field(layers, cycle_size, 3);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-7d %-7d %-11d %s\n", layers, cycles, cycle_size,
                      format_receptive_field(rf.samples, rf.ms).c_str());
        out << buf;
    };
    if (opt.table4) {
        print_row(30, 3, 10);
        print_row(24, 4, 6);
        print_row(12, 2, 6);
        print_row(30, 30, 1);
    } else {
        print_row(opt.layers, opt.cycles, opt.cycle_size);
    }
    return 0;
}

int cmd_make_toy(const MakeToyOptions& opt, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_config_or_default(opt.config_path);
    ToyCorpusOptions topt;
    topt.utterances = opt.utterances;
    topt.seed = opt.seed;
    const std::string manifest = make_toy_corpus(opt.out_dir, topt, cfg.dsp);
    out << "wrote toy corpus manifest " << manifest << "\n";
    return 0;
}

}  // namespace melsynth::pipeline
