#include "melsynth/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <stdexcept>

namespace melsynth::train {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_finite_loss(double v, std::int64_t step, const std::string& batch_id) {
    if (!std::isfinite(v))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                 " on batch item " + batch_id);
}

}  // namespace

TrainLogger::TrainLogger(const std::string& path) {
    if (path.empty()) return;
    os_.open(path, std::ios::app);
    if (!os_) throw std::runtime_error("train log: cannot open " + path);
}

void TrainLogger::log(const TrainLogRecord& r, bool vocoder_stage) {
    if (!os_.is_open()) return;
    nlohmann::json j;
    j["step"] = r.step;
    if (vocoder_stage) {
        j["nll"] = r.nll;
    } else {
        j["mel_before"] = r.mel_before;
        j["mel_after"] = r.mel_after;
        j["stop_bce"] = r.stop_bce;
    }
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["wall_ms"] = r.wall_ms;
    os_ << j.dump() << '\n';
    os_.flush();
}

// ------------------------------------------------------------- predictor

PredictorTrainer::PredictorTrainer(predictor::PredictorModel<float>& model, const Dataset& data,
                                   PredictorTrainOptions opt)
    : model_(model), data_(data), opt_(std::move(opt)),
      adam_(model.params(), opt_.adam),
      logger_(opt_.out_dir.empty() ? std::string() : opt_.out_dir + "/train_log.jsonl") {
    if (data_.empty()) throw std::invalid_argument("predictor trainer: empty dataset");
    opt_.schedule.validate();
    if (!opt_.out_dir.empty()) std::filesystem::create_directories(opt_.out_dir);
}

std::string PredictorTrainer::checkpoint_path(std::int64_t step) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "predictor_%08lld.ckpt", static_cast<long long>(step));
    return opt_.out_dir + "/" + buf;
}

TrainLogRecord PredictorTrainer::train_step() {
    const auto t0 = Clock::now();
    const std::int64_t s = step_;
    auto& store = model_.params();
    store.zero_grad();

    TrainLogRecord rec;
    rec.step = s;
    const int b = opt_.batch_size;
    for (int j = 0; j < b; ++j) {
        const Utterance& u = data_.items[static_cast<std::size_t>(s * b + j) % data_.size()];
        try {
            autodiff::Tape<float> tape;
            const std::uint64_t item_seed = mix_seed(opt_.seed, static_cast<std::uint64_t>(s),
                                                     static_cast<std::uint64_t>(j));
            const std::size_t pad = static_cast<std::size_t>(opt_.stop_pad_frames);
            auto out = model_.forward_teacher_forced(&tape, u.char_ids, u.features, true,
                                                     item_seed, pad);
            auto stop_target =
                predictor::make_stop_target<float>(u.features.rows(), u.features.rows() + pad);
            auto terms = model_.loss_terms(&tape, out, u.features, stop_target);
            check_finite_loss(terms.total[0], s, u.id);
            auto scaled = autodiff::scale(&tape, terms.total, 1.0f / b);
            tape.backward(scaled);
            rec.mel_before += terms.mel_before[0] / b;
            rec.mel_after += terms.mel_after[0] / b;
            rec.stop_bce += terms.stop_bce[0] / b;
            rec.loss += terms.total[0] / b;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("step " + std::to_string(s) + " batch item " + u.id + ": " +
                                     e.what());
        }
    }
    if (opt_.grad_clip_norm > 0.0) autodiff::clip_global_norm(store, opt_.grad_clip_norm);
    rec.lr = opt_.schedule.value(s);
    adam_.step(store, rec.lr);
    ++step_;
    rec.wall_ms = ms_since(t0);
    return rec;
}

TrainLogRecord PredictorTrainer::run() {
    TrainLogRecord rec;
    while (step_ < opt_.max_steps) {
        rec = train_step();
        logger_.log(rec, /*vocoder_stage=*/false);
        if (!opt_.out_dir.empty() &&
            (step_ % opt_.checkpoint_every == 0 || step_ == opt_.max_steps))
            save_checkpoint(checkpoint_path(step_));
    }
    return rec;
}

void PredictorTrainer::save_checkpoint(const std::string& path) {
    autodiff::Checkpoint ckpt;
    autodiff::add_store(ckpt, model_.params(), "model.");
    autodiff::add_adam(ckpt, adam_, model_.params());
    ckpt.add_scalar_i64("trainer.step", step_);
    ckpt.save(path);
}

void PredictorTrainer::load_checkpoint(const std::string& path) {
    const auto ckpt = autodiff::Checkpoint::load(path);
    autodiff::load_store(ckpt, model_.params(), "model.");
    autodiff::load_adam(ckpt, adam_, model_.params());
    step_ = ckpt.scalar_i64("trainer.step");
}

// --------------------------------------------------------------- vocoder

VocoderTrainer::VocoderTrainer(vocoder::VocoderModel<float>& model, const Dataset& data,
                               VocoderTrainOptions opt)
    : model_(model), data_(data), opt_(std::move(opt)),
      adam_(model.params(), opt_.adam),
      ema_(model.params(), opt_.ema_decay),
      logger_(opt_.out_dir.empty() ? std::string() : opt_.out_dir + "/train_log.jsonl") {
    if (data_.empty()) throw std::invalid_argument("vocoder trainer: empty dataset");
    const int hop = model_.config().hop();
    if (opt_.crop_samples % hop != 0)
        throw std::invalid_argument("vocoder trainer: crop_samples must be a multiple of hop " +
                                    std::to_string(hop));
    for (const auto& u : data_.items) {
        if (u.audio.empty())
            throw std::invalid_argument("vocoder trainer: utterance " + u.id +
                                        " has no audio loaded");
        if (u.audio.size() != u.features.rows() * static_cast<std::size_t>(hop))
            throw std::invalid_argument("vocoder trainer: utterance " + u.id +
                                        " audio is not frame-aligned");
    }
    if (!opt_.out_dir.empty()) std::filesystem::create_directories(opt_.out_dir);
}

std::string VocoderTrainer::checkpoint_path(std::int64_t step) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vocoder_%08lld.ckpt", static_cast<long long>(step));
    return opt_.out_dir + "/" + buf;
}

TrainLogRecord VocoderTrainer::train_step() {
    const auto t0 = Clock::now();
    const std::int64_t s = step_;
    const auto& cfg = model_.config();
    const int hop = cfg.hop();
    const std::size_t crop_frames = static_cast<std::size_t>(opt_.crop_samples / hop);
    const std::size_t margin = 2;  // covers the upsampler kernel reach

    auto& store = model_.params();
    store.zero_grad();
    TrainLogRecord rec;
    rec.step = s;
    const int b = opt_.batch_size;
    for (int j = 0; j < b; ++j) {
        const Utterance& u = data_.items[static_cast<std::size_t>(s * b + j) % data_.size()];
        try {
            Rng rng(mix_seed(opt_.seed, static_cast<std::uint64_t>(s),
                             static_cast<std::uint64_t>(j)));
            const CropWindow crop = choose_crop(u.features.rows(), crop_frames, hop, rng);
            const std::size_t f0 = crop.frame_begin;
            const std::size_t cf = crop.frame_count;
            const std::size_t f_lo = f0 >= margin ? f0 - margin : 0;
            const std::size_t f_hi = std::min(u.features.rows(), f0 + cf + margin);

            autodiff::Tape<float> tape;
            autodiff::Tensor<float> mel_slice(
                autodiff::Shape{f_hi - f_lo, u.features.cols()},
                std::vector<float>(&u.features.at(f_lo, 0),
                                   &u.features.at(f_hi - 1, 0) + u.features.cols()));
            auto cond_full = model_.upsample(&tape, mel_slice);
            const std::size_t off = (f0 - f_lo) * static_cast<std::size_t>(hop);
            auto cond = autodiff::slice_rows(&tape, cond_full, off, off + crop.sample_count);

            std::vector<float> scaled(crop.sample_count);
            for (std::size_t i = 0; i < scaled.size(); ++i)
                scaled[i] = u.audio[crop.sample_begin + i] * static_cast<float>(cfg.target_scale);

            auto mol = model_.forward(&tape, scaled, cond);
            auto nll = model_.nll(&tape, mol, scaled);
            auto loss = autodiff::mean(&tape, nll);
            check_finite_loss(loss[0], s, u.id);
            auto scaled_loss = autodiff::scale(&tape, loss, 1.0f / b);
            tape.backward(scaled_loss);
            rec.nll += loss[0] / b;
            rec.loss += loss[0] / b;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("step " + std::to_string(s) + " batch item " + u.id + ": " +
                                     e.what());
        }
    }
    if (opt_.grad_clip_norm > 0.0) autodiff::clip_global_norm(store, opt_.grad_clip_norm);
    rec.lr = opt_.lr;
    adam_.step(store, opt_.lr);
    ema_.update(store);
    ++step_;
    rec.wall_ms = ms_since(t0);
    return rec;
}

TrainLogRecord VocoderTrainer::run() {
    TrainLogRecord rec;
    while (step_ < opt_.max_steps) {
        rec = train_step();
        logger_.log(rec, /*vocoder_stage=*/true);
        if (!opt_.out_dir.empty() &&
            (step_ % opt_.checkpoint_every == 0 || step_ == opt_.max_steps))
            save_checkpoint(checkpoint_path(step_));
    }
    return rec;
}

void VocoderTrainer::save_checkpoint(const std::string& path) {
    autodiff::Checkpoint ckpt;
    autodiff::add_store(ckpt, model_.params(), "model.");
    autodiff::add_adam(ckpt, adam_, model_.params());
    autodiff::add_ema(ckpt, ema_, model_.params());
    ckpt.add_scalar_i64("trainer.step", step_);
    ckpt.save(path);
}

void VocoderTrainer::load_checkpoint(const std::string& path) {
    const auto ckpt = autodiff::Checkpoint::load(path);
    autodiff::load_store(ckpt, model_.params(), "model.");
    autodiff::load_adam(ckpt, adam_, model_.params());
    autodiff::load_ema(ckpt, ema_, model_.params());
    step_ = ckpt.scalar_i64("trainer.step");
}

CropWindow choose_crop(std::size_t total_frames, std::size_t crop_frames, int hop_samples,
                       Rng& rng) {
    CropWindow w;
    w.frame_count = std::min(crop_frames, total_frames);
    w.frame_begin = total_frames > w.frame_count
                        ? rng.index(total_frames - w.frame_count + 1)
                        : 0;
    w.sample_begin = w.frame_begin * static_cast<std::size_t>(hop_samples);
    w.sample_count = w.frame_count * static_cast<std::size_t>(hop_samples);
    return w;
}

// ------------------------------------------------------------------- GTA

std::vector<pipeline::FeatureTensor> make_gta_features(predictor::PredictorModel<float>& model,
                                                       const Dataset& data, std::uint64_t seed) {
    std::vector<pipeline::FeatureTensor> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Utterance& u = data.items[i];
        auto pred = model.forward_teacher_forced(nullptr, u.char_ids, u.features,
                                                 /*training=*/false, mix_seed(seed, i));
        if (pred.after.rows() != u.features.rows())
            throw std::runtime_error("internal error: GTA frame count mismatch for " + u.id);
        pipeline::FeatureTensor t;
        t.dims = {pred.after.rows(), pred.after.cols()};
        t.data.assign(pred.after.value().begin(), pred.after.value().end());
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace melsynth::train
