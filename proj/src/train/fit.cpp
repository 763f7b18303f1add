#include "acousticpose/train/fit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
    if (!(lr_min > 0.0) || !(lr_max >= lr_min)) throw ConfigError("train needs lr_max >= lr_min > 0");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("train.ema_decay must lie in [0, 1]");
    if (group_size < 2) throw ConfigError("train.group_size must be at least 2");
    if (checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
        throw ConfigError("invalid Adam hyper-parameters");
    }
    weights.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"epochs", epochs},
            {"lr_max", lr_max},
            {"lr_min", lr_min},
            {"ema_decay", ema_decay},
            {"ema_warmup", ema_warmup},
            {"w_alpha", weights.w_alpha},
            {"w_beta", weights.w_beta},
            {"tau", weights.tau},
            {"adam_beta1", adam.beta1},
            {"adam_beta2", adam.beta2},
            {"adam_eps", adam.eps},
            {"group_size", group_size},
            {"checkpoint_every", checkpoint_every},
            {"seed", seed},
            {"f64", f64}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        j.at("batch_size").get_to(c.batch_size);
        j.at("epochs").get_to(c.epochs);
        j.at("lr_max").get_to(c.lr_max);
        j.at("lr_min").get_to(c.lr_min);
        j.at("ema_decay").get_to(c.ema_decay);
        j.at("ema_warmup").get_to(c.ema_warmup);
        j.at("w_alpha").get_to(c.weights.w_alpha);
        j.at("w_beta").get_to(c.weights.w_beta);
        j.at("tau").get_to(c.weights.tau);
        j.at("adam_beta1").get_to(c.adam.beta1);
        j.at("adam_beta2").get_to(c.adam.beta2);
        j.at("adam_eps").get_to(c.adam.eps);
        j.at("group_size").get_to(c.group_size);
        j.at("checkpoint_every").get_to(c.checkpoint_every);
        j.at("seed").get_to(c.seed);
        j.at("f64").get_to(c.f64);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<double> predict(const model::Bgm2Pose& model, const WindowSet& windows, std::size_t batch_size) {
    ad::NoGradGuard no_grad;
    std::vector<double> out;
    out.reserve(windows.p.size());
    for (std::size_t s = 0; s < windows.size(); s += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, windows.size() - s));
        std::iota(idx.begin(), idx.end(), s);
        const auto y = model.forward(windows.batch_x(idx), windows.batch_m(idx), false);
        out.insert(out.end(), y.poses.data().begin(), y.poses.data().end());
    }
    return out;
}

eval::MetricReport evaluate_windows(const model::Bgm2Pose& model, const WindowSet& windows, std::size_t batch_size) {
    if (windows.empty()) throw EmptyInputError("cannot evaluate an empty split");
    const auto pred = predict(model, windows, batch_size);
    return eval::metric_report(pred, windows.p, windows.pose_dims / 3, windows.size());
}

void with_parameters(model::Bgm2Pose& model, const std::vector<ad::NamedArray>& arrays, const std::function<void()>& fn) {
    const auto own = model.params().snapshot();
    model.params().restore(arrays);
    try {
        fn();
    } catch (...) {
        model.params().restore(own);
        throw;
    }
    model.params().restore(own);
}

void save_checkpoint(const fs::path& path, const model::Bgm2Pose& model, const std::vector<ad::NamedArray>& ema,
                     const AdamState& adam, const TrainConfig& cfg, const CheckpointState& state) {
    auto arrays = model.params().snapshot();
    for (const auto& a : ema) arrays.push_back({"ema." + a.name, a.shape, a.values});
    for (auto& a : adam.snapshot(model.params())) arrays.push_back(std::move(a));
    const nlohmann::json meta{{"format", "acousticpose-checkpoint"},
                              {"epoch", state.epoch},
                              {"step", state.step},
                              {"adam_step", adam.step},
                              {"ema_updates", state.ema_updates},
                              {"model", model.config().to_json()},
                              {"train", cfg.to_json()}};
    ad::save_tensors(path, arrays, cfg.f64 ? ad::DType::F64 : ad::DType::F32, meta);
}

model::Bgm2Pose load_model(const fs::path& path, bool use_ema) {
    const auto file = ad::load_tensors(path);
    if (!file.meta.contains("model")) throw CheckpointError(path.string() + " carries no model config");
    model::Bgm2Pose m(model::FaConfig::from_json(file.meta["model"]), 0);
    auto ema = file.with_prefix("ema.");
    if (use_ema && !ema.empty()) {
        m.params().restore(ema);
    } else {
        std::vector<ad::NamedArray> plain;
        for (const auto& a : file.arrays) {
            if (a.name.rfind("ema.", 0) != 0 && a.name.rfind("adam.", 0) != 0) plain.push_back(a);
        }
        m.params().restore(plain);
    }
    return m;
}

namespace {

struct CsvLog {
    std::ofstream out;

    CsvLog(const fs::path& path, bool append) {
        const bool fresh = !append || !fs::exists(path);
        out.open(path, append ? std::ios::app : std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        if (fresh) out << "epoch,step,lr,L_pose,L_smooth,L_cpe,L_total,val_rmse,val_mae,val_pckh05\n";
    }

    void row(std::size_t epoch, std::size_t step, double lr, double pose, double smooth, double cpe, double total,
             const eval::MetricReport* val) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.17g,%.17g,%.17g,%.17g", epoch, step, lr, pose, smooth, cpe, total);
        out << buf;
        if (val) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", val->rmse, val->mae, val->pckh05);
            out << buf << '\n';
        } else {
            out << ",,,\n";
        }
        out.flush();
    }
};

}  // namespace

FitResult fit(model::Bgm2Pose& model, const WindowSet& train, const WindowSet* val, const TrainConfig& cfg,
              const FitOptions& opt) {
    cfg.validate();
    if (train.empty()) throw EmptyInputError("training split is empty");
    const auto& mc = model.config();
    if (train.bins != mc.mel_bins || train.frames != mc.frames || train.pose_dims != mc.pose_dims()) {
        throw DimensionError("training windows do not match the model config");
    }

    FitResult result;
    std::vector<BatchPlan> plans;
    std::size_t total_steps = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        plans.push_back(hard_negative_batches(train.bgm, cfg.batch_size, derive_seed(cfg.seed, {0xE90C, e}), cfg.group_size));
        total_steps += plans.back().batches.size();
    }
    if (!plans.empty() && !plans[0].warning.empty()) result.warnings.push_back(plans[0].warning);

    AdamState adam;
    result.ema = model.params().snapshot();
    CheckpointState state;
    std::size_t start_epoch = 0;
    if (!opt.resume_from.empty()) {
        const auto file = ad::load_tensors(opt.resume_from);
        std::vector<ad::NamedArray> plain;
        for (const auto& a : file.arrays) {
            if (a.name.rfind("ema.", 0) != 0 && a.name.rfind("adam.", 0) != 0) plain.push_back(a);
        }
        model.params().restore(plain);
        result.ema = file.with_prefix("ema.");
        ema_update(result.ema, model.params(), 1.0);  // validates names and shapes
        adam.restore(model.params(), file.with_prefix("adam.m."), file.with_prefix("adam.v."),
                     file.meta.at("adam_step").get<std::uint64_t>());
        state.epoch = file.meta.at("epoch").get<std::size_t>();
        state.step = file.meta.at("step").get<std::size_t>();
        state.ema_updates = file.meta.at("ema_updates").get<std::uint64_t>();
        start_epoch = state.epoch;
    }

    std::optional<CsvLog> log;
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        log.emplace(opt.out_dir / "metrics.csv", !opt.resume_from.empty());
        if (cfg.epochs == 0) save_checkpoint(opt.out_dir / "final.bin", model, result.ema, adam, cfg, state);
    }

    for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch + 1;
        const auto& plan = plans[epoch];
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            const auto& idx = plan.batches[b];
            const double lr = cosine_lr(state.step, total_steps > 0 ? total_steps - 1 : 0, cfg.lr_max, cfg.lr_min);
            model.params().zero_grad();
            const auto losses =
                model::compute_losses(model, train.batch_x(idx), train.batch_m(idx), train.batch_p(idx), cfg.weights);
            const double total = losses.total.item();
            if (!std::isfinite(total)) {
                if (!opt.out_dir.empty()) {
                    save_checkpoint(opt.out_dir / "diagnostic.bin", model, result.ema, adam, cfg, state);
                }
                throw NumericalError("loss became non-finite at epoch " + std::to_string(epoch + 1) + ", step " +
                                     std::to_string(state.step));
            }
            losses.total.backward();
            if (!adam_step(model.params(), adam, lr, cfg.adam)) {
                ++rec.rejected_steps;
            } else {
                const double k = static_cast<double>(state.ema_updates);
                const double decay = cfg.ema_warmup ? std::min(cfg.ema_decay, (1.0 + k) / (10.0 + k)) : cfg.ema_decay;
                ema_update(result.ema, model.params(), decay);
                ++state.ema_updates;
            }
            model.params().zero_grad();
            ++state.step;
            ++rec.steps;
            rec.pose += losses.pose.item();
            rec.smooth += losses.smooth.item();
            rec.cpe += losses.cpe.item();
            rec.total += total;

            const bool last = b + 1 == plan.batches.size();
            if (last && val && !val->empty()) {
                with_parameters(model, result.ema, [&] { rec.val = evaluate_windows(model, *val, cfg.batch_size); });
            }
            if (log) {
                log->row(epoch + 1, state.step, lr, losses.pose.item(), losses.smooth.item(), losses.cpe.item(), total,
                         last && rec.val ? &*rec.val : nullptr);
            }
        }
        const double n = static_cast<double>(std::max<std::size_t>(rec.steps, 1));
        rec.pose /= n;
        rec.smooth /= n;
        rec.cpe /= n;
        rec.total /= n;
        state.epoch = epoch + 1;

        if (!opt.out_dir.empty()) {
            if (state.epoch % cfg.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof name, "ckpt_epoch_%03zu.bin", state.epoch);
                save_checkpoint(opt.out_dir / name, model, result.ema, adam, cfg, state);
            }
            if (rec.val && rec.val->mae < result.best_val_mae) {
                save_checkpoint(opt.out_dir / "best.bin", model, result.ema, adam, cfg, state);
            }
            if (state.epoch == cfg.epochs) save_checkpoint(opt.out_dir / "final.bin", model, result.ema, adam, cfg, state);
        }
        if (rec.val) result.best_val_mae = std::min(result.best_val_mae, rec.val->mae);
        if (opt.on_epoch) opt.on_epoch(rec);
        result.history.push_back(std::move(rec));
    }
    result.steps = state.step;
    return result;
}

}  // namespace acousticpose::train
