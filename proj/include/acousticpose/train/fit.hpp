#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/eval/metrics.hpp"
#include "acousticpose/model/bgm2pose.hpp"
#include "acousticpose/train/optim.hpp"
#include "acousticpose/train/windows.hpp"

namespace acousticpose::train {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    double lr_max = 0.003;
    double lr_min = 0.001;
    double ema_decay = 0.999;
    // Use min(decay, (1 + k) / (10 + k)) for the k-th update so short runs are not dominated by the init.
    bool ema_warmup = true;
    model::LossWeights weights;
    AdamConfig adam;
    std::size_t group_size = 4;
    std::size_t checkpoint_every = 5;
    std::uint64_t seed = 0;
    // Checkpoint precision; f64 is required for bit-exact resume.
    bool f64 = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double pose = 0.0, smooth = 0.0, cpe = 0.0, total = 0.0;  // means over the epoch's steps
    std::size_t rejected_steps = 0;
    std::optional<eval::MetricReport> val;
};

struct FitOptions {
    // Empty: keep everything in memory.
    std::filesystem::path out_dir;
    std::filesystem::path resume_from;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
    std::vector<EpochRecord> history;
    std::vector<ad::NamedArray> ema;
    std::size_t steps = 0;
    double best_val_mae = INFINITY;
    std::vector<std::string> warnings;
};

// Trains in place. `val` may be null. Throws NumericalError (after writing
// diagnostic.bin when out_dir is set) if the loss stops being finite.
FitResult fit(model::Bgm2Pose& model, const WindowSet& train, const WindowSet* val, const TrainConfig& cfg,
              const FitOptions& opt = {});

// Predicted poses for every window, flat [windows x frames x pose_dims].
std::vector<double> predict(const model::Bgm2Pose& model, const WindowSet& windows, std::size_t batch_size = 64);

eval::MetricReport evaluate_windows(const model::Bgm2Pose& model, const WindowSet& windows, std::size_t batch_size = 64);

// Runs `fn` with the model temporarily holding `arrays`, then restores its own parameters.
void with_parameters(model::Bgm2Pose& model, const std::vector<ad::NamedArray>& arrays, const std::function<void()>& fn);

struct CheckpointState {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::uint64_t ema_updates = 0;
};

void save_checkpoint(const std::filesystem::path& path, const model::Bgm2Pose& model,
                     const std::vector<ad::NamedArray>& ema, const AdamState& adam, const TrainConfig& cfg,
                     const CheckpointState& state);

// Rebuilds a model from a checkpoint; with `use_ema` the EMA weights are loaded when present.
model::Bgm2Pose load_model(const std::filesystem::path& path, bool use_ema = true);

}  // namespace acousticpose::train
