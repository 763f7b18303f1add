#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "acousticpose/autodiff/params.hpp"

namespace acousticpose::train {

struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::vector<std::size_t>> bgm_ids;  // per batch, aligned with `batches`
    // Set when the dataset is smaller than one batch.
    std::string warning;
};

// Partitions items into batches of `batch_size` so that clips sensed with the same
// BGM arrive together in groups of up to `group_size`. Every batch holds at least
// one same-BGM pair whenever some BGM has two or more items. Deterministic per seed.
BatchPlan hard_negative_batches(const std::vector<std::size_t>& bgm_ids, std::size_t batch_size, std::uint64_t seed,
                                std::size_t group_size = 4);

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m, v;  // aligned with ParamStore entries

    std::vector<ad::NamedArray> snapshot(const ad::ParamStore& params) const;
    void restore(const ad::ParamStore& params, const std::vector<ad::NamedArray>& m_arrays,
                 const std::vector<ad::NamedArray>& v_arrays, std::uint64_t steps);
};

// One bias-corrected Adam update. Parameters without a gradient see a zero gradient.
// Returns false, leaving parameters and state untouched, if any gradient is not finite.
bool adam_step(ad::ParamStore& params, AdamState& state, double lr, const AdamConfig& cfg = {});

// shadow <- decay * shadow + (1 - decay) * params. Throws CheckpointError on name or shape mismatch.
void ema_update(std::vector<ad::NamedArray>& shadow, const ad::ParamStore& params, double decay);

}  // namespace acousticpose::train
