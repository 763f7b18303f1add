#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "acousticpose/model/bgm2pose.hpp"
#include "acousticpose/signal/pipeline.hpp"
#include "acousticpose/sim/dataset.hpp"
#include "acousticpose/train/fit.hpp"

namespace acousticpose::cli {

struct EvalConfig {
    std::string protocol = "single_music";
    std::string subset = "test";
    std::size_t batch_size = 64;
    bool use_ema = true;
    bool svg = true;
};

// One file drives a whole experiment. Sections: [scene], [[bgm]] (one per track),
// [dataset], [features], [model], [train], [eval]; `seed` sits at the top level.
struct RunConfig {
    std::uint64_t seed = 0;
    sim::DatasetConfig dataset;  // includes scene and bgm list
    signal::FeatureConfig features;
    std::string stats_protocol = "single_music";
    model::FaConfig model;
    train::TrainConfig train;
    std::string train_protocol = "single_music";
    EvalConfig eval;

    static RunConfig defaults();

    // Propagates the top-level seed into the dataset and training configs.
    void set_seed(std::uint64_t s);
    std::uint64_t model_seed() const;
    void validate() const;
};

// Throws ConfigError on syntax errors, unknown sections or keys, and bad values.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
// Every field, written so that parse_run_config(to_toml(c)) == c.
std::string to_toml(const RunConfig& config);

}  // namespace acousticpose::cli
