#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/signal/pipeline.hpp"
#include "acousticpose/sim/dataset.hpp"
#include "acousticpose/train/windows.hpp"

namespace acousticpose::cli {

struct ClipFeatures {
    std::string id;
    std::size_t bgm_id = 0;
    signal::RawFeatures raw;
    std::vector<double> poses;  // [frames x 63]
    std::size_t frames = 0;     // usable frames shared by audio and poses
};

// Features for one record; poses and audio frames may differ by one.
ClipFeatures extract_clip(const std::string& id, std::size_t bgm_id, const signal::BFormatClip& recorded,
                          const signal::StereoClip& music, const sim::PoseSequence& poses,
                          const signal::FeatureExtractor& extractor);

std::vector<ClipFeatures> extract_records(const std::vector<sim::DatasetRecord>& records,
                                          const signal::FeatureExtractor& extractor);

// Pooled statistics over the clips named in `ids` (all clips when `ids` is empty).
signal::FeatureStats fit_stats(const std::vector<ClipFeatures>& clips, const std::vector<std::string>& ids);

// Standardised, windowed features of the clips named in `ids`, in that order.
train::WindowSet make_windows(const std::vector<ClipFeatures>& clips, const std::vector<std::string>& ids,
                              const signal::FeatureStats& stats, const signal::FeatureConfig& config);

struct FeaturizeSummary {
    std::size_t records = 0;
    std::size_t windows = 0;
    std::vector<std::pair<std::string, std::string>> failures;  // record id, reason
};

// Reads every record of the dataset at `dataset_dir`, fits standardisation on the
// training subset of `stats_protocol`, and writes one feature file per window plus
// `index.json` to `out_dir`. Records that fail to load are listed, not fatal.
// Music (and recordings) at another sample rate are resampled to the feature rate.
FeaturizeSummary featurize_dataset(const std::filesystem::path& dataset_dir, const std::filesystem::path& out_dir,
                                   const signal::FeatureConfig& config, const std::string& stats_protocol);

// Windows of `subset` under `protocol` from a featurize output directory.
train::WindowSet load_windows(const std::filesystem::path& feature_dir, const std::string& protocol,
                              const std::string& subset);

nlohmann::json read_index(const std::filesystem::path& feature_dir);

// Stable 64-bit FNV-1a, used for cache keys.
std::uint64_t fnv1a(std::string_view text);

}  // namespace acousticpose::cli
