#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "acousticpose/eval/pca.hpp"
#include "acousticpose/signal/pipeline.hpp"
#include "acousticpose/sim/bgm.hpp"
#include "acousticpose/sim/render.hpp"
#include "acousticpose/train/windows.hpp"

namespace acousticpose::cli {

struct SeparabilityOptions {
    std::size_t clusters = 5;
    std::size_t windows_per_cluster = 6;
    // Divides the STFT hop so every frame sees whole, identically phased sweeps.
    double chirp_period_s = 0.025;
    double pose_jitter = 0.02;  // normalised units, per window
    double noise_snr_db = 40.0;
};

struct SeparabilityStudy {
    eval::SeparabilityReport chirp;
    eval::SeparabilityReport bgm;
};

// Renders the same jittered pose clusters under a periodic chirp and under `bgm`,
// projects the recorded-audio features of every window to 2-D and scores how well
// the pose clusters separate in each condition.
SeparabilityStudy separability_study(const sim::SceneConfig& scene, const sim::BgmSpec& bgm,
                                     const signal::FeatureConfig& features, const SeparabilityOptions& options,
                                     std::uint64_t seed);

// Per-coordinate mean pose over every frame of `windows`, [pose_dims].
std::vector<double> mean_pose(const train::WindowSet& windows);
// `pose` repeated for every frame of every window of `windows`.
std::vector<double> tile_pose(const std::vector<double>& pose, const train::WindowSet& windows);

}  // namespace acousticpose::cli
