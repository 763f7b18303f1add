#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "acousticpose/autodiff/tensor.hpp"
#include "acousticpose/signal/features.hpp"

namespace acousticpose::train {

// Fixed-length training windows held contiguously in memory.
struct WindowSet {
    std::size_t in_channels = 11;
    std::size_t music_channels = 2;
    std::size_t bins = 0;
    std::size_t frames = 12;
    std::size_t pose_dims = 63;

    std::vector<double> x;  // per window [in_channels x bins x frames]
    std::vector<double> m;  // per window [music_channels x bins x frames]
    std::vector<double> p;  // per window [frames x pose_dims]
    std::vector<std::size_t> bgm;
    std::vector<std::string> ids;
    std::vector<std::string> records;

    std::size_t size() const { return bgm.size(); }
    bool empty() const { return bgm.empty(); }

    // Throws DimensionError when shapes disagree with the set (the first window fixes bins).
    void add(const signal::FeatureTensor& input, const signal::FeatureTensor& music, std::span<const double> poses,
             std::size_t bgm_id, std::string id, std::string record);

    ad::Tensor batch_x(std::span<const std::size_t> idx) const;
    ad::Tensor batch_m(std::span<const std::size_t> idx) const;
    ad::Tensor batch_p(std::span<const std::size_t> idx) const;

    WindowSet subset(std::span<const std::size_t> idx) const;
    std::span<const double> poses(std::size_t i) const { return {p.data() + i * frames * pose_dims, frames * pose_dims}; }
};

}  // namespace acousticpose::train
