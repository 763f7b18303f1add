#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace acousticpose::eval {

inline constexpr std::size_t kHeadJoint = 4;
inline constexpr std::size_t kNeckJoint = 3;

// Poses are flat [frames x joints x 3].
struct JointErrors {
    double rmse = 0.0;   // sqrt(mean squared coordinate error)
    double mae = 0.0;    // mean absolute coordinate error
    double mpjpe = 0.0;  // mean per-joint Euclidean distance
    std::vector<double> per_joint;  // mean Euclidean distance of each joint
    std::size_t frames = 0;
};

JointErrors joint_errors(std::span<const double> predicted, std::span<const double> truth, std::size_t joints);

struct PckResult {
    double pckh = 0.0;
    std::size_t correct = 0;
    std::size_t counted = 0;
    std::size_t excluded_frames = 0;  // ground-truth head and neck coincide
};

// Joint is correct when its error is below ratio * |head - neck| of the ground truth frame.
PckResult pckh(std::span<const double> predicted, std::span<const double> truth, std::size_t joints,
               std::size_t head = kHeadJoint, std::size_t neck = kNeckJoint, double ratio = 0.5);

struct MetricReport {
    double rmse = 0.0, mae = 0.0, mpjpe = 0.0, pckh05 = 0.0;
    std::vector<double> per_joint;
    std::size_t windows = 0, frames = 0, excluded_frames = 0;

    nlohmann::json to_json() const;
};

MetricReport metric_report(std::span<const double> predicted, std::span<const double> truth, std::size_t joints,
                           std::size_t windows);

}  // namespace acousticpose::eval
