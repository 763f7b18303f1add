#include "acousticpose/eval/metrics.hpp"

#include <cmath>

#include "acousticpose/common/error.hpp"

namespace acousticpose::eval {

namespace {

std::size_t frame_count(std::span<const double> predicted, std::span<const double> truth, std::size_t joints) {
    if (predicted.size() != truth.size()) {
        throw DimensionError("prediction has " + std::to_string(predicted.size()) + " values, ground truth " +
                             std::to_string(truth.size()));
    }
    if (joints == 0 || truth.size() % (joints * 3) != 0) throw DimensionError("pose buffer is not [frames x joints x 3]");
    if (truth.empty()) throw EmptyInputError("no poses to score");
    return truth.size() / (joints * 3);
}

double dist(const double* a, const double* b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

JointErrors joint_errors(std::span<const double> predicted, std::span<const double> truth, std::size_t joints) {
    const std::size_t frames = frame_count(predicted, truth, joints);
    JointErrors r;
    r.frames = frames;
    r.per_joint.assign(joints, 0.0);
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = predicted[i] - truth[i];
        se += d * d;
        ae += std::abs(d);
    }
    r.rmse = std::sqrt(se / static_cast<double>(truth.size()));
    r.mae = ae / static_cast<double>(truth.size());
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t j = 0; j < joints; ++j) {
            const std::size_t o = (f * joints + j) * 3;
            r.per_joint[j] += dist(predicted.data() + o, truth.data() + o);
        }
    }
    double total = 0.0;
    for (auto& v : r.per_joint) {
        total += v;
        v /= static_cast<double>(frames);
    }
    r.mpjpe = total / static_cast<double>(frames * joints);
    return r;
}

PckResult pckh(std::span<const double> predicted, std::span<const double> truth, std::size_t joints, std::size_t head,
               std::size_t neck, double ratio) {
    const std::size_t frames = frame_count(predicted, truth, joints);
    if (head >= joints || neck >= joints) throw DimensionError("head/neck index outside the skeleton");
    PckResult r;
    for (std::size_t f = 0; f < frames; ++f) {
        const double* t = truth.data() + f * joints * 3;
        const double* p = predicted.data() + f * joints * 3;
        const double bone = dist(t + head * 3, t + neck * 3);
        if (!(bone > 0.0)) {
            ++r.excluded_frames;
            continue;
        }
        for (std::size_t j = 0; j < joints; ++j) {
            r.correct += dist(p + j * 3, t + j * 3) < ratio * bone;
            ++r.counted;
        }
    }
    r.pckh = r.counted ? static_cast<double>(r.correct) / static_cast<double>(r.counted) : 0.0;
    return r;
}

MetricReport metric_report(std::span<const double> predicted, std::span<const double> truth, std::size_t joints,
                           std::size_t windows) {
    const auto e = joint_errors(predicted, truth, joints);
    const auto p = pckh(predicted, truth, joints);
    MetricReport r;
    r.rmse = e.rmse;
    r.mae = e.mae;
    r.mpjpe = e.mpjpe;
    r.per_joint = e.per_joint;
    r.pckh05 = p.pckh;
    r.windows = windows;
    r.frames = e.frames;
    r.excluded_frames = p.excluded_frames;
    return r;
}

nlohmann::json MetricReport::to_json() const {
    return {{"rmse", rmse},     {"mae", mae},       {"mpjpe", mpjpe},
            {"pckh05", pckh05}, {"windows", windows}, {"frames", frames},
            {"excluded_frames", excluded_frames}, {"per_joint", per_joint}};
}

}  // namespace acousticpose::eval
