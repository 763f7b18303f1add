#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace acousticpose::sim {

using Vec3 = Eigen::Vector3d;

inline constexpr std::size_t kJoints = 21;
inline constexpr std::size_t kPoseDims = kJoints * 3;
inline constexpr double kPoseFps = 20.0;

enum Joint : std::size_t {
    Hip, Spine, Chest, Neck, Head,
    LShoulder, LElbow, LWrist, LHand,
    RShoulder, RElbow, RWrist, RHand,
    LHip, LKnee, LAnkle, LToe,
    RHip, RKnee, RAnkle, RToe,
};

// Body frame: x forward (towards the microphone), y to the subject's left, z up.
struct Skeleton {
    std::array<std::string_view, kJoints> names;
    std::array<int, kJoints> parents;        // -1 for the hip root
    std::array<Vec3, kJoints> rest_offsets;  // offset from parent, normalised units
    std::array<double, kJoints> scatter_weight;

    static const Skeleton& standard();
    std::size_t head() const { return Head; }
    std::size_t neck() const { return Neck; }
};

// Normalised joint positions, [frames x 21 x 3] row-major.
struct PoseSequence {
    std::size_t frames = 0;
    double fps = kPoseFps;
    std::vector<double> coords;

    PoseSequence() = default;
    PoseSequence(std::size_t n, double rate = kPoseFps) : frames(n), fps(rate), coords(n * kPoseDims, 0.0) {}

    Vec3 joint(std::size_t f, std::size_t j) const {
        const double* p = &coords[(f * kJoints + j) * 3];
        return {p[0], p[1], p[2]};
    }
    void set_joint(std::size_t f, std::size_t j, const Vec3& v) {
        double* p = &coords[(f * kJoints + j) * 3];
        p[0] = v.x();
        p[1] = v.y();
        p[2] = v.z();
    }
    double duration() const { return static_cast<double>(frames) / fps; }
    PoseSequence slice(std::size_t first, std::size_t count) const;
    static PoseSequence constant(const PoseSequence& source, std::size_t frame, std::size_t count);
};

// Shift every frame so the hip sits at the origin and scale it so the
// spine-hip distance is exactly 1.
void normalize_pose(PoseSequence& poses);

enum class Motion { Still, TPose, Squat, Walk, RandomSmooth };

std::string_view motion_name(Motion m);
Motion parse_motion(std::string_view name);
std::vector<Motion> all_motions();

// Per-subject anatomy as segment length multipliers.
struct SubjectProfile {
    double torso_scale = 1.0;
    double arm_scale = 1.0;
    double leg_scale = 1.0;

    static SubjectProfile neutral() { return {}; }
    static SubjectProfile sample(std::uint64_t seed);
};

inline constexpr double kMaxJointSpeed = 4.0;  // normalised units per second

// Deterministic in (motion, duration, seed, subject). Every frame is normalised
// and frame-to-frame joint speeds stay below kMaxJointSpeed.
PoseSequence gen_pose_sequence(Motion motion, double duration_s, std::uint64_t seed,
                               const SubjectProfile& subject = SubjectProfile::neutral());

double max_joint_speed(const PoseSequence& poses);

}  // namespace acousticpose::sim
