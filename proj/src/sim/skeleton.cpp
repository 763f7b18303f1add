#include "acousticpose/sim/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::sim {

using Mat3 = Eigen::Matrix3d;

const Skeleton& Skeleton::standard() {
    static const Skeleton s = [] {
        Skeleton k;
        k.names = {"hip",        "spine",     "chest",     "neck",     "head",      "l_shoulder", "l_elbow",
                   "l_wrist",    "l_hand",    "r_shoulder", "r_elbow",  "r_wrist",   "r_hand",     "l_hip",
                   "l_knee",     "l_ankle",   "l_toe",     "r_hip",    "r_knee",    "r_ankle",    "r_toe"};
        k.parents = {-1, Hip, Spine, Chest, Neck, Chest, LShoulder, LElbow, LWrist, Chest, RShoulder,
                     RElbow, RWrist, Hip, LHip, LKnee, LAnkle, Hip, RHip, RKnee, RAnkle};
        k.rest_offsets = {Vec3(0, 0, 0),       Vec3(0, 0, 1.0),     Vec3(0, 0, 1.0),    Vec3(0, 0, 0.9),
                          Vec3(0, 0, 0.5),     Vec3(0, 0.75, 0.7),  Vec3(0, 0, -1.2),   Vec3(0, 0, -1.1),
                          Vec3(0, 0, -0.35),   Vec3(0, -0.75, 0.7), Vec3(0, 0, -1.2),   Vec3(0, 0, -1.1),
                          Vec3(0, 0, -0.35),   Vec3(0, 0.4, -0.15), Vec3(0, 0, -1.8),   Vec3(0, 0, -1.75),
                          Vec3(0.6, 0, -0.25), Vec3(0, -0.4, -0.15), Vec3(0, 0, -1.8),  Vec3(0, 0, -1.75),
                          Vec3(0.6, 0, -0.25)};
        // Torso scatters more than limbs.
        k.scatter_weight = {1.0, 1.0, 1.0, 0.5, 0.7, 0.5, 0.4, 0.3, 0.3, 0.5, 0.4,
                            0.3, 0.3, 0.6, 0.5, 0.3, 0.2, 0.6, 0.5, 0.3, 0.2};
        return k;
    }();
    return s;
}

PoseSequence PoseSequence::slice(std::size_t first, std::size_t count) const {
    if (first + count > frames) throw DimensionError("pose slice out of range");
    PoseSequence out(count, fps);
    std::copy_n(coords.begin() + static_cast<std::ptrdiff_t>(first * kPoseDims), count * kPoseDims,
                out.coords.begin());
    return out;
}

PoseSequence PoseSequence::constant(const PoseSequence& source, std::size_t frame, std::size_t count) {
    PoseSequence out(count, source.fps);
    for (std::size_t f = 0; f < count; ++f) {
        std::copy_n(source.coords.begin() + static_cast<std::ptrdiff_t>(frame * kPoseDims), kPoseDims,
                    out.coords.begin() + static_cast<std::ptrdiff_t>(f * kPoseDims));
    }
    return out;
}

void normalize_pose(PoseSequence& poses) {
    for (std::size_t f = 0; f < poses.frames; ++f) {
        const Vec3 hip = poses.joint(f, Hip);
        const double len = (poses.joint(f, Spine) - hip).norm();
        if (!(len > 0.0)) throw DataError("degenerate spine-hip segment");
        for (std::size_t j = 0; j < kJoints; ++j) poses.set_joint(f, j, (poses.joint(f, j) - hip) / len);
    }
}

std::string_view motion_name(Motion m) {
    switch (m) {
        case Motion::Still: return "still";
        case Motion::TPose: return "t-pose";
        case Motion::Squat: return "squat";
        case Motion::Walk: return "walk";
        case Motion::RandomSmooth: return "random-smooth";
    }
    return "?";
}

Motion parse_motion(std::string_view name) {
    for (auto m : all_motions()) {
        if (motion_name(m) == name) return m;
    }
    throw ConfigError("unknown motion '" + std::string(name) + "'");
}

std::vector<Motion> all_motions() {
    return {Motion::Still, Motion::TPose, Motion::Squat, Motion::Walk, Motion::RandomSmooth};
}

SubjectProfile SubjectProfile::sample(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x5B1EC7}));
    SubjectProfile p;
    p.torso_scale = uniform(rng, 0.9, 1.1);
    p.arm_scale = uniform(rng, 0.9, 1.1);
    p.leg_scale = uniform(rng, 0.9, 1.1);
    return p;
}

namespace {

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

// Swings a downward-hanging limb forward (+x) for positive angles.
Mat3 flex_limb(double a) { return rot_y(-a); }
// Bends an upward segment forward for positive angles.
Mat3 bend_torso(double a) { return rot_y(a); }

// Local joint rotations for one frame.
struct Articulation {
    std::array<Mat3, kJoints> local;
    Articulation() { local.fill(Mat3::Identity()); }
};

std::array<Vec3, kJoints> forward_kinematics(const Articulation& a, const SubjectProfile& subject) {
    const auto& sk = Skeleton::standard();
    std::array<Vec3, kJoints> pos;
    std::array<Mat3, kJoints> world;
    for (std::size_t j = 0; j < kJoints; ++j) {
        double scale = 1.0;
        if (j == Chest || j == Neck || j == Head || j == LShoulder || j == RShoulder) scale = subject.torso_scale;
        if ((j >= LElbow && j <= LHand) || (j >= RElbow && j <= RHand)) scale = subject.arm_scale;
        if (j >= LHip) scale = subject.leg_scale;
        const int p = sk.parents[j];
        if (p < 0) {
            pos[j] = Vec3::Zero();
            world[j] = a.local[j];
        } else {
            pos[j] = pos[p] + world[p] * (sk.rest_offsets[j] * scale);
            world[j] = world[p] * a.local[j];
        }
    }
    return pos;
}

// Resting posture shared by all motions, varied per seed.
struct Posture {
    double elbow_l, elbow_r, abd_l, abd_r, bend, neck;
};

Posture sample_posture(Rng& rng) {
    return {uniform(rng, 0.05, 0.3), uniform(rng, 0.05, 0.3), uniform(rng, 0.05, 0.15),
            uniform(rng, 0.05, 0.15), uniform(rng, -0.05, 0.1), uniform(rng, -0.1, 0.1)};
}

void apply_posture(Articulation& a, const Posture& p) {
    a.local[LShoulder] = rot_x(p.abd_l);
    a.local[RShoulder] = rot_x(-p.abd_r);
    a.local[LElbow] = flex_limb(p.elbow_l);
    a.local[RElbow] = flex_limb(p.elbow_r);
    a.local[Spine] = bend_torso(p.bend);
    a.local[Neck] = bend_torso(p.neck);
}

struct Sinusoid {
    double amp, freq, phase;
    double operator()(double t) const { return amp * std::sin(2.0 * std::numbers::pi * freq * t + phase); }
};

// Parameters drawn once per sequence; `amp` scales every time-varying term.
struct MotionParams {
    Posture posture;
    double period = 1.0;
    double tpose_l = 1.5, tpose_r = 1.5;
    double depth = 1.0;
    std::array<std::array<Sinusoid, 2>, 12> dofs{};
};

MotionParams sample_params(Motion motion, Rng& rng) {
    MotionParams m;
    m.posture = sample_posture(rng);
    switch (motion) {
        case Motion::Still:
            break;
        case Motion::TPose:
            m.tpose_l = uniform(rng, 1.45, 1.6);
            m.tpose_r = uniform(rng, 1.45, 1.6);
            break;
        case Motion::Squat:
            m.period = uniform(rng, 2.5, 4.0);
            m.depth = uniform(rng, 0.8, 1.1);
            break;
        case Motion::Walk:
            m.period = uniform(rng, 1.2, 1.6);
            m.depth = uniform(rng, 0.85, 1.0);
            break;
        case Motion::RandomSmooth:
            for (auto& dof : m.dofs) {
                for (auto& s : dof) {
                    s = {uniform(rng, 0.1, 0.45), uniform(rng, 0.15, 0.5), uniform(rng, 0.0, 2.0 * std::numbers::pi)};
                }
            }
            break;
    }
    return m;
}

Articulation articulate(Motion motion, const MotionParams& m, double t, double amp) {
    Articulation a;
    apply_posture(a, m.posture);
    const double w = 2.0 * std::numbers::pi / m.period;
    switch (motion) {
        case Motion::Still:
            break;
        case Motion::TPose:
            a.local[LShoulder] = rot_x(m.tpose_l);
            a.local[RShoulder] = rot_x(-m.tpose_r);
            a.local[LElbow] = a.local[RElbow] = Mat3::Identity();
            break;
        case Motion::Squat: {
            const double s = amp * m.depth * 0.5 * (1.0 - std::cos(w * t));
            a.local[LHip] = flex_limb(1.2 * s);
            a.local[RHip] = flex_limb(1.2 * s);
            a.local[LKnee] = flex_limb(-2.0 * s);
            a.local[RKnee] = flex_limb(-2.0 * s);
            a.local[LAnkle] = flex_limb(0.8 * s);
            a.local[RAnkle] = flex_limb(0.8 * s);
            a.local[Spine] = bend_torso(m.posture.bend + 0.5 * s);
            a.local[LShoulder] = flex_limb(1.1 * s) * rot_x(m.posture.abd_l);
            a.local[RShoulder] = flex_limb(1.1 * s) * rot_x(-m.posture.abd_r);
            break;
        }
        case Motion::Walk: {
            const double phase = w * t;
            const double swing = amp * m.depth * 0.45 * std::sin(phase);
            const double knee_l = amp * m.depth * 0.6 * std::max(0.0, std::sin(phase + 0.5 * std::numbers::pi));
            const double knee_r = amp * m.depth * 0.6 * std::max(0.0, -std::sin(phase + 0.5 * std::numbers::pi));
            a.local[LHip] = flex_limb(swing);
            a.local[RHip] = flex_limb(-swing);
            a.local[LKnee] = flex_limb(-knee_l);
            a.local[RKnee] = flex_limb(-knee_r);
            a.local[LShoulder] = flex_limb(-0.8 * swing) * rot_x(m.posture.abd_l);
            a.local[RShoulder] = flex_limb(0.8 * swing) * rot_x(-m.posture.abd_r);
            break;
        }
        case Motion::RandomSmooth: {
            auto dof = [&](std::size_t i) { return amp * (m.dofs[i][0](t) + m.dofs[i][1](t)); };
            auto pos_dof = [&](std::size_t i) {
                return amp * 0.5 * (m.dofs[i][0].amp + m.dofs[i][1].amp + m.dofs[i][0](t) + m.dofs[i][1](t));
            };
            a.local[Spine] = bend_torso(m.posture.bend + 0.5 * dof(0)) * rot_z(0.5 * dof(1));
            a.local[Neck] = bend_torso(m.posture.neck + 0.5 * dof(2));
            a.local[LShoulder] = flex_limb(dof(3)) * rot_x(m.posture.abd_l + pos_dof(4));
            a.local[RShoulder] = flex_limb(dof(5)) * rot_x(-m.posture.abd_r - pos_dof(6));
            a.local[LElbow] = flex_limb(m.posture.elbow_l + pos_dof(7));
            a.local[RElbow] = flex_limb(m.posture.elbow_r + pos_dof(8));
            a.local[LHip] = flex_limb(0.5 * dof(9));
            a.local[RHip] = flex_limb(0.5 * dof(10));
            a.local[LKnee] = flex_limb(-pos_dof(11));
            break;
        }
    }
    return a;
}

PoseSequence render_motion(Motion motion, const MotionParams& m, std::size_t frames,
                           const SubjectProfile& subject, double amp) {
    PoseSequence seq(frames, kPoseFps);
    for (std::size_t f = 0; f < frames; ++f) {
        const double t = static_cast<double>(f) / kPoseFps;
        const auto pos = forward_kinematics(articulate(motion, m, t, amp), subject);
        for (std::size_t j = 0; j < kJoints; ++j) seq.set_joint(f, j, pos[j]);
    }
    normalize_pose(seq);
    return seq;
}

}  // namespace

double max_joint_speed(const PoseSequence& poses) {
    double best = 0.0;
    for (std::size_t f = 1; f < poses.frames; ++f) {
        for (std::size_t j = 0; j < kJoints; ++j) {
            best = std::max(best, (poses.joint(f, j) - poses.joint(f - 1, j)).norm() * poses.fps);
        }
    }
    return best;
}

PoseSequence gen_pose_sequence(Motion motion, double duration_s, std::uint64_t seed, const SubjectProfile& subject) {
    if (!(duration_s > 0.0)) throw ConfigError("pose duration must be positive");
    const auto frames = static_cast<std::size_t>(std::lround(duration_s * kPoseFps));
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(motion), 0xB0D1}));
    const MotionParams params = sample_params(motion, rng);

    // Shrink the dynamic part until the speed bound holds with some margin.
    constexpr double kTarget = 0.95 * kMaxJointSpeed;
    double amp = 1.0;
    PoseSequence seq = render_motion(motion, params, frames, subject, amp);
    for (int iter = 0; iter < 30; ++iter) {
        const double speed = max_joint_speed(seq);
        if (speed <= kTarget) break;
        amp *= 0.97 * kTarget / speed;
        seq = render_motion(motion, params, frames, subject, amp);
    }
    return seq;
}

}  // namespace acousticpose::sim
