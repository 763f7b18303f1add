#include "acousticpose/sim/render.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::sim {
namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("expected a 3-vector");
    return {v[0], v[1], v[2]};
}

// A propagation path sampled at each pose frame.
struct PathTrack {
    std::size_t speaker = 0;
    std::vector<double> delay;  // samples
    std::vector<double> gain;
    std::vector<Vec3> dir;
};

void push_point(PathTrack& p, const Vec3& emitter, const Vec3& via, const Vec3& mic, double gain, double c,
                double sr, bool scatter) {
    const double leg1 = (via - emitter).norm();
    const double leg2 = (mic - via).norm();
    const double dist = scatter ? leg1 + leg2 : leg2;
    const double atten = scatter ? 1.0 / (std::max(leg1, 1e-3) * std::max(leg2, 1e-3)) : 1.0 / std::max(leg2, 1e-3);
    p.delay.push_back(dist / c * sr);
    p.gain.push_back(gain * atten);
    p.dir.push_back((via - mic) / std::max(leg2, 1e-9));
}

}  // namespace

void SceneConfig::validate() const {
    if (!(speed_of_sound > 0.0)) throw ConfigError("scene.speed_of_sound must be positive");
    if (!(body_scale > 0.0)) throw ConfigError("scene.body_scale must be positive");
    if (!(direct_gain >= 0.0) || !(reflection_gain >= 0.0)) throw ConfigError("scene gains must be >= 0");
    for (const auto& s : speakers) {
        if ((s - mic).norm() < 1e-6) throw ConfigError("speaker and microphone must be distinct");
    }
    if ((speakers[0] - speakers[1]).norm() < 1e-6) throw ConfigError("speakers must be distinct");
    if (wall_reflections && ((room_max - room_min).minCoeff() <= 0.0)) throw ConfigError("room box is empty");
}

nlohmann::json SceneConfig::to_json() const {
    return {{"mic", vec_json(mic)},
            {"speaker_left", vec_json(speakers[0])},
            {"speaker_right", vec_json(speakers[1])},
            {"subject_origin", vec_json(subject_origin)},
            {"body_scale", body_scale},
            {"speed_of_sound", speed_of_sound},
            {"direct_gain", direct_gain},
            {"reflection_gain", reflection_gain},
            {"wall_reflections", wall_reflections},
            {"room_min", vec_json(room_min)},
            {"room_max", vec_json(room_max)},
            {"wall_reflectivity", wall_reflectivity}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
    SceneConfig s;
    s.mic = vec_from(j.at("mic"));
    s.speakers = {vec_from(j.at("speaker_left")), vec_from(j.at("speaker_right"))};
    s.subject_origin = vec_from(j.at("subject_origin"));
    s.body_scale = j.at("body_scale");
    s.speed_of_sound = j.at("speed_of_sound");
    s.direct_gain = j.at("direct_gain");
    s.reflection_gain = j.at("reflection_gain");
    s.wall_reflections = j.at("wall_reflections");
    s.room_min = vec_from(j.at("room_min"));
    s.room_max = vec_from(j.at("room_max"));
    s.wall_reflectivity = j.at("wall_reflectivity");
    return s;
}

std::array<double, 4> encode_bformat(double pressure, const Vec3& dir) {
    return {pressure * kWGain, pressure * dir.x(), pressure * dir.y(), pressure * dir.z()};
}

signal::BFormatClip encode_plane_wave(const signal::MonoSignal& source, double azimuth, double elevation) {
    const Vec3 dir(std::cos(azimuth) * std::cos(elevation), std::sin(azimuth) * std::cos(elevation),
                   std::sin(elevation));
    auto clip = signal::BFormatClip::zeros(source.size(), source.sample_rate);
    for (std::size_t i = 0; i < source.size(); ++i) {
        const auto e = encode_bformat(source.samples[i], dir);
        for (std::size_t c = 0; c < 4; ++c) clip.channel(c).samples[i] = e[c];
    }
    return clip;
}

signal::BFormatClip render_recording(const SceneConfig& scene, const signal::StereoClip& music,
                                     const PoseSequence& poses) {
    scene.validate();
    music.validate();
    const double sr = music.sample_rate();
    const double samples_per_frame = sr / poses.fps;
    const double expected = static_cast<double>(poses.frames) * samples_per_frame;
    if (poses.frames == 0 || std::abs(static_cast<double>(music.size()) - expected) > samples_per_frame) {
        throw AlignmentError("music has " + std::to_string(music.size()) + " samples but poses cover " +
                             std::to_string(static_cast<long>(expected)));
    }

    const auto& sk = Skeleton::standard();
    const double c = scene.speed_of_sound;
    std::vector<PathTrack> paths;

    // Static paths: direct and wall images.
    for (std::size_t s = 0; s < 2; ++s) {
        std::vector<std::pair<Vec3, double>> emitters{{scene.speakers[s], scene.direct_gain}};
        if (scene.wall_reflections) {
            for (int axis = 0; axis < 3; ++axis) {
                for (double wall : {scene.room_min[axis], scene.room_max[axis]}) {
                    Vec3 img = scene.speakers[s];
                    img[axis] = 2.0 * wall - img[axis];
                    emitters.emplace_back(img, scene.direct_gain * scene.wall_reflectivity);
                }
            }
        }
        for (const auto& [pos, gain] : emitters) {
            PathTrack p;
            p.speaker = s;
            push_point(p, pos, pos, scene.mic, gain, c, sr, false);
            paths.push_back(std::move(p));
        }
    }
    // Scatter paths via each joint, one sample per pose frame.
    if (scene.reflection_gain > 0.0) {
        for (std::size_t s = 0; s < 2; ++s) {
            for (std::size_t j = 0; j < kJoints; ++j) {
                PathTrack p;
                p.speaker = s;
                for (std::size_t f = 0; f < poses.frames; ++f) {
                    const Vec3 world = scene.subject_origin + scene.body_scale * poses.joint(f, j);
                    push_point(p, scene.speakers[s], world, scene.mic, scene.reflection_gain * sk.scatter_weight[j],
                               c, sr, true);
                }
                paths.push_back(std::move(p));
            }
        }
    }

    const std::size_t n = music.size();
    auto out = signal::BFormatClip::zeros(n, sr);
    double* dst[4] = {out.w.samples.data(), out.x.samples.data(), out.y.samples.data(), out.z.samples.data()};

    for (const auto& p : paths) {
        const auto& src = music.channel(p.speaker).samples;
        const std::size_t frames = p.delay.size();
        for (std::size_t i = 0; i < n; ++i) {
            double delay, gain;
            Vec3 dir;
            if (frames == 1) {
                delay = p.delay[0];
                gain = p.gain[0];
                dir = p.dir[0];
            } else {
                const double u = static_cast<double>(i) / samples_per_frame;
                const std::size_t f0 = std::min(static_cast<std::size_t>(u), frames - 1);
                const std::size_t f1 = std::min(f0 + 1, frames - 1);
                const double a = std::min(1.0, u - static_cast<double>(f0));
                delay = (1.0 - a) * p.delay[f0] + a * p.delay[f1];
                gain = (1.0 - a) * p.gain[f0] + a * p.gain[f1];
                dir = ((1.0 - a) * p.dir[f0] + a * p.dir[f1]).normalized();
            }
            // Linear-interpolated fractional delay.
            const double pos = static_cast<double>(i) - delay;
            if (pos < 0.0) continue;
            const auto k = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(k);
            const double v0 = src[k];
            const double v1 = k + 1 < n ? src[k + 1] : 0.0;
            const double pressure = gain * ((1.0 - frac) * v0 + frac * v1);
            const auto e = encode_bformat(pressure, dir);
            for (int ch = 0; ch < 4; ++ch) dst[ch][i] += e[ch];
        }
    }
    return out;
}

signal::BFormatClip add_gaussian_noise(const signal::BFormatClip& clip, double snr_db, std::uint64_t seed) {
    clip.validate();
    double total = 0.0;
    for (std::size_t c = 0; c < 4; ++c) total += signal::rms(clip.channel(c).samples);
    if (!(total > 0.0)) throw DataError("cannot set an SNR on a silent clip");
    if (std::isinf(snr_db) && snr_db > 0.0) return clip;

    signal::BFormatClip out = clip;
    for (std::size_t c = 0; c < 4; ++c) {
        auto& ch = out.channel(c).samples;
        const double power = std::pow(signal::rms(ch), 2);
        if (power == 0.0) continue;
        const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
        Rng rng(derive_seed(seed, {c, 0x4E015E}));
        std::normal_distribution<double> gauss(0.0, sigma);
        for (double& v : ch) v += gauss(rng);
    }
    return out;
}

}  // namespace acousticpose::sim
