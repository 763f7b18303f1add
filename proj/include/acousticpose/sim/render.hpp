#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "acousticpose/signal/audio.hpp"
#include "acousticpose/sim/skeleton.hpp"

namespace acousticpose::sim {

inline const double kWGain = 1.0 / std::sqrt(2.0);

// Geometry in metres. The subject's hip sits at `subject_origin`, facing +x;
// normalised pose units are converted with `body_scale` metres per unit.
struct SceneConfig {
    Vec3 mic{1.2, 0.0, 1.0};
    std::array<Vec3, 2> speakers{Vec3(1.2, 1.0, 1.1), Vec3(1.2, -1.0, 1.1)};
    Vec3 subject_origin{0.0, 0.0, 0.95};
    double body_scale = 0.24;
    double speed_of_sound = 343.0;
    double direct_gain = 1.0;
    double reflection_gain = 0.5;
    // Optional first-order image sources of the speakers in a shoe-box room.
    bool wall_reflections = false;
    Vec3 room_min{-2.5, -2.5, 0.0};
    Vec3 room_max{3.5, 2.5, 3.0};
    double wall_reflectivity = 0.4;

    void validate() const;
    nlohmann::json to_json() const;
    static SceneConfig from_json(const nlohmann::json& j);
};

// First-order ambisonics encoding of a pressure sample arriving from unit
// direction `dir`: (w, x, y, z) = p * (1/sqrt(2), dir.x, dir.y, dir.z).
std::array<double, 4> encode_bformat(double pressure, const Vec3& dir);

// Renders a plane wave of `source` arriving from (azimuth, elevation) in radians.
signal::BFormatClip encode_plane_wave(const signal::MonoSignal& source, double azimuth, double elevation);

// Sums delayed (distance / c), 1/r-attenuated, direction-encoded copies of the
// music along every speaker->mic and speaker->joint->mic path. Path parameters
// are evaluated per pose frame and interpolated linearly in between.
// Throws AlignmentError unless music and poses span the same duration (one
// frame of slack).
signal::BFormatClip render_recording(const SceneConfig& scene, const signal::StereoClip& music,
                                     const PoseSequence& poses);

// Adds white Gaussian noise per channel at the requested SNR. An infinite SNR
// returns the input unchanged. Throws DataError on a silent clip.
signal::BFormatClip add_gaussian_noise(const signal::BFormatClip& clip, double snr_db, std::uint64_t seed);

}  // namespace acousticpose::sim
