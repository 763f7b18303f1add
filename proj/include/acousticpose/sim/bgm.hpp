#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "acousticpose/signal/audio.hpp"

namespace acousticpose::sim {

enum class BgmKind { Ambient, Jazz, Chirp, WavFile };

std::string_view bgm_kind_name(BgmKind k);
BgmKind parse_bgm_kind(std::string_view name);

// Procedural stand-in for a music track.
struct BgmSpec {
    BgmKind kind = BgmKind::Ambient;
    int harmonics = 6;
    double level_rms = 0.15;
    // Ambient: seconds per chord; jazz: tempo.
    double chord_seconds = 3.0;
    double tempo_bpm = 132.0;
    double amplitude_lfo_hz = 0.15;
    double pitch_drift_cents = 8.0;
    // Rests per minute (jazz only; ambient tracks stay continuous).
    double silence_per_minute = 5.0;
    double chirp_period_s = 0.5;
    double chirp_f0 = 100.0;
    double chirp_f1 = 16000.0;
    std::string wav_path;
    // Identity of the track; combined with the per-render seed.
    std::uint64_t seed = 0;

    void validate() const;
};

// Deterministic given (spec, seed). Output peak never exceeds 1.
signal::StereoClip synth_bgm(const BgmSpec& spec, double duration_s, std::uint64_t seed,
                             double sample_rate = signal::kDefaultSampleRate);

// Longest run of consecutive samples below `threshold` in either channel, in seconds.
double longest_silence(const signal::StereoClip& clip, double threshold = 1e-3);

}  // namespace acousticpose::sim
