#include "acousticpose/sim/bgm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"
#include "acousticpose/signal/wav.hpp"

namespace acousticpose::sim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Channels = std::array<std::vector<double>, 2>;

double midi_to_hz(double note) { return 440.0 * std::pow(2.0, (note - 69.0) / 12.0); }

// Additive tone with 1/h^1.2 partial rolloff, written into both channels with
// per-channel gain and a small detune so the speakers carry different signals.
void add_tone(Channels& out, double sr, std::size_t start, std::size_t length, double freq, int harmonics,
              const std::vector<double>& envelope, std::array<double, 2> gain, double detune_hz, Rng& rng) {
    const std::size_t n = out[0].size();
    for (int ch = 0; ch < 2; ++ch) {
        for (int h = 1; h <= harmonics; ++h) {
            const double f = h * (freq + (ch == 0 ? -0.5 : 0.5) * detune_hz);
            if (f >= 0.45 * sr) break;
            const double a = gain[ch] / std::pow(static_cast<double>(h), 1.2);
            double phase = uniform(rng, 0.0, kTwoPi);
            const double step = kTwoPi * f / sr;
            for (std::size_t i = 0; i < length && start + i < n; ++i) {
                out[ch][start + i] += a * envelope[i] * std::sin(phase);
                phase += step;
            }
        }
    }
}

// One-pole low-passed white noise, decorrelated between channels.
void add_air(Channels& out, double level, double smoothing, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& ch : out) {
        double state = 0.0, prev = 0.0;
        for (double& v : ch) {
            const double white = gauss(rng);
            state = smoothing * state + (1.0 - smoothing) * white;
            // First difference tilts the spectrum up so the upper bands are excited too.
            v += level * (state + 0.5 * (white - prev));
            prev = white;
        }
    }
}

void render_ambient(Channels& out, const BgmSpec& spec, double sr, Rng& rng) {
    const std::size_t n = out[0].size();
    static constexpr int kScale[] = {0, 2, 4, 7, 9};  // pentatonic
    const auto chord_len = static_cast<std::size_t>(spec.chord_seconds * sr);
    const auto fade = static_cast<std::size_t>(0.6 * sr);
    for (std::size_t start = 0; start < n; start += chord_len) {
        const std::size_t len = std::min(n - start, chord_len + fade);
        std::vector<double> env(len);
        const double lfo_phase = uniform(rng, 0.0, kTwoPi);
        for (std::size_t i = 0; i < len; ++i) {
            const double rise = std::min(1.0, static_cast<double>(i) / static_cast<double>(fade));
            const double fall = i + fade > len ? static_cast<double>(len - i) / static_cast<double>(fade) : 1.0;
            const double lfo = 1.0 + 0.3 * std::sin(kTwoPi * spec.amplitude_lfo_hz * static_cast<double>(i) / sr + lfo_phase);
            env[i] = rise * std::max(0.0, fall) * lfo;
        }
        const int root = 45 + kScale[std::uniform_int_distribution<int>(0, 4)(rng)] +
                         12 * std::uniform_int_distribution<int>(0, 1)(rng);
        const int voices = std::uniform_int_distribution<int>(3, 4)(rng);
        for (int v = 0; v < voices; ++v) {
            const int note = root + 12 * (v / 2) + kScale[std::uniform_int_distribution<int>(0, 4)(rng)];
            const double pan = uniform(rng, 0.25, 0.75);
            const double detune = midi_to_hz(note) * (std::pow(2.0, spec.pitch_drift_cents / 1200.0) - 1.0);
            add_tone(out, sr, start, len, midi_to_hz(note), spec.harmonics, env, {1.0 - pan, pan}, detune, rng);
        }
    }
    // Scale the air layer relative to the tonal content.
    double tonal = 0.0;
    for (const auto& ch : out) tonal = std::max(tonal, signal::rms(ch));
    add_air(out, 0.08 * std::max(tonal, 1e-3), 0.6, rng);
}

void render_jazz(Channels& out, const BgmSpec& spec, double sr, Rng& rng) {
    const std::size_t n = out[0].size();
    static constexpr int kBlues[] = {0, 3, 5, 6, 7, 10};
    const double beat = 60.0 / spec.tempo_bpm;
    const auto beat_len = static_cast<std::size_t>(beat * sr);
    const double duration = static_cast<double>(n) / sr;

    auto decaying = [&](std::size_t len, double tau) {
        std::vector<double> env(len);
        const auto attack = static_cast<std::size_t>(0.005 * sr);
        for (std::size_t i = 0; i < len; ++i) {
            const double t = static_cast<double>(i) / sr;
            env[i] = std::min(1.0, static_cast<double>(i) / static_cast<double>(attack)) * std::exp(-t / tau);
        }
        return env;
    };

    std::normal_distribution<double> gauss(0.0, 1.0);
    const int key = 48 + std::uniform_int_distribution<int>(0, 7)(rng);
    for (std::size_t b = 0; b * beat_len < n; ++b) {
        const std::size_t start = b * beat_len;
        // Walking bass on every beat.
        const int bass = key - 12 + kBlues[std::uniform_int_distribution<int>(0, 5)(rng)];
        const auto bass_env = decaying(std::min(n - start, beat_len), 0.35);
        add_tone(out, sr, start, bass_env.size(), midi_to_hz(bass), 3, bass_env, {0.8, 0.8}, 0.3, rng);
        // Piano comping, syncopated.
        if (uniform(rng, 0.0, 1.0) < 0.6) {
            const std::size_t off = start + (uniform(rng, 0.0, 1.0) < 0.5 ? beat_len / 2 : 0);
            if (off < n) {
                const auto env = decaying(std::min(n - off, 3 * beat_len), uniform(rng, 0.25, 0.7));
                const int chord = key + 12 + kBlues[std::uniform_int_distribution<int>(0, 5)(rng)];
                const double pan = uniform(rng, 0.2, 0.8);
                for (int v : {0, 4, 7}) {
                    add_tone(out, sr, off, env.size(), midi_to_hz(chord + v), spec.harmonics, env,
                             {0.5 * (1.0 - pan), 0.5 * pan}, 0.4, rng);
                }
            }
        }
        // Ride cymbal: short broadband burst.
        const auto ride_len = std::min(n - start, static_cast<std::size_t>(0.12 * sr));
        double prev = 0.0;
        for (std::size_t i = 0; i < ride_len; ++i) {
            const double white = gauss(rng);
            const double hp = white - prev;
            prev = white;
            const double env = 0.12 * std::exp(-static_cast<double>(i) / (0.03 * sr));
            out[0][start + i] += env * hp;
            out[1][start + i] += env * 0.8 * hp;
        }
    }

    // Rests: hard-gated silences of 0.5-1.5 s.
    const int rests = static_cast<int>(std::round(spec.silence_per_minute * duration / 60.0));
    const auto ramp = static_cast<std::size_t>(0.01 * sr);
    for (int r = 0; r < rests; ++r) {
        const double len_s = uniform(rng, 0.5, 1.5);
        if (len_s >= duration) break;
        const auto s0 = static_cast<std::size_t>(uniform(rng, 0.0, duration - len_s) * sr);
        const auto s1 = std::min(n, s0 + static_cast<std::size_t>(len_s * sr));
        for (auto& ch : out) {
            for (std::size_t i = s0; i < s1; ++i) {
                const std::size_t a = i - s0, z = s1 - i;
                const double g = std::min(a, z) < ramp ? 1.0 - static_cast<double>(std::min(a, z)) / static_cast<double>(ramp) : 0.0;
                ch[i] *= g;
            }
        }
    }
}

void render_chirp(Channels& out, const BgmSpec& spec, double sr) {
    const std::size_t n = out[0].size();
    const auto period = static_cast<std::size_t>(std::lround(spec.chirp_period_s * sr));
    const double T = static_cast<double>(period) / sr;
    const double k = (spec.chirp_f1 - spec.chirp_f0) / T;
    const auto ramp = static_cast<std::size_t>(0.002 * sr);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t local = i % period;
        const double t = static_cast<double>(local) / sr;
        const double edge = static_cast<double>(std::min(local, period - 1 - local));
        const double taper = edge < static_cast<double>(ramp) ? edge / static_cast<double>(ramp) : 1.0;
        const double v = taper * std::sin(kTwoPi * (spec.chirp_f0 * t + 0.5 * k * t * t));
        out[0][i] = v;
        out[1][i] = 0.9 * v;
    }
}

void render_wav(Channels& out, const BgmSpec& spec, double sr) {
    auto clip = signal::read_stereo(spec.wav_path);
    for (int ch = 0; ch < 2; ++ch) {
        auto s = signal::resample(clip.channel(ch).samples, clip.sample_rate(), sr);
        if (s.empty()) throw DataError("empty music file " + spec.wav_path);
        for (std::size_t i = 0; i < out[ch].size(); ++i) out[ch][i] = s[i % s.size()];
    }
}

}  // namespace

std::string_view bgm_kind_name(BgmKind k) {
    switch (k) {
        case BgmKind::Ambient: return "ambient";
        case BgmKind::Jazz: return "jazz";
        case BgmKind::Chirp: return "chirp";
        case BgmKind::WavFile: return "wav-file";
    }
    return "?";
}

BgmKind parse_bgm_kind(std::string_view name) {
    for (auto k : {BgmKind::Ambient, BgmKind::Jazz, BgmKind::Chirp, BgmKind::WavFile}) {
        if (bgm_kind_name(k) == name) return k;
    }
    if (name == "ambient-like") return BgmKind::Ambient;
    if (name == "jazz-like") return BgmKind::Jazz;
    throw ConfigError("unknown BGM kind '" + std::string(name) + "'");
}

void BgmSpec::validate() const {
    if (harmonics < 1) throw ConfigError("bgm.harmonics must be >= 1");
    if (!(level_rms > 0.0 && level_rms < 1.0)) throw ConfigError("bgm.level_rms must be in (0, 1)");
    if (!(chord_seconds > 0.0) || !(tempo_bpm > 0.0)) throw ConfigError("bgm timing must be positive");
    if (!(silence_per_minute >= 0.0)) throw ConfigError("bgm.silence_per_minute must be >= 0");
    if (!(chirp_period_s > 0.0) || !(chirp_f0 > 0.0) || !(chirp_f1 > chirp_f0)) {
        throw ConfigError("chirp needs period > 0 and 0 < f0 < f1");
    }
    if (kind == BgmKind::WavFile && wav_path.empty()) throw ConfigError("wav-file BGM needs a path");
}

signal::StereoClip synth_bgm(const BgmSpec& spec, double duration_s, std::uint64_t seed, double sample_rate) {
    spec.validate();
    if (!(duration_s > 0.0)) throw ConfigError("BGM duration must be positive");
    if (spec.kind == BgmKind::Chirp && spec.chirp_f1 >= sample_rate / 2.0) {
        throw ConfigError("chirp f1 must be below Nyquist");
    }
    const auto n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
    Channels ch{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    Rng rng(derive_seed(spec.seed, {seed, static_cast<std::uint64_t>(spec.kind)}));
    switch (spec.kind) {
        case BgmKind::Ambient: render_ambient(ch, spec, sample_rate, rng); break;
        case BgmKind::Jazz: render_jazz(ch, spec, sample_rate, rng); break;
        case BgmKind::Chirp: render_chirp(ch, spec, sample_rate); break;
        case BgmKind::WavFile: render_wav(ch, spec, sample_rate); break;
    }

    if (spec.kind != BgmKind::WavFile) {
        double acc = 0.0;
        for (const auto& c : ch) {
            for (double v : c) acc += v * v;
        }
        const double level = std::sqrt(acc / (2.0 * static_cast<double>(std::max<std::size_t>(n, 1))));
        if (level > 0.0) {
            for (auto& c : ch) {
                for (double& v : c) v *= spec.level_rms / level;
            }
        }
    }
    const double p = std::max(signal::peak(ch[0]), signal::peak(ch[1]));
    if (p > 0.99) {
        for (auto& c : ch) {
            for (double& v : c) v *= 0.99 / p;
        }
    }

    signal::StereoClip clip;
    clip.left = {std::move(ch[0]), sample_rate};
    clip.right = {std::move(ch[1]), sample_rate};
    return clip;
}

double longest_silence(const signal::StereoClip& clip, double threshold) {
    std::size_t best = 0, run = 0;
    for (std::size_t i = 0; i < clip.size(); ++i) {
        const bool quiet = std::abs(clip.left.samples[i]) < threshold && std::abs(clip.right.samples[i]) < threshold;
        run = quiet ? run + 1 : 0;
        best = std::max(best, run);
    }
    return static_cast<double>(best) / clip.sample_rate();
}

}  // namespace acousticpose::sim
