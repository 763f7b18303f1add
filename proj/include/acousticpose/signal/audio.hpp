#pragma once

#include <cstddef>
#include <vector>

namespace acousticpose::signal {

inline constexpr double kDefaultSampleRate = 48000.0;

struct MonoSignal {
    std::vector<double> samples;
    double sample_rate = kDefaultSampleRate;

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

    // Throws DataError on non-positive rate or non-finite samples.
    void validate() const;
};

// First-order ambisonics recording, channel order fixed to (w, x, y, z).
struct BFormatClip {
    MonoSignal w, x, y, z;

    std::size_t size() const { return w.size(); }
    double sample_rate() const { return w.sample_rate; }
    MonoSignal& channel(std::size_t c);
    const MonoSignal& channel(std::size_t c) const;
    static constexpr std::size_t channels() { return 4; }

    static BFormatClip zeros(std::size_t n, double sample_rate);
    void validate() const;
};

// Music emitted by the left and right speakers.
struct StereoClip {
    MonoSignal left, right;

    std::size_t size() const { return left.size(); }
    double sample_rate() const { return left.sample_rate; }
    MonoSignal& channel(std::size_t c) { return c == 0 ? left : right; }
    const MonoSignal& channel(std::size_t c) const { return c == 0 ? left : right; }
    static constexpr std::size_t channels() { return 2; }

    void validate() const;
};

double rms(const std::vector<double>& samples);
double peak(const std::vector<double>& samples);

}  // namespace acousticpose::signal
