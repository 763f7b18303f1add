#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "acousticpose/signal/audio.hpp"
#include "acousticpose/signal/mel.hpp"
#include "acousticpose/signal/stft.hpp"

namespace acousticpose::signal {

// Dense real tensor laid out [channels x bins x frames].
struct FeatureTensor {
    std::size_t channels = 0;
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<double> values;

    FeatureTensor() = default;
    FeatureTensor(std::size_t c, std::size_t b, std::size_t t, double fill = 0.0)
        : channels(c), bins(b), frames(t), values(c * b * t, fill) {}

    double& at(std::size_t c, std::size_t k, std::size_t t) { return values[(c * bins + k) * frames + t]; }
    double at(std::size_t c, std::size_t k, std::size_t t) const { return values[(c * bins + k) * frames + t]; }
    std::size_t plane() const { return bins * frames; }
    std::span<double> channel(std::size_t c) { return {values.data() + c * plane(), plane()}; }
    std::span<const double> channel(std::size_t c) const { return {values.data() + c * plane(), plane()}; }

    bool same_grid(const FeatureTensor& o) const { return bins == o.bins && frames == o.frames; }
    FeatureTensor channels_range(std::size_t first, std::size_t count) const;
    FeatureTensor frames_range(std::size_t first, std::size_t count) const;
};

FeatureTensor concat_channels(std::span<const FeatureTensor> parts);

enum class IntensityNorm { L2, L1 };

inline constexpr double kLogFloor = 1e-10;
inline constexpr double kZeroNormGuard = 1e-12;

// log(H |grid|^2 + floor_eps), one channel.
FeatureTensor log_mel(const StftGrid& grid, const MelFilterBank& bank, double floor_eps = kLogFloor);

// Per-bin active intensity Re{W* (X, Y, Z)}, normalised to a unit direction,
// then projected onto the mel bands. Bins whose intensity norm falls below
// kZeroNormGuard contribute nothing. Output is [3 x bands x frames].
FeatureTensor intensity_vector(const StftGrid& w, const StftGrid& x, const StftGrid& y, const StftGrid& z,
                               const MelFilterBank& bank, IntensityNorm norm = IntensityNorm::L2);

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Pooled per-channel mean and population standard deviation.
class ChannelStatsAccumulator {
public:
    explicit ChannelStatsAccumulator(std::size_t channels);
    void add(const FeatureTensor& t);
    ChannelStats finish() const;

private:
    std::vector<double> count_, mean_, m2_;
};

ChannelStats channel_stats(const FeatureTensor& t);

// (x - mean_c) / max(std_c, eps), channel by channel.
FeatureTensor standardize_channels(const FeatureTensor& t, const ChannelStats& stats, double eps = 1e-8);

// Log-domain difference between the recorded channels and each speaker's music:
// block i in {left, right} holds recorded[c] - music_i for c in (w, x, y, z).
FeatureTensor difference_features(const FeatureTensor& recorded, const FeatureTensor& music_left,
                                   const FeatureTensor& music_right);

// Channel layout: [0..2] intensity (x,y,z), [3..6] left diff (w,x,y,z), [7..10] right diff.
FeatureTensor assemble_input(const FeatureTensor& intensity, const FeatureTensor& diffs);

inline constexpr std::size_t kInputChannels = 11;
std::vector<std::string> input_channel_layout();
std::vector<std::string> music_channel_layout();

}  // namespace acousticpose::signal
