#include "acousticpose/signal/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {

FeatureTensor FeatureTensor::channels_range(std::size_t first, std::size_t count) const {
    if (first + count > channels) throw DimensionError("channel range out of bounds");
    FeatureTensor out(count, bins, frames);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(first * plane()), count * plane(), out.values.begin());
    return out;
}

FeatureTensor FeatureTensor::frames_range(std::size_t first, std::size_t count) const {
    if (first + count > frames) throw DimensionError("frame range out of bounds");
    FeatureTensor out(channels, bins, count);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < bins; ++k) {
            for (std::size_t t = 0; t < count; ++t) out.at(c, k, t) = at(c, k, first + t);
        }
    }
    return out;
}

FeatureTensor concat_channels(std::span<const FeatureTensor> parts) {
    if (parts.empty()) throw DimensionError("nothing to concatenate");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (!p.same_grid(parts.front())) throw DimensionError("concatenated features differ in bins or frames");
        total += p.channels;
    }
    FeatureTensor out(total, parts.front().bins, parts.front().frames);
    auto it = out.values.begin();
    for (const auto& p : parts) it = std::copy(p.values.begin(), p.values.end(), it);
    return out;
}

FeatureTensor log_mel(const StftGrid& grid, const MelFilterBank& bank, double floor_eps) {
    if (bank.n_freq != grid.n_freq) {
        throw DimensionError("mel bank expects " + std::to_string(bank.n_freq) + " bins, grid has " +
                             std::to_string(grid.n_freq));
    }
    FeatureTensor out(1, bank.bands, grid.frames);
    std::vector<double> power(grid.n_freq);
    for (std::size_t t = 0; t < grid.frames; ++t) {
        for (std::size_t k = 0; k < grid.n_freq; ++k) power[k] = std::norm(grid.at(k, t));
        for (std::size_t m = 0; m < bank.bands; ++m) {
            double acc = 0.0;
            for (std::size_t k = bank.first[m]; k < bank.last[m]; ++k) acc += bank.weight(m, k) * power[k];
            out.at(0, m, t) = std::log(acc + floor_eps);
        }
    }
    return out;
}

FeatureTensor intensity_vector(const StftGrid& w, const StftGrid& x, const StftGrid& y, const StftGrid& z,
                               const MelFilterBank& bank, IntensityNorm norm) {
    if (!w.same_shape(x) || !w.same_shape(y) || !w.same_shape(z)) {
        throw DimensionError("B-format STFT grids differ in shape");
    }
    if (bank.n_freq != w.n_freq) throw DimensionError("mel bank does not match STFT grid");

    FeatureTensor out(3, bank.bands, w.frames);
    std::vector<double> dir(3 * w.n_freq);
    for (std::size_t t = 0; t < w.frames; ++t) {
        for (std::size_t k = 0; k < w.n_freq; ++k) {
            const auto wc = std::conj(w.at(k, t));
            const double ix = (wc * x.at(k, t)).real();
            const double iy = (wc * y.at(k, t)).real();
            const double iz = (wc * z.at(k, t)).real();
            const double n = norm == IntensityNorm::L2 ? std::sqrt(ix * ix + iy * iy + iz * iz)
                                                       : std::abs(ix) + std::abs(iy) + std::abs(iz);
            if (n < kZeroNormGuard) {
                dir[3 * k] = dir[3 * k + 1] = dir[3 * k + 2] = 0.0;
            } else {
                dir[3 * k] = ix / n;
                dir[3 * k + 1] = iy / n;
                dir[3 * k + 2] = iz / n;
            }
        }
        for (std::size_t m = 0; m < bank.bands; ++m) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (std::size_t k = bank.first[m]; k < bank.last[m]; ++k) {
                const double h = bank.weight(m, k);
                for (int c = 0; c < 3; ++c) acc[c] += h * dir[3 * k + c];
            }
            for (std::size_t c = 0; c < 3; ++c) out.at(c, m, t) = acc[c];
        }
    }
    return out;
}

ChannelStatsAccumulator::ChannelStatsAccumulator(std::size_t channels)
    : count_(channels, 0.0), mean_(channels, 0.0), m2_(channels, 0.0) {}

void ChannelStatsAccumulator::add(const FeatureTensor& t) {
    if (t.channels != mean_.size()) throw DimensionError("channel count differs from accumulator");
    for (std::size_t c = 0; c < t.channels; ++c) {
        // Chan et al. parallel merge of (count, mean, M2).
        const auto ch = t.channel(c);
        if (ch.empty()) continue;
        double m = 0.0;
        for (double v : ch) m += v;
        m /= static_cast<double>(ch.size());
        double m2 = 0.0;
        for (double v : ch) m2 += (v - m) * (v - m);
        const double nb = static_cast<double>(ch.size());
        const double na = count_[c];
        const double delta = m - mean_[c];
        const double n = na + nb;
        mean_[c] += delta * nb / n;
        m2_[c] += m2 + delta * delta * na * nb / n;
        count_[c] = n;
    }
}

ChannelStats ChannelStatsAccumulator::finish() const {
    ChannelStats s;
    s.mean = mean_;
    s.stddev.resize(mean_.size());
    for (std::size_t c = 0; c < mean_.size(); ++c) {
        s.stddev[c] = count_[c] > 0.0 ? std::sqrt(m2_[c] / count_[c]) : 0.0;
    }
    return s;
}

ChannelStats channel_stats(const FeatureTensor& t) {
    ChannelStatsAccumulator acc(t.channels);
    acc.add(t);
    return acc.finish();
}

FeatureTensor standardize_channels(const FeatureTensor& t, const ChannelStats& stats, double eps) {
    if (stats.mean.size() != t.channels || stats.stddev.size() != t.channels) {
        throw DimensionError("standardisation stats do not match channel count");
    }
    FeatureTensor out = t;
    for (std::size_t c = 0; c < t.channels; ++c) {
        const double scale = 1.0 / std::max(stats.stddev[c], eps);
        for (double& v : out.channel(c)) v = (v - stats.mean[c]) * scale;
    }
    return out;
}

FeatureTensor difference_features(const FeatureTensor& recorded, const FeatureTensor& music_left,
                                  const FeatureTensor& music_right) {
    if (recorded.channels != 4 || music_left.channels != 1 || music_right.channels != 1) {
        throw DimensionError("difference features need 4 recorded channels and 1 channel per speaker");
    }
    if (!recorded.same_grid(music_left) || !recorded.same_grid(music_right)) {
        throw DimensionError("recorded and music spectrograms differ in bins or frames");
    }
    FeatureTensor out(8, recorded.bins, recorded.frames);
    const FeatureTensor* speakers[2] = {&music_left, &music_right};
    for (std::size_t i = 0; i < 2; ++i) {
        const auto m = speakers[i]->channel(0);
        for (std::size_t c = 0; c < 4; ++c) {
            const auto s = recorded.channel(c);
            auto d = out.channel(i * 4 + c);
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = s[j] - m[j];
        }
    }
    return out;
}

FeatureTensor assemble_input(const FeatureTensor& intensity, const FeatureTensor& diffs) {
    if (intensity.channels != 3 || diffs.channels != 8) {
        throw DimensionError("input assembly needs 3 intensity and 8 difference channels");
    }
    if (!intensity.same_grid(diffs)) throw DimensionError("intensity and difference features differ in shape");
    const FeatureTensor parts[2] = {intensity, diffs};
    return concat_channels(parts);
}

std::vector<std::string> input_channel_layout() {
    return {"intensity_x", "intensity_y", "intensity_z", "diff_left_w", "diff_left_x",
            "diff_left_y", "diff_left_z",  "diff_right_w", "diff_right_x", "diff_right_y",
            "diff_right_z"};
}

std::vector<std::string> music_channel_layout() { return {"music_left", "music_right"}; }

}  // namespace acousticpose::signal
