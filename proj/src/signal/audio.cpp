#include "acousticpose/signal/audio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {

void MonoSignal::validate() const {
    if (!(sample_rate > 0.0)) {
        throw DataError("sample rate must be positive");
    }
    for (double s : samples) {
        if (!std::isfinite(s)) {
            throw DataError("signal contains non-finite samples");
        }
    }
}

MonoSignal& BFormatClip::channel(std::size_t c) {
    switch (c) {
        case 0: return w;
        case 1: return x;
        case 2: return y;
        case 3: return z;
    }
    throw DimensionError("B-format channel index out of range: " + std::to_string(c));
}

const MonoSignal& BFormatClip::channel(std::size_t c) const {
    return const_cast<BFormatClip*>(this)->channel(c);
}

BFormatClip BFormatClip::zeros(std::size_t n, double sample_rate) {
    BFormatClip clip;
    for (std::size_t c = 0; c < 4; ++c) {
        clip.channel(c).samples.assign(n, 0.0);
        clip.channel(c).sample_rate = sample_rate;
    }
    return clip;
}

void BFormatClip::validate() const {
    for (std::size_t c = 0; c < 4; ++c) {
        channel(c).validate();
        if (channel(c).size() != w.size() || channel(c).sample_rate != w.sample_rate) {
            throw DimensionError("B-format channels differ in length or rate");
        }
    }
}

void StereoClip::validate() const {
    left.validate();
    right.validate();
    if (left.size() != right.size() || left.sample_rate != right.sample_rate) {
        throw DimensionError("stereo channels differ in length or rate");
    }
}

double rms(const std::vector<double>& samples) {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

double peak(const std::vector<double>& samples) {
    double p = 0.0;
    for (double s : samples) p = std::max(p, std::abs(s));
    return p;
}

}  // namespace acousticpose::signal
