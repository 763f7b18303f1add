#include "acousticpose/signal/mel.hpp"

#include <algorithm>
#include <cmath>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterBank build_mel_bank(std::size_t bands, std::size_t n_fft, double sample_rate,
                             double f_min, double f_max) {
    if (bands < 1) throw ConfigError("mel bank needs at least one band");
    if (n_fft < 2) throw ConfigError("mel bank needs n_fft >= 2");
    if (!(sample_rate > 0.0) || !(f_min >= 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
        throw ConfigError("mel bank frequency range must satisfy 0 <= f_min < f_max <= sample_rate/2");
    }

    MelFilterBank bank;
    bank.bands = bands;
    bank.n_freq = n_fft / 2 + 1;
    bank.f_min = f_min;
    bank.f_max = f_max;
    bank.sample_rate = sample_rate;
    bank.weights.assign(bands * bank.n_freq, 0.0);
    bank.first.assign(bands, 0);
    bank.last.assign(bands, 0);

    const double mel_lo = hz_to_mel(f_min);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
    }
    const double bin_hz = sample_rate / static_cast<double>(n_fft);

    for (std::size_t m = 0; m < bands; ++m) {
        const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
        const double norm = 2.0 / (right - left);
        double* row = &bank.weights[m * bank.n_freq];
        bool any = false;
        for (std::size_t k = 0; k < bank.n_freq; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            const double up = (f - left) / (centre - left);
            const double down = (right - f) / (right - centre);
            const double w = std::max(0.0, std::min(up, down));
            if (w > 0.0) {
                row[k] = w * norm;
                any = true;
            }
        }
        if (!any) {
            const auto k = std::min(bank.n_freq - 1, static_cast<std::size_t>(std::lround(centre / bin_hz)));
            row[k] = norm;
        }
        std::size_t lo = 0;
        while (row[lo] == 0.0) ++lo;
        std::size_t hi = bank.n_freq;
        while (row[hi - 1] == 0.0) --hi;
        bank.first[m] = lo;
        bank.last[m] = hi;
    }
    return bank;
}

}  // namespace acousticpose::signal
