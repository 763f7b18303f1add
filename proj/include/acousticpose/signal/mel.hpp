#pragma once

#include <cstddef>
#include <vector>

namespace acousticpose::signal {

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular, area-normalised mel filters, weights laid out [bands x n_freq].
struct MelFilterBank {
    std::size_t bands = 0;
    std::size_t n_freq = 0;
    double f_min = 0.0;
    double f_max = 0.0;
    double sample_rate = 0.0;
    std::vector<double> weights;
    // Half-open support [first, last) of each row, used to skip zeros.
    std::vector<std::size_t> first, last;

    double weight(std::size_t band, std::size_t bin) const { return weights[band * n_freq + bin]; }
};

// Throws ConfigError unless 0 <= f_min < f_max <= sample_rate/2 and bands >= 1.
// A filter narrower than the FFT bin spacing falls back to its nearest bin so
// every row keeps at least one nonzero weight.
MelFilterBank build_mel_bank(std::size_t bands, std::size_t n_fft, double sample_rate,
                             double f_min, double f_max);

}  // namespace acousticpose::signal
