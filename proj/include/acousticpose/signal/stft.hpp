#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "acousticpose/signal/audio.hpp"

namespace acousticpose::signal {

enum class WindowKind { Hann, Rectangular };

struct StftParams {
    std::size_t n_fft = 4096;
    std::size_t hop = 2400;  // 48 kHz / 2400 = 20 frames per second
    WindowKind window = WindowKind::Hann;

    void validate() const;
};

// Complex spectrogram laid out [n_freq x frames], row-major.
struct StftGrid {
    std::size_t n_freq = 0;
    std::size_t frames = 0;
    StftParams params;
    double sample_rate = kDefaultSampleRate;
    std::vector<std::complex<double>> bins;

    double frame_rate() const { return sample_rate / static_cast<double>(params.hop); }
    std::complex<double>& at(std::size_t k, std::size_t t) { return bins[k * frames + t]; }
    const std::complex<double>& at(std::size_t k, std::size_t t) const { return bins[k * frames + t]; }
    bool same_shape(const StftGrid& other) const {
        return n_freq == other.n_freq && frames == other.frames;
    }
};

std::vector<double> make_window(WindowKind kind, std::size_t n);

// Number of frames produced for a signal of `length` samples. The signal is
// zero-padded by (n_fft - hop) split across both ends so that frame t is
// centred on the hop interval [t*hop, (t+1)*hop); this yields floor(length/hop)
// frames and keeps audio frames aligned with pose frames.
std::size_t stft_frame_count(std::size_t length, const StftParams& params);

// Throws EmptyInputError when the signal is shorter than one window.
StftGrid stft(const MonoSignal& signal, const StftParams& params = {});

}  // namespace acousticpose::signal
