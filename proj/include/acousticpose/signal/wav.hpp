#pragma once

#include <filesystem>
#include <vector>

#include "acousticpose/signal/audio.hpp"

namespace acousticpose::signal {

enum class WavEncoding { Pcm16, Pcm24, Float32 };

// Planar multichannel audio as read from / written to a RIFF WAVE file.
struct WavData {
    std::vector<std::vector<double>> channels;
    double sample_rate = kDefaultSampleRate;

    std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

// Reads 16/24/32-bit PCM and 32-bit float files (plain or WAVE_FORMAT_EXTENSIBLE).
// Throws DataError on malformed or unsupported files.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavData& data,
               WavEncoding encoding = WavEncoding::Float32);

BFormatClip read_bformat(const std::filesystem::path& path);
StereoClip read_stereo(const std::filesystem::path& path);
void write_bformat(const std::filesystem::path& path, const BFormatClip& clip);
void write_stereo(const std::filesystem::path& path, const StereoClip& clip);

// Band-limited resampling (windowed sinc). Used to bring 44.1 kHz music to the
// 48 kHz capture rate.
std::vector<double> resample(const std::vector<double>& samples, double from_rate, double to_rate);

}  // namespace acousticpose::signal
