#include "acousticpose/signal/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const auto fail = [&](const std::string& why) {
        return DataError("malformed WAV " + path.string() + ": " + why);
    };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw fail("missing RIFF/WAVE header");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const auto size = read_le<std::uint32_t>(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) {
            // Truncated data chunks are tolerated only when nothing else follows.
            if (std::memcmp(id, "data", 4) != 0) throw fail("chunk overruns file");
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw fail("short fmt chunk");
            format = read_le<std::uint16_t>(bytes.data() + body);
            channels = read_le<std::uint16_t>(bytes.data() + body + 2);
            rate = read_le<std::uint32_t>(bytes.data() + body + 4);
            bits = read_le<std::uint16_t>(bytes.data() + body + 14);
            if (format == kFormatExtensible) {
                if (size < 40) throw fail("short extensible fmt chunk");
                format = read_le<std::uint16_t>(bytes.data() + body + 24);
            }
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_size = std::min<std::size_t>(size, bytes.size() - body);
        }
        pos = body + size + (size & 1U);
    }

    if (channels == 0 || rate == 0) throw fail("missing fmt chunk");
    if (data == nullptr) throw fail("missing data chunk");
    const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32);
    const bool flt = format == kFormatFloat && bits == 32;
    if (!pcm && !flt) {
        throw fail("unsupported encoding (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits)");
    }

    const std::size_t stride = static_cast<std::size_t>(bits / 8) * channels;
    const std::size_t frames = data_size / stride;
    WavData out;
    out.sample_rate = rate;
    out.channels.assign(channels, std::vector<double>(frames));
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = data + f * stride + c * (bits / 8);
            double v = 0.0;
            if (flt) {
                v = read_le<float>(p);
            } else if (bits == 16) {
                v = read_le<std::int16_t>(p) / 32768.0;
            } else if (bits == 24) {
                std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                if (s & 0x800000) s |= ~0xFFFFFF;
                v = s / 8388608.0;
            } else {
                v = read_le<std::int32_t>(p) / 2147483648.0;
            }
            if (!std::isfinite(v)) throw fail("non-finite sample");
            out.channels[c][f] = v;
        }
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const WavData& data, WavEncoding encoding) {
    const auto channels = static_cast<std::uint16_t>(data.channels.size());
    if (channels == 0) throw DataError("cannot write WAV without channels");
    const std::size_t frames = data.frames();
    for (const auto& ch : data.channels) {
        if (ch.size() != frames) throw DimensionError("WAV channels differ in length");
    }
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : encoding == WavEncoding::Pcm24 ? 24 : 32;
    const std::uint16_t format = encoding == WavEncoding::Float32 ? kFormatFloat : kFormatPcm;
    const std::uint32_t block = channels * (bits / 8);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * block);
    const auto rate = static_cast<std::uint32_t>(std::lround(data.sample_rate));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_le<std::uint32_t>(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, format);
    put_le<std::uint16_t>(out, channels);
    put_le<std::uint32_t>(out, rate);
    put_le<std::uint32_t>(out, rate * block);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(block));
    put_le<std::uint16_t>(out, bits);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_le<std::uint32_t>(out, data_bytes);

    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double v = data.channels[c][f];
            switch (encoding) {
                case WavEncoding::Float32:
                    put_le<float>(out, static_cast<float>(v));
                    break;
                case WavEncoding::Pcm16:
                    put_le<std::int16_t>(out, static_cast<std::int16_t>(
                                                  std::lround(std::clamp(v, -1.0, 32767.0 / 32768.0) * 32768.0)));
                    break;
                case WavEncoding::Pcm24: {
                    const auto s = static_cast<std::int32_t>(
                        std::lround(std::clamp(v, -1.0, 8388607.0 / 8388608.0) * 8388608.0));
                    out.push_back(static_cast<std::uint8_t>(s & 0xFF));
                    out.push_back(static_cast<std::uint8_t>((s >> 8) & 0xFF));
                    out.push_back(static_cast<std::uint8_t>((s >> 16) & 0xFF));
                    break;
                }
            }
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write WAV file: " + path.string());
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

BFormatClip read_bformat(const std::filesystem::path& path) {
    auto wav = read_wav(path);
    if (wav.channels.size() != 4) {
        throw DataError("expected 4-channel B-format WAV: " + path.string());
    }
    BFormatClip clip;
    for (std::size_t c = 0; c < 4; ++c) {
        clip.channel(c).samples = std::move(wav.channels[c]);
        clip.channel(c).sample_rate = wav.sample_rate;
    }
    return clip;
}

StereoClip read_stereo(const std::filesystem::path& path) {
    auto wav = read_wav(path);
    StereoClip clip;
    if (wav.channels.size() == 1) {
        // Mono music drives both speakers.
        clip.left.samples = wav.channels[0];
        clip.right.samples = std::move(wav.channels[0]);
    } else if (wav.channels.size() == 2) {
        clip.left.samples = std::move(wav.channels[0]);
        clip.right.samples = std::move(wav.channels[1]);
    } else {
        throw DataError("expected mono or stereo music WAV: " + path.string());
    }
    clip.left.sample_rate = clip.right.sample_rate = wav.sample_rate;
    return clip;
}

void write_bformat(const std::filesystem::path& path, const BFormatClip& clip) {
    WavData data;
    data.sample_rate = clip.sample_rate();
    for (std::size_t c = 0; c < 4; ++c) data.channels.push_back(clip.channel(c).samples);
    write_wav(path, data);
}

void write_stereo(const std::filesystem::path& path, const StereoClip& clip) {
    WavData data;
    data.sample_rate = clip.sample_rate();
    data.channels = {clip.left.samples, clip.right.samples};
    write_wav(path, data);
}

std::vector<double> resample(const std::vector<double>& samples, double from_rate, double to_rate) {
    if (!(from_rate > 0.0) || !(to_rate > 0.0)) throw ConfigError("resample rates must be positive");
    if (from_rate == to_rate || samples.empty()) return samples;

    constexpr int kHalfTaps = 16;
    const double ratio = to_rate / from_rate;
    // Low-pass at the narrower Nyquist of the two rates.
    const double cutoff = std::min(1.0, ratio);
    const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * ratio));
    std::vector<double> out(n_out, 0.0);
    const auto n_in = static_cast<long>(samples.size());
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = static_cast<double>(i) / ratio;
        const auto center = static_cast<long>(std::floor(src));
        double acc = 0.0;
        for (long k = center - kHalfTaps + 1; k <= center + kHalfTaps; ++k) {
            if (k < 0 || k >= n_in) continue;
            const double t = src - static_cast<double>(k);
            const double x = std::numbers::pi * cutoff * t;
            const double sinc = std::abs(t) < 1e-12 ? 1.0 : std::sin(x) / x;
            const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * t / kHalfTaps));
            acc += samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
        }
        out[i] = acc;
    }
    return out;
}

}  // namespace acousticpose::signal
