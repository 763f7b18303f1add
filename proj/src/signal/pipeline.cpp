#include "acousticpose/signal/pipeline.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {

void FeatureConfig::validate() const {
    stft.validate();
    if (!(sample_rate > 0.0)) throw ConfigError("features.sample_rate must be positive");
    if (mel_bins == 0) throw ConfigError("features.mel_bins must be >= 1");
    if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
        throw ConfigError("features frequency range must satisfy 0 <= f_min < f_max <= sample_rate/2");
    }
    if (!(log_floor > 0.0)) throw ConfigError("features.log_floor must be positive");
    if (window_frames == 0 || window_stride == 0) throw ConfigError("feature windows must be non-empty");
}

nlohmann::json FeatureConfig::stft_json() const {
    return {{"sample_rate", sample_rate},
            {"n_fft", stft.n_fft},
            {"hop", stft.hop},
            {"window", stft.window == WindowKind::Hann ? "hann" : "rectangular"},
            {"frame_rate", sample_rate / static_cast<double>(stft.hop)},
            {"mel_bins", mel_bins},
            {"f_min", f_min},
            {"f_max", f_max},
            {"log_floor", log_floor},
            {"intensity_norm", intensity_norm == IntensityNorm::L2 ? "l2" : "l1"}};
}

namespace {

nlohmann::json stats_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

ChannelStats stats_from(const nlohmann::json& j) {
    ChannelStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("std").get<std::vector<double>>();
    return s;
}

}  // namespace

nlohmann::json FeatureStats::to_json() const {
    return {{"intensity", stats_json(intensity)}, {"recorded", stats_json(recorded)}, {"music", stats_json(music)}};
}

FeatureStats FeatureStats::from_json(const nlohmann::json& j) {
    return {stats_from(j.at("intensity")), stats_from(j.at("recorded")), stats_from(j.at("music"))};
}

FeatureExtractor::FeatureExtractor(FeatureConfig config) : config_(std::move(config)) {
    config_.validate();
    bank_ = build_mel_bank(config_.mel_bins, config_.stft.n_fft, config_.sample_rate, config_.f_min, config_.f_max);
}

RawFeatures FeatureExtractor::extract_recorded(const BFormatClip& recorded) const {
    recorded.validate();
    if (recorded.sample_rate() != config_.sample_rate) {
        throw DataError("recording sample rate differs from feature configuration");
    }
    std::vector<StftGrid> grids;
    grids.reserve(4);
    for (std::size_t c = 0; c < 4; ++c) grids.push_back(stft(recorded.channel(c), config_.stft));

    RawFeatures raw;
    raw.intensity = intensity_vector(grids[0], grids[1], grids[2], grids[3], bank_, config_.intensity_norm);
    std::vector<FeatureTensor> mels;
    for (const auto& g : grids) mels.push_back(log_mel(g, bank_, config_.log_floor));
    raw.recorded = concat_channels(mels);
    return raw;
}

RawFeatures FeatureExtractor::extract(const BFormatClip& recorded, const StereoClip& music) const {
    music.validate();
    if (music.sample_rate() != config_.sample_rate) {
        throw DataError("music sample rate differs from feature configuration; resample first");
    }
    RawFeatures raw = extract_recorded(recorded);
    std::vector<FeatureTensor> mels;
    for (std::size_t c = 0; c < 2; ++c) mels.push_back(log_mel(stft(music.channel(c), config_.stft), bank_, config_.log_floor));
    raw.music = concat_channels(mels);

    const std::size_t a = raw.recorded.frames, b = raw.music.frames;
    if (a != b) {
        if (std::max(a, b) - std::min(a, b) > 1) {
            throw AlignmentError("recording has " + std::to_string(a) + " frames but music has " + std::to_string(b));
        }
        const std::size_t n = std::min(a, b);
        raw.intensity = raw.intensity.frames_range(0, n);
        raw.recorded = raw.recorded.frames_range(0, n);
        raw.music = raw.music.frames_range(0, n);
    }
    return raw;
}

FeatureStats fit_feature_stats(std::span<const RawFeatures> training) {
    if (training.empty()) throw EmptyInputError("no clips to fit feature statistics on");
    ChannelStatsAccumulator i(3), r(4), m(2);
    for (const auto& raw : training) {
        i.add(raw.intensity);
        r.add(raw.recorded);
        m.add(raw.music);
    }
    return {i.finish(), r.finish(), m.finish()};
}

NetworkFeatures finalize_features(const RawFeatures& raw, const FeatureStats& stats) {
    const auto intensity = standardize_channels(raw.intensity, stats.intensity);
    const auto recorded = standardize_channels(raw.recorded, stats.recorded);
    auto music = standardize_channels(raw.music, stats.music);
    const auto diffs = difference_features(recorded, music.channels_range(0, 1), music.channels_range(1, 1));
    return {assemble_input(intensity, diffs), std::move(music)};
}

std::vector<std::size_t> window_starts(std::size_t frames, std::size_t length, std::size_t stride) {
    std::vector<std::size_t> starts;
    if (length == 0 || stride == 0) return starts;
    for (std::size_t s = 0; s + length <= frames; s += stride) starts.push_back(s);
    return starts;
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
    auto p = bin_path;
    p.replace_extension(".json");
    return p;
}

void write_feature_file(const std::filesystem::path& bin_path, const FeatureTensor& t,
                        const std::vector<std::string>& layout, const nlohmann::json& stft_params) {
    if (layout.size() != t.channels) throw DimensionError("channel layout does not match tensor");
    {
        std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + bin_path.string());
        std::vector<float> buf(t.values.begin(), t.values.end());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    nlohmann::json side = {{"shape", {t.channels, t.bins, t.frames}},
                           {"channel_layout", layout},
                           {"dtype", "float32"},
                           {"endianness", "little"},
                           {"stft_params", stft_params}};
    std::ofstream js(sidecar_path(bin_path), std::ios::trunc);
    js << side.dump(2) << '\n';
}

FeatureTensor read_feature_file(const std::filesystem::path& bin_path) {
    std::ifstream js(sidecar_path(bin_path));
    if (!js) throw DataError("missing sidecar for " + bin_path.string());
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad feature sidecar " + bin_path.string() + ": " + e.what());
    }
    if (side.value("dtype", "") != "float32") throw DataError("unsupported feature dtype in " + bin_path.string());
    const auto shape = side.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw DataError("feature shape must be rank 3");
    FeatureTensor t(shape[0], shape[1], shape[2]);
    std::vector<float> buf(t.values.size());
    std::ifstream in(bin_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
        throw DataError("truncated feature file " + bin_path.string());
    }
    std::copy(buf.begin(), buf.end(), t.values.begin());
    return t;
}

}  // namespace acousticpose::signal
