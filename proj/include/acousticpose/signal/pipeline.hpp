#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/signal/audio.hpp"
#include "acousticpose/signal/features.hpp"
#include "acousticpose/signal/mel.hpp"
#include "acousticpose/signal/stft.hpp"

namespace acousticpose::signal {

struct FeatureConfig {
    double sample_rate = kDefaultSampleRate;
    StftParams stft;
    std::size_t mel_bins = 128;
    double f_min = 20.0;
    double f_max = 24000.0;
    double log_floor = kLogFloor;
    IntensityNorm intensity_norm = IntensityNorm::L2;
    std::size_t window_frames = 12;
    std::size_t window_stride = 12;
    // Standardise each clip with its own statistics instead of frozen training-split stats.
    bool per_clip_standardize = false;

    void validate() const;
    nlohmann::json stft_json() const;
};

// Unstandardised per-clip features.
struct RawFeatures {
    FeatureTensor intensity;  // [3 x b x T]
    FeatureTensor recorded;   // log-mel of (w, x, y, z), [4 x b x T]
    FeatureTensor music;      // log-mel of (left, right), [2 x b x T]
};

struct FeatureStats {
    ChannelStats intensity, recorded, music;

    nlohmann::json to_json() const;
    static FeatureStats from_json(const nlohmann::json& j);
};

// Network-facing features: the 11-channel input and the standardised music log-mel
// that conditions frequency-wise attention.
struct NetworkFeatures {
    FeatureTensor input;  // [11 x b x T]
    FeatureTensor music;  // [2 x b x T]
};

class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureConfig config);

    const FeatureConfig& config() const { return config_; }
    const MelFilterBank& bank() const { return bank_; }

    // Throws AlignmentError when recording and music disagree by more than one frame.
    RawFeatures extract(const BFormatClip& recorded, const StereoClip& music) const;
    // Recorded-only features (log-mel + intensity), used by the separability study.
    RawFeatures extract_recorded(const BFormatClip& recorded) const;

private:
    FeatureConfig config_;
    MelFilterBank bank_;
};

FeatureStats fit_feature_stats(std::span<const RawFeatures> training);
NetworkFeatures finalize_features(const RawFeatures& raw, const FeatureStats& stats);

// Start frames of full windows of `length` frames taken every `stride` frames.
std::vector<std::size_t> window_starts(std::size_t frames, std::size_t length, std::size_t stride);

// Flat little-endian f32 payload plus JSON sidecar {shape, channel_layout, dtype, stft_params}.
void write_feature_file(const std::filesystem::path& bin_path, const FeatureTensor& t,
                        const std::vector<std::string>& layout, const nlohmann::json& stft_params);
FeatureTensor read_feature_file(const std::filesystem::path& bin_path);
std::filesystem::path sidecar_path(const std::filesystem::path& bin_path);

}  // namespace acousticpose::signal
