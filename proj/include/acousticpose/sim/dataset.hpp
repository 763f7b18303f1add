#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/signal/audio.hpp"
#include "acousticpose/sim/bgm.hpp"
#include "acousticpose/sim/render.hpp"
#include "acousticpose/sim/skeleton.hpp"

namespace acousticpose::sim {

struct DatasetConfig {
    SceneConfig scene;
    std::vector<BgmSpec> bgms;
    std::vector<Motion> motions = all_motions();
    std::size_t subjects = 6;
    std::size_t clips_per_combo = 1;
    double clip_seconds = 6.0;
    // Length of each synthesised BGM track; records take random segments of it.
    double track_seconds = 60.0;
    double noise_snr_db = std::numeric_limits<double>::infinity();
    std::size_t test_subjects = 1;
    std::size_t val_subjects = 1;
    double sample_rate = signal::kDefaultSampleRate;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
    std::size_t record_count() const { return bgms.size() * subjects * motions.size() * clips_per_combo; }
};

struct NoiseInfo {
    double snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
};

struct RecordMeta {
    std::string id;
    std::size_t bgm_id = 0;
    BgmKind bgm_kind = BgmKind::Ambient;
    std::size_t subject = 0;
    Motion motion = Motion::Still;
    double music_offset_s = 0.0;
    std::uint64_t pose_seed = 0;
    NoiseInfo noise;
    std::size_t frames = 0;
};

struct DatasetRecord {
    RecordMeta meta;
    signal::BFormatClip recorded;
    signal::StereoClip music;
    PoseSequence poses;
};

// Record-id lists per split protocol: "single_music", "cross_music",
// "cross_genre"; each maps "train"/"val"/"test" to ids.
using SplitTable = std::map<std::string, std::map<std::string, std::vector<std::string>>>;

struct Manifest {
    std::uint64_t seed = 0;
    double sample_rate = signal::kDefaultSampleRate;
    double fps = kPoseFps;
    SceneConfig scene;
    std::vector<BgmSpec> bgms;
    std::vector<RecordMeta> records;
    SplitTable splits;
    std::vector<std::string> tags;
    // Relative file locations per record id.
    std::map<std::string, std::map<std::string, std::string>> files;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    const RecordMeta& record(const std::string& id) const;
    std::vector<std::string> split(const std::string& protocol, const std::string& subset) const;
};

// Held-out subjects give test/val; cross-music holds out the last non-jazz BGM;
// cross-genre trains on ambient tracks and tests on jazz ones.
SplitTable make_splits(const std::vector<RecordMeta>& records, const std::vector<BgmSpec>& bgms,
                       std::size_t subjects, std::size_t test_subjects, std::size_t val_subjects);

// Renders every record in memory. Deterministic in the config (including seed).
std::vector<DatasetRecord> generate_records(const DatasetConfig& config);

// Renders and writes `manifest.json` plus per-record recorded.wav / music.wav /
// poses.bin (+ poses.json) under `out_dir`.
Manifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

void write_poses(const std::filesystem::path& bin_path, const PoseSequence& poses);
PoseSequence read_poses(const std::filesystem::path& bin_path);

Manifest load_manifest(const std::filesystem::path& path);

nlohmann::json bgm_to_json(const BgmSpec& spec);
BgmSpec bgm_from_json(const nlohmann::json& j);

}  // namespace acousticpose::sim
