#include "acousticpose/cli/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "acousticpose/common/error.hpp"
#include "acousticpose/signal/wav.hpp"
#include "acousticpose/sim/skeleton.hpp"

namespace acousticpose::cli {

namespace fs = std::filesystem;

ClipFeatures extract_clip(const std::string& id, std::size_t bgm_id, const signal::BFormatClip& recorded,
                          const signal::StereoClip& music, const sim::PoseSequence& poses,
                          const signal::FeatureExtractor& extractor) {
    ClipFeatures c;
    c.id = id;
    c.bgm_id = bgm_id;
    c.raw = extractor.extract(recorded, music);
    const std::size_t audio = c.raw.recorded.frames;
    if (std::max(audio, poses.frames) - std::min(audio, poses.frames) > 1) {
        throw AlignmentError("record " + id + " has " + std::to_string(audio) + " audio frames but " +
                             std::to_string(poses.frames) + " pose frames");
    }
    c.frames = std::min(audio, poses.frames);
    c.poses.assign(poses.coords.begin(), poses.coords.begin() + static_cast<std::ptrdiff_t>(c.frames * sim::kPoseDims));
    return c;
}

std::vector<ClipFeatures> extract_records(const std::vector<sim::DatasetRecord>& records,
                                          const signal::FeatureExtractor& extractor) {
    std::vector<ClipFeatures> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(extract_clip(r.meta.id, r.meta.bgm_id, r.recorded, r.music, r.poses, extractor));
    return out;
}

namespace {

std::vector<const ClipFeatures*> select(const std::vector<ClipFeatures>& clips, const std::vector<std::string>& ids) {
    std::map<std::string, const ClipFeatures*> by_id;
    for (const auto& c : clips) by_id[c.id] = &c;
    std::vector<const ClipFeatures*> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("no features for record " + id);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

signal::FeatureStats fit_stats(const std::vector<ClipFeatures>& clips, const std::vector<std::string>& ids) {
    std::vector<signal::RawFeatures> raws;
    if (ids.empty()) {
        for (const auto& c : clips) raws.push_back(c.raw);
    } else {
        for (const auto* c : select(clips, ids)) raws.push_back(c->raw);
    }
    return signal::fit_feature_stats(raws);
}

train::WindowSet make_windows(const std::vector<ClipFeatures>& clips, const std::vector<std::string>& ids,
                              const signal::FeatureStats& stats, const signal::FeatureConfig& config) {
    train::WindowSet set;
    set.frames = config.window_frames;
    set.pose_dims = sim::kPoseDims;
    const std::size_t T = config.window_frames;
    for (const auto* c : select(clips, ids)) {
        const auto own = config.per_clip_standardize ? signal::fit_feature_stats(std::span(&c->raw, 1)) : stats;
        const auto net = signal::finalize_features(c->raw, own);
        const auto starts = signal::window_starts(c->frames, T, config.window_stride);
        for (std::size_t k = 0; k < starts.size(); ++k) {
            const std::size_t s = starts[k];
            char name[32];
            std::snprintf(name, sizeof name, "_w%03zu", k);
            set.add(net.input.frames_range(s, T), net.music.frames_range(s, T),
                    std::span(c->poses).subspan(s * sim::kPoseDims, T * sim::kPoseDims), c->bgm_id, c->id + name, c->id);
        }
    }
    return set;
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace {

signal::MonoSignal at_rate(const signal::MonoSignal& s, double rate) {
    if (s.sample_rate == rate) return s;
    return {signal::resample(s.samples, s.sample_rate, rate), rate};
}

}  // namespace

FeaturizeSummary featurize_dataset(const fs::path& dataset_dir, const fs::path& out_dir,
                                   const signal::FeatureConfig& config, const std::string& stats_protocol) {
    const auto manifest = sim::load_manifest(dataset_dir / "manifest.json");
    const signal::FeatureExtractor extractor(config);
    const double rate = config.sample_rate;

    FeaturizeSummary summary;
    std::vector<ClipFeatures> clips;
    for (const auto& meta : manifest.records) {
        ++summary.records;
        try {
            auto files = manifest.files.find(meta.id);
            if (files == manifest.files.end()) throw DataError("manifest lists no files");
            const auto& f = files->second;
            auto rec = signal::read_bformat(dataset_dir / f.at("recorded"));
            auto music = signal::read_stereo(dataset_dir / f.at("music"));
            for (std::size_t c = 0; c < 4; ++c) rec.channel(c) = at_rate(rec.channel(c), rate);
            for (std::size_t c = 0; c < 2; ++c) music.channel(c) = at_rate(music.channel(c), rate);
            const auto poses = sim::read_poses(dataset_dir / f.at("poses"));
            clips.push_back(extract_clip(meta.id, meta.bgm_id, rec, music, poses, extractor));
        } catch (const DataError& e) {
            summary.failures.emplace_back(meta.id, e.what());
        }
    }
    if (clips.empty()) throw EmptyInputError("no record of " + dataset_dir.string() + " could be featurized");

    std::set<std::string> loaded;
    for (const auto& c : clips) loaded.insert(c.id);
    std::vector<std::string> stat_ids;
    for (const auto& id : manifest.split(stats_protocol, "train")) {
        if (loaded.count(id)) stat_ids.push_back(id);
    }
    if (stat_ids.empty()) throw EmptyInputError("no training record of '" + stats_protocol + "' could be featurized");
    const auto stats = fit_stats(clips, stat_ids);

    fs::create_directories(out_dir / "windows");
    std::vector<std::string> all_ids;
    for (const auto& c : clips) all_ids.push_back(c.id);
    const auto windows = make_windows(clips, all_ids, stats, config);
    const auto layout_x = signal::input_channel_layout();
    const auto layout_m = signal::music_channel_layout();
    const auto stft = config.stft_json();

    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const std::string stem = windows.ids[i];
        const auto rel = fs::path("windows");
        signal::FeatureTensor x(windows.in_channels, windows.bins, windows.frames);
        signal::FeatureTensor m(windows.music_channels, windows.bins, windows.frames);
        std::copy_n(windows.x.begin() + static_cast<std::ptrdiff_t>(i * x.values.size()), x.values.size(), x.values.begin());
        std::copy_n(windows.m.begin() + static_cast<std::ptrdiff_t>(i * m.values.size()), m.values.size(), m.values.begin());
        signal::write_feature_file(out_dir / rel / (stem + "_x.bin"), x, layout_x, stft);
        signal::write_feature_file(out_dir / rel / (stem + "_m.bin"), m, layout_m, stft);
        sim::PoseSequence p(windows.frames);
        const auto span = windows.poses(i);
        std::copy(span.begin(), span.end(), p.coords.begin());
        sim::write_poses(out_dir / rel / (stem + "_p.bin"), p);
        entries.push_back({{"id", stem},
                           {"record", windows.records[i]},
                           {"bgm_id", windows.bgm[i]},
                           {"input", (rel / (stem + "_x.bin")).generic_string()},
                           {"music", (rel / (stem + "_m.bin")).generic_string()},
                           {"poses", (rel / (stem + "_p.bin")).generic_string()}});
    }
    summary.windows = windows.size();

    nlohmann::json failures = nlohmann::json::array();
    for (const auto& [id, why] : summary.failures) failures.push_back({{"record", id}, {"error", why}});
    const nlohmann::json index{{"dataset", fs::absolute(dataset_dir).lexically_normal().generic_string()},
                               {"features", stft},
                               {"window_frames", config.window_frames},
                               {"window_stride", config.window_stride},
                               {"per_clip_standardize", config.per_clip_standardize},
                               {"stats_protocol", stats_protocol},
                               {"stats", stats.to_json()},
                               {"splits", manifest.to_json().at("splits")},
                               {"windows", entries},
                               {"failures", failures}};
    std::ofstream out(out_dir / "index.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (out_dir / "index.json").string());
    out << index.dump(2) << '\n';
    return summary;
}

nlohmann::json read_index(const fs::path& feature_dir) {
    std::ifstream in(feature_dir / "index.json");
    if (!in) throw DataError("no feature index in " + feature_dir.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("feature index is not valid JSON: " + std::string(e.what()));
    }
}

train::WindowSet load_windows(const fs::path& feature_dir, const std::string& protocol, const std::string& subset) {
    const auto index = read_index(feature_dir);
    std::vector<std::string> ids;
    try {
        const auto& splits = index.at("splits");
        if (!splits.contains(protocol)) throw ConfigError("features have no '" + protocol + "' split");
        if (!splits.at(protocol).contains(subset)) throw ConfigError("split '" + protocol + "' has no '" + subset + "'");
        ids = splits.at(protocol).at(subset).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad feature index: " + std::string(e.what()));
    }
    const std::set<std::string> wanted(ids.begin(), ids.end());

    std::map<std::string, std::vector<const nlohmann::json*>> by_record;
    for (const auto& w : index.at("windows")) by_record[w.at("record").get<std::string>()].push_back(&w);

    train::WindowSet set;
    set.frames = index.at("window_frames").get<std::size_t>();
    set.pose_dims = sim::kPoseDims;
    for (const auto& id : ids) {
        auto it = by_record.find(id);
        if (it == by_record.end()) continue;  // record failed to featurize or was too short
        for (const auto* w : it->second) {
            const auto x = signal::read_feature_file(feature_dir / w->at("input").get<std::string>());
            const auto m = signal::read_feature_file(feature_dir / w->at("music").get<std::string>());
            const auto p = sim::read_poses(feature_dir / w->at("poses").get<std::string>());
            set.add(x, m, p.coords, w->at("bgm_id").get<std::size_t>(), w->at("id").get<std::string>(), id);
        }
    }
    return set;
}

}  // namespace acousticpose::cli
