#include "acousticpose/sim/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"
#include "acousticpose/signal/wav.hpp"

namespace acousticpose::sim {
namespace fs = std::filesystem;

void DatasetConfig::validate() const {
    scene.validate();
    if (bgms.empty() || motions.empty() || subjects == 0 || clips_per_combo == 0) {
        throw ConfigError("dataset configuration is empty (need BGMs, motions, subjects and clips)");
    }
    for (const auto& b : bgms) b.validate();
    if (!(clip_seconds > 0.0) || track_seconds < clip_seconds) {
        throw ConfigError("dataset needs clip_seconds > 0 and track_seconds >= clip_seconds");
    }
    if (subjects <= test_subjects + val_subjects) {
        throw ConfigError("dataset needs more subjects than held-out test + val subjects");
    }
    if (!(sample_rate > 0.0)) throw ConfigError("dataset.sample_rate must be positive");
}

nlohmann::json bgm_to_json(const BgmSpec& s) {
    return {{"kind", bgm_kind_name(s.kind)},
            {"harmonics", s.harmonics},
            {"level_rms", s.level_rms},
            {"chord_seconds", s.chord_seconds},
            {"tempo_bpm", s.tempo_bpm},
            {"amplitude_lfo_hz", s.amplitude_lfo_hz},
            {"pitch_drift_cents", s.pitch_drift_cents},
            {"silence_per_minute", s.silence_per_minute},
            {"chirp_period_s", s.chirp_period_s},
            {"chirp_f0", s.chirp_f0},
            {"chirp_f1", s.chirp_f1},
            {"wav_path", s.wav_path},
            {"seed", s.seed}};
}

BgmSpec bgm_from_json(const nlohmann::json& j) {
    BgmSpec s;
    s.kind = parse_bgm_kind(j.at("kind").get<std::string>());
    s.harmonics = j.at("harmonics");
    s.level_rms = j.at("level_rms");
    s.chord_seconds = j.at("chord_seconds");
    s.tempo_bpm = j.at("tempo_bpm");
    s.amplitude_lfo_hz = j.at("amplitude_lfo_hz");
    s.pitch_drift_cents = j.at("pitch_drift_cents");
    s.silence_per_minute = j.at("silence_per_minute");
    s.chirp_period_s = j.at("chirp_period_s");
    s.chirp_f0 = j.at("chirp_f0");
    s.chirp_f1 = j.at("chirp_f1");
    s.wav_path = j.at("wav_path");
    s.seed = j.at("seed");
    return s;
}

namespace {

nlohmann::json snr_json(double snr) { return std::isinf(snr) ? nlohmann::json(nullptr) : nlohmann::json(snr); }
double snr_from(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::string record_id(std::size_t bgm, std::size_t subject, Motion m, std::size_t clip) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "b%02zu_s%02zu_%s_c%02zu", bgm, subject, std::string(motion_name(m)).c_str(), clip);
    return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

SplitTable make_splits(const std::vector<RecordMeta>& records, const std::vector<BgmSpec>& bgms,
                       std::size_t subjects, std::size_t test_subjects, std::size_t val_subjects) {
    auto subset_of = [&](std::size_t subject) -> std::string {
        if (subject >= subjects - test_subjects) return "test";
        if (subject >= subjects - test_subjects - val_subjects) return "val";
        return "train";
    };
    SplitTable table;
    for (const auto& r : records) table["single_music"][subset_of(r.subject)].push_back(r.id);

    if (bgms.size() >= 2) {
        std::size_t held = bgms.size() - 1;
        for (std::size_t b = bgms.size(); b-- > 0;) {
            if (bgms[b].kind != BgmKind::Jazz) {
                held = b;
                break;
            }
        }
        for (const auto& r : records) {
            const auto subset = subset_of(r.subject);
            if (r.bgm_id != held && subset == "train") table["cross_music"]["train"].push_back(r.id);
            if (r.bgm_id == held && subset != "train") table["cross_music"][subset].push_back(r.id);
        }
    }

    const bool has_jazz = std::any_of(bgms.begin(), bgms.end(), [](auto& b) { return b.kind == BgmKind::Jazz; });
    const bool has_ambient =
        std::any_of(bgms.begin(), bgms.end(), [](auto& b) { return b.kind == BgmKind::Ambient; });
    if (has_jazz && has_ambient) {
        for (const auto& r : records) {
            const auto subset = subset_of(r.subject);
            if (r.bgm_kind == BgmKind::Ambient && subset == "train") table["cross_genre"]["train"].push_back(r.id);
            if (r.bgm_kind == BgmKind::Jazz && subset != "train") table["cross_genre"][subset].push_back(r.id);
        }
    }
    for (auto& [name, subsets] : table) {
        for (const char* s : {"train", "val", "test"}) subsets[s];
    }
    return table;
}

std::vector<DatasetRecord> generate_records(const DatasetConfig& cfg) {
    cfg.validate();
    const auto frames = static_cast<std::size_t>(std::lround(cfg.clip_seconds * kPoseFps));
    const auto clip_samples = static_cast<std::size_t>(std::lround(static_cast<double>(frames) * cfg.sample_rate / kPoseFps));

    std::vector<signal::StereoClip> tracks;
    for (std::size_t b = 0; b < cfg.bgms.size(); ++b) {
        tracks.push_back(synth_bgm(cfg.bgms[b], cfg.track_seconds, derive_seed(cfg.seed, {0xB6E, b}), cfg.sample_rate));
    }

    std::vector<DatasetRecord> records;
    for (std::size_t b = 0; b < cfg.bgms.size(); ++b) {
        for (std::size_t s = 0; s < cfg.subjects; ++s) {
            for (auto m : cfg.motions) {
                for (std::size_t k = 0; k < cfg.clips_per_combo; ++k) {
                    DatasetRecord r;
                    r.meta.id = record_id(b, s, m, k);
                    r.meta.bgm_id = b;
                    r.meta.bgm_kind = cfg.bgms[b].kind;
                    r.meta.subject = s;
                    r.meta.motion = m;
                    r.meta.frames = frames;
                    r.meta.pose_seed = derive_seed(cfg.seed, {0x905E, b, s, static_cast<std::uint64_t>(m), k});
                    Rng rng(derive_seed(r.meta.pose_seed, {0x0FF5E7}));
                    const std::size_t max_offset = tracks[b].size() - clip_samples;
                    const auto offset = static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(max_offset));
                    r.meta.music_offset_s = static_cast<double>(offset) / cfg.sample_rate;
                    r.meta.noise = {cfg.noise_snr_db, derive_seed(r.meta.pose_seed, {0x401})};
                    records.push_back(std::move(r));
                }
            }
        }
    }

    parallel_for(records.size(), cfg.threads, [&](std::size_t i) {
        auto& r = records[i];
        const auto& track = tracks[r.meta.bgm_id];
        const auto offset = static_cast<std::size_t>(std::lround(r.meta.music_offset_s * cfg.sample_rate));
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& src = track.channel(c).samples;
            r.music.channel(c).samples.assign(src.begin() + static_cast<std::ptrdiff_t>(offset),
                                              src.begin() + static_cast<std::ptrdiff_t>(offset + clip_samples));
            r.music.channel(c).sample_rate = cfg.sample_rate;
        }
        const auto subject = SubjectProfile::sample(derive_seed(cfg.seed, {0x50B, r.meta.subject}));
        r.poses = gen_pose_sequence(r.meta.motion, cfg.clip_seconds, r.meta.pose_seed, subject);
        r.recorded = render_recording(cfg.scene, r.music, r.poses);
        if (!std::isinf(cfg.noise_snr_db)) {
            r.recorded = add_gaussian_noise(r.recorded, cfg.noise_snr_db, r.meta.noise.seed);
        }
    });
    return records;
}

void write_poses(const fs::path& bin_path, const PoseSequence& poses) {
    {
        std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + bin_path.string());
        std::vector<float> buf(poses.coords.begin(), poses.coords.end());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    auto side = bin_path;
    side.replace_extension(".json");
    std::ofstream js(side, std::ios::trunc);
    js << nlohmann::json{{"shape", {poses.frames, kPoseDims}},
                         {"dtype", "float32"},
                         {"endianness", "little"},
                         {"fps", poses.fps},
                         {"joints", kJoints},
                         {"layout", "frame-major, joint-major, xyz"}}
              .dump(2)
       << '\n';
}

PoseSequence read_poses(const fs::path& bin_path) {
    auto side = bin_path;
    side.replace_extension(".json");
    std::ifstream js(side);
    if (!js) throw DataError("missing pose sidecar " + side.string());
    const auto meta = nlohmann::json::parse(js);
    const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[1] != kPoseDims) throw DataError("pose file must be [frames x 63]");
    PoseSequence poses(shape[0], meta.value("fps", kPoseFps));
    std::vector<float> buf(poses.coords.size());
    std::ifstream in(bin_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
        throw DataError("truncated pose file " + bin_path.string());
    }
    std::copy(buf.begin(), buf.end(), poses.coords.begin());
    return poses;
}

nlohmann::json Manifest::to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j = {{"id", r.id},
                            {"bgm_id", r.bgm_id},
                            {"bgm_kind", bgm_kind_name(r.bgm_kind)},
                            {"subject", r.subject},
                            {"motion", motion_name(r.motion)},
                            {"music_offset_s", r.music_offset_s},
                            {"pose_seed", r.pose_seed},
                            {"frames", r.frames},
                            {"noise", {{"snr_db", snr_json(r.noise.snr_db)}, {"seed", r.noise.seed}}}};
        if (auto it = files.find(r.id); it != files.end()) j["files"] = it->second;
        recs.push_back(std::move(j));
    }
    nlohmann::json bgm = nlohmann::json::array();
    for (std::size_t b = 0; b < bgms.size(); ++b) {
        auto j = bgm_to_json(bgms[b]);
        j["id"] = b;
        bgm.push_back(std::move(j));
    }
    return {{"format", "acousticpose-dataset"},
            {"version", 1},
            {"seed", seed},
            {"sample_rate", sample_rate},
            {"fps", fps},
            {"scene", scene.to_json()},
            {"bgms", bgm},
            {"tags", tags},
            {"records", recs},
            {"splits", splits}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        m.seed = j.at("seed");
        m.sample_rate = j.at("sample_rate");
        m.fps = j.at("fps");
        m.scene = SceneConfig::from_json(j.at("scene"));
        for (const auto& b : j.at("bgms")) m.bgms.push_back(bgm_from_json(b));
        m.tags = j.value("tags", std::vector<std::string>{});
        for (const auto& r : j.at("records")) {
            RecordMeta meta;
            meta.id = r.at("id");
            meta.bgm_id = r.at("bgm_id");
            meta.bgm_kind = parse_bgm_kind(r.at("bgm_kind").get<std::string>());
            meta.subject = r.at("subject");
            meta.motion = parse_motion(r.at("motion").get<std::string>());
            meta.music_offset_s = r.at("music_offset_s");
            meta.pose_seed = r.at("pose_seed");
            meta.frames = r.at("frames");
            meta.noise = {snr_from(r.at("noise").at("snr_db")), r.at("noise").at("seed").get<std::uint64_t>()};
            if (r.contains("files")) m.files[meta.id] = r.at("files").get<std::map<std::string, std::string>>();
            m.records.push_back(std::move(meta));
        }
        m.splits = j.at("splits").get<SplitTable>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

const RecordMeta& Manifest::record(const std::string& id) const {
    for (const auto& r : records) {
        if (r.id == id) return r;
    }
    throw DataError("unknown record id " + id);
}

std::vector<std::string> Manifest::split(const std::string& protocol, const std::string& subset) const {
    auto it = splits.find(protocol);
    if (it == splits.end()) throw ConfigError("dataset has no '" + protocol + "' split");
    auto sub = it->second.find(subset);
    if (sub == it->second.end()) throw ConfigError("split '" + protocol + "' has no '" + subset + "' subset");
    return sub->second;
}

Manifest build_dataset(const DatasetConfig& config, const fs::path& out_dir) {
    auto records = generate_records(config);
    fs::create_directories(out_dir / "records");

    Manifest m;
    m.seed = config.seed;
    m.sample_rate = config.sample_rate;
    m.scene = config.scene;
    m.bgms = config.bgms;
    if (std::any_of(config.bgms.begin(), config.bgms.end(), [](auto& b) { return b.kind == BgmKind::Chirp; })) {
        m.tags.push_back("separability");
    }
    for (auto& r : records) {
        const fs::path rel = fs::path("records") / r.meta.id;
        fs::create_directories(out_dir / rel);
        signal::write_bformat(out_dir / rel / "recorded.wav", r.recorded);
        signal::write_stereo(out_dir / rel / "music.wav", r.music);
        write_poses(out_dir / rel / "poses.bin", r.poses);
        m.files[r.meta.id] = {{"recorded", (rel / "recorded.wav").generic_string()},
                              {"music", (rel / "music.wav").generic_string()},
                              {"poses", (rel / "poses.bin").generic_string()}};
        m.records.push_back(r.meta);
    }
    m.splits = make_splits(m.records, config.bgms, config.subjects, config.test_subjects, config.val_subjects);

    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in " + out_dir.string());
    out << m.to_json().dump(2) << '\n';
    return m;
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    try {
        return Manifest::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("manifest is not valid JSON: ") + e.what());
    }
}

}  // namespace acousticpose::sim
