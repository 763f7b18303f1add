#include "acousticpose/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <CLI11.hpp>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::cli {

namespace {

using Values = std::vector<std::string>;

struct Field {
    std::string key;
    std::function<void(const Values&)> read;
    std::function<std::string()> write;
};

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    if (s.find('"') != std::string::npos) return "'" + s + "'";
    return "\"" + s + "\"";
}

const std::string& scalar(const std::string& key, const Values& v) {
    if (v.size() != 1) throw ConfigError("'" + key + "' expects a single value");
    return v.front();
}

double parse_double(const std::string& key, const std::string& s) {
    if (s == "inf" || s == "+inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + s + "'");
    }
    return v;
}

Field f_double(const std::string& key, double& ref) {
    return {key, [&ref, key](const Values& v) { ref = parse_double(key, scalar(key, v)); },
            [&ref] { return format_double(ref); }};
}

template <typename U>
Field f_uint(const std::string& key, U& ref) {
    return {key, [&ref, key](const Values& v) { ref = static_cast<U>(parse_uint(key, scalar(key, v))); },
            [&ref] { return std::to_string(ref); }};
}

Field f_int(const std::string& key, int& ref) {
    return {key,
            [&ref, key](const Values& v) {
                const auto& s = scalar(key, v);
                auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), ref);
                if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("'" + key + "' expects an integer");
            },
            [&ref] { return std::to_string(ref); }};
}

Field f_bool(const std::string& key, bool& ref) {
    return {key,
            [&ref, key](const Values& v) {
                const auto& s = scalar(key, v);
                if (s != "true" && s != "false") throw ConfigError("'" + key + "' expects true or false");
                ref = s == "true";
            },
            [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field f_string(const std::string& key, std::string& ref) {
    return {key, [&ref, key](const Values& v) { ref = v.empty() ? std::string() : scalar(key, v); },
            [&ref] { return quote(ref); }};
}

Field f_vec3(const std::string& key, sim::Vec3& ref) {
    return {key,
            [&ref, key](const Values& v) {
                if (v.size() != 3) throw ConfigError("'" + key + "' expects three numbers");
                for (int i = 0; i < 3; ++i) ref[i] = parse_double(key, v[static_cast<std::size_t>(i)]);
            },
            [&ref] { return "[" + format_double(ref[0]) + ", " + format_double(ref[1]) + ", " + format_double(ref[2]) + "]"; }};
}

Field f_sizes(const std::string& key, std::vector<std::size_t>& ref) {
    return {key,
            [&ref, key](const Values& v) {
                ref.clear();
                for (const auto& s : v) ref.push_back(parse_uint(key, s));
            },
            [&ref] {
                std::string s = "[";
                for (std::size_t i = 0; i < ref.size(); ++i) s += (i ? ", " : "") + std::to_string(ref[i]);
                return s + "]";
            }};
}

template <typename E>
Field f_enum(const std::string& key, E& ref, std::vector<std::pair<E, std::string>> names) {
    return {key,
            [&ref, key, names](const Values& v) {
                const auto& s = scalar(key, v);
                for (const auto& [e, n] : names) {
                    if (n == s) {
                        ref = e;
                        return;
                    }
                }
                std::string allowed;
                for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : ", ") + n;
                throw ConfigError("'" + key + "' must be one of: " + allowed);
            },
            [&ref, names] {
                for (const auto& [e, n] : names) {
                    if (e == ref) return quote(n);
                }
                return quote("");
            }};
}

Field f_bgm_kind(const std::string& key, sim::BgmKind& ref) {
    return f_enum<sim::BgmKind>(key, ref,
                                {{sim::BgmKind::Ambient, "ambient"},
                                 {sim::BgmKind::Jazz, "jazz"},
                                 {sim::BgmKind::Chirp, "chirp"},
                                 {sim::BgmKind::WavFile, "wav"}});
}

Field f_motions(const std::string& key, std::vector<sim::Motion>& ref) {
    return {key,
            [&ref, key](const Values& v) {
                ref.clear();
                for (const auto& s : v) {
                    try {
                        ref.push_back(sim::parse_motion(s));
                    } catch (const Error& e) {
                        throw ConfigError("'" + key + "': " + e.what());
                    }
                }
            },
            [&ref] {
                std::string s = "[";
                for (std::size_t i = 0; i < ref.size(); ++i) s += (i ? ", " : "") + quote(std::string(sim::motion_name(ref[i])));
                return s + "]";
            }};
}

std::vector<Field> scene_fields(sim::SceneConfig& s) {
    return {f_vec3("mic", s.mic),
            f_vec3("speaker_left", s.speakers[0]),
            f_vec3("speaker_right", s.speakers[1]),
            f_vec3("subject_origin", s.subject_origin),
            f_double("body_scale", s.body_scale),
            f_double("speed_of_sound", s.speed_of_sound),
            f_double("direct_gain", s.direct_gain),
            f_double("reflection_gain", s.reflection_gain),
            f_bool("wall_reflections", s.wall_reflections),
            f_vec3("room_min", s.room_min),
            f_vec3("room_max", s.room_max),
            f_double("wall_reflectivity", s.wall_reflectivity)};
}

std::vector<Field> bgm_fields(sim::BgmSpec& b) {
    return {f_bgm_kind("kind", b.kind),
            f_int("harmonics", b.harmonics),
            f_double("level_rms", b.level_rms),
            f_double("chord_seconds", b.chord_seconds),
            f_double("tempo_bpm", b.tempo_bpm),
            f_double("amplitude_lfo_hz", b.amplitude_lfo_hz),
            f_double("pitch_drift_cents", b.pitch_drift_cents),
            f_double("silence_per_minute", b.silence_per_minute),
            f_double("chirp_period_s", b.chirp_period_s),
            f_double("chirp_f0", b.chirp_f0),
            f_double("chirp_f1", b.chirp_f1),
            f_string("wav_path", b.wav_path),
            f_uint("seed", b.seed)};
}

std::vector<Field> dataset_fields(sim::DatasetConfig& d) {
    return {f_motions("motions", d.motions),
            f_uint("subjects", d.subjects),
            f_uint("clips_per_combo", d.clips_per_combo),
            f_double("clip_seconds", d.clip_seconds),
            f_double("track_seconds", d.track_seconds),
            f_double("noise_snr_db", d.noise_snr_db),
            f_uint("test_subjects", d.test_subjects),
            f_uint("val_subjects", d.val_subjects),
            f_double("sample_rate", d.sample_rate)};
}

std::vector<Field> features_fields(RunConfig& c) {
    auto& f = c.features;
    return {f_double("sample_rate", f.sample_rate),
            f_uint("n_fft", f.stft.n_fft),
            f_uint("hop", f.stft.hop),
            f_enum<signal::WindowKind>("window", f.stft.window,
                                       {{signal::WindowKind::Hann, "hann"}, {signal::WindowKind::Rectangular, "rectangular"}}),
            f_uint("mel_bins", f.mel_bins),
            f_double("f_min", f.f_min),
            f_double("f_max", f.f_max),
            f_double("log_floor", f.log_floor),
            f_enum<signal::IntensityNorm>("intensity_norm", f.intensity_norm,
                                          {{signal::IntensityNorm::L2, "l2"}, {signal::IntensityNorm::L1, "l1"}}),
            f_uint("window_frames", f.window_frames),
            f_uint("window_stride", f.window_stride),
            f_bool("per_clip_standardize", f.per_clip_standardize),
            f_string("stats_protocol", c.stats_protocol)};
}

std::vector<Field> model_fields(model::FaConfig& m) {
    return {f_uint("mel_bins", m.mel_bins),
            f_uint("frames", m.frames),
            f_uint("in_channels", m.in_channels),
            f_uint("music_channels", m.music_channels),
            f_uint("joints", m.joints),
            f_uint("latent_dim", m.latent_dim),
            f_sizes("pre_channels", m.pre_channels),
            f_sizes("post_channels", m.post_channels),
            f_uint("pre_kernel_freq", m.pre_kernel_freq),
            f_uint("pre_kernel_time", m.pre_kernel_time),
            f_uint("post_kernel_freq", m.post_kernel_freq),
            f_uint("post_kernel_time", m.post_kernel_time),
            f_uint("freq_stride", m.freq_stride),
            f_sizes("unet_channels", m.unet_channels),
            f_uint("head_channels", m.head_channels),
            f_uint("cpe_dim", m.cpe_dim),
            f_uint("cpe_ffn", m.cpe_ffn),
            f_bool("use_fa", m.use_fa),
            f_bool("unet_skips", m.unet_skips),
            f_bool("cpe_detach", m.cpe_detach)};
}

std::vector<Field> train_fields(RunConfig& c) {
    auto& t = c.train;
    return {f_uint("batch_size", t.batch_size),
            f_uint("epochs", t.epochs),
            f_double("lr_max", t.lr_max),
            f_double("lr_min", t.lr_min),
            f_double("ema_decay", t.ema_decay),
            f_bool("ema_warmup", t.ema_warmup),
            f_double("w_alpha", t.weights.w_alpha),
            f_double("w_beta", t.weights.w_beta),
            f_double("tau", t.weights.tau),
            f_double("adam_beta1", t.adam.beta1),
            f_double("adam_beta2", t.adam.beta2),
            f_double("adam_eps", t.adam.eps),
            f_uint("group_size", t.group_size),
            f_uint("checkpoint_every", t.checkpoint_every),
            f_bool("f64", t.f64),
            f_string("protocol", c.train_protocol)};
}

std::vector<Field> eval_fields(EvalConfig& e) {
    return {f_string("protocol", e.protocol), f_string("subset", e.subset), f_uint("batch_size", e.batch_size),
            f_bool("use_ema", e.use_ema), f_bool("svg", e.svg)};
}

const std::vector<std::string>& section_names() {
    static const std::vector<std::string> names{"scene", "bgm", "dataset", "features", "model", "train", "eval"};
    return names;
}

std::vector<Field> fields_for(RunConfig& c, const std::string& section) {
    if (section.empty()) return {f_uint("seed", c.seed)};
    if (section == "scene") return scene_fields(c.dataset.scene);
    if (section == "bgm") return bgm_fields(c.dataset.bgms.back());
    if (section == "dataset") return dataset_fields(c.dataset);
    if (section == "features") return features_fields(c);
    if (section == "model") return model_fields(c.model);
    if (section == "train") return train_fields(c);
    if (section == "eval") return eval_fields(c.eval);
    throw ConfigError("unknown config section [" + section + "]");
}

void write_section(std::ostringstream& out, const std::string& header, const std::vector<Field>& fields) {
    out << header << '\n';
    for (const auto& f : fields) out << f.key << " = " << f.write() << '\n';
    out << '\n';
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    sim::BgmSpec a;
    a.kind = sim::BgmKind::Ambient;
    a.seed = 1;
    sim::BgmSpec b = a;
    b.seed = 2;
    b.chord_seconds = 4.0;
    b.harmonics = 5;
    sim::BgmSpec j;
    j.kind = sim::BgmKind::Jazz;
    j.seed = 3;
    c.dataset.bgms = {a, b, j};
    c.set_seed(0);
    return c;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    dataset.seed = s;
    train.seed = s;
}

std::uint64_t RunConfig::model_seed() const { return derive_seed(seed, {0x30DE1}); }

void RunConfig::validate() const {
    dataset.validate();
    features.validate();
    model.validate();
    train.validate();
    if (model.mel_bins != features.mel_bins) throw ConfigError("model.mel_bins must equal features.mel_bins");
    if (model.frames != features.window_frames) throw ConfigError("model.frames must equal features.window_frames");
    if (model.joints != sim::kJoints) throw ConfigError("model.joints must be " + std::to_string(sim::kJoints));
    if (model.in_channels != signal::kInputChannels || model.music_channels != 2) {
        throw ConfigError("model channel counts must match the feature layout (11 input, 2 music)");
    }
    if (features.sample_rate != dataset.sample_rate) throw ConfigError("features.sample_rate must equal dataset.sample_rate");
    if (eval.batch_size == 0) throw ConfigError("eval.batch_size must be positive");
    for (const auto* p : {&stats_protocol, &train_protocol, &eval.protocol}) {
        if (*p != "single_music" && *p != "cross_music" && *p != "cross_genre") {
            throw ConfigError("unknown split protocol '" + *p + "'");
        }
    }
    if (eval.subset != "train" && eval.subset != "val" && eval.subset != "test") {
        throw ConfigError("eval.subset must be train, val or test");
    }
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig c = RunConfig::defaults();
    std::istringstream in{std::string(text)};
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    bool bgm_seen = false;
    for (const auto& item : items) {
        if (item.parents.size() > 1) throw ConfigError("nested config tables are not supported");
        const std::string section = item.parents.empty() ? "" : item.parents.front();
        if (item.name == "++") {
            if (std::find(section_names().begin(), section_names().end(), section) == section_names().end()) {
                throw ConfigError("unknown config section [" + section + "]");
            }
            if (section == "bgm") {
                if (!bgm_seen) c.dataset.bgms.clear();
                bgm_seen = true;
                c.dataset.bgms.emplace_back();
            }
            continue;
        }
        if (item.name == "--") continue;
        const auto fields = fields_for(c, section);
        auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == item.name; });
        if (it == fields.end()) {
            throw ConfigError("unknown config key '" + (section.empty() ? item.name : section + "." + item.name) + "'");
        }
        it->read(item.inputs);
    }
    c.set_seed(c.seed);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string to_toml(const RunConfig& config) {
    RunConfig c = config;
    std::ostringstream out;
    out << "seed = " << c.seed << "\n\n";
    write_section(out, "[scene]", scene_fields(c.dataset.scene));
    for (auto& b : c.dataset.bgms) write_section(out, "[[bgm]]", bgm_fields(b));
    write_section(out, "[dataset]", dataset_fields(c.dataset));
    write_section(out, "[features]", features_fields(c));
    write_section(out, "[model]", model_fields(c.model));
    write_section(out, "[train]", train_fields(c));
    write_section(out, "[eval]", eval_fields(c.eval));
    auto s = out.str();
    s.pop_back();
    return s;
}

}  // namespace acousticpose::cli
