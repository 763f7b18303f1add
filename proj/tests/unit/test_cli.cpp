#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "acousticpose/cli/commands.hpp"
#include "acousticpose/cli/pipeline.hpp"
#include "acousticpose/common/error.hpp"
#include "acousticpose/signal/wav.hpp"

using namespace acousticpose;
using namespace acousticpose::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("acousticpose_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_args(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "acousticpose");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str() + err.str();
    return code;
}

// Small experiment: two tracks, two motions, 3 s clips, 32 mel bands, tiny model.
const char* kSmallConfig = R"(seed = 5
[[bgm]]
kind = "ambient"
seed = 1
[[bgm]]
kind = "jazz"
seed = 2
[dataset]
motions = ["still", "walk"]
subjects = 4
clip_seconds = 3.0
track_seconds = 20.0
[features]
mel_bins = 32
[model]
mel_bins = 32
latent_dim = 8
pre_channels = [8]
post_channels = [8, 8]
unet_channels = [16, 16, 16]
head_channels = 16
cpe_dim = 16
cpe_ffn = 16
[train]
batch_size = 8
epochs = 1
)";

fs::path small_config(const fs::path& dir) {
    const auto p = dir / "small.toml";
    std::ofstream(p) << kSmallConfig;
    return p;
}

}  // namespace

TEST_CASE("config: defaults round-trip losslessly") {
    const auto c = RunConfig::defaults();
    const auto text = to_toml(c);
    const auto back = parse_run_config(text);
    CHECK(to_toml(back) == text);
    CHECK(back.dataset.bgms.size() == 3);
}

TEST_CASE("config: non-default values round-trip") {
    auto c = RunConfig::defaults();
    c.set_seed(1234567890123ULL);
    c.dataset.noise_snr_db = 10.0;
    c.dataset.scene.reflection_gain = 0.1 + 0.2;
    c.dataset.motions = {sim::Motion::Walk, sim::Motion::Squat};
    c.dataset.bgms[0].wav_path = "music/track one.wav";
    c.dataset.bgms[1].kind = sim::BgmKind::Chirp;
    c.features.intensity_norm = signal::IntensityNorm::L1;
    c.features.f_min = 1.0 / 3.0;
    c.model.pre_channels = {5, 7, 9};
    c.model.use_fa = false;
    c.train.weights.w_beta = 0.0;
    c.train.lr_min = 1e-7;
    c.train_protocol = "cross_music";
    c.eval.subset = "val";
    const auto back = parse_run_config(to_toml(c));
    CHECK(to_toml(back) == to_toml(c));
    CHECK(back.seed == 1234567890123ULL);
    CHECK(back.dataset.seed == back.seed);
    CHECK(back.train.seed == back.seed);
    CHECK(back.dataset.scene.reflection_gain == c.dataset.scene.reflection_gain);
    CHECK(back.features.f_min == c.features.f_min);
    CHECK(back.dataset.bgms[0].wav_path == "music/track one.wav");
    CHECK(back.model.pre_channels == std::vector<std::size_t>{5, 7, 9});
    CHECK(back.train.lr_min == 1e-7);
    CHECK(std::isinf(parse_run_config("[dataset]\nnoise_snr_db = inf\n").dataset.noise_snr_db));
}

TEST_CASE("config: unknown keys, sections and bad values are rejected") {
    CHECK_THROWS_AS(parse_run_config("[model]\nlatent = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[optimizer]\nlr = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sed = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nepochs = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nlr_max = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model]\nuse_fa = yes\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[scene]\nmic = [1, 2]\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model.extra]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[[bgm]]\nkind = \"polka\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nlr_max = 0.001\nlr_min = 0.01\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model]\nmel_bins = 64\n"), ConfigError);
}

TEST_CASE("config: bgm tables replace the default list") {
    const auto c = parse_run_config("[[bgm]]\nkind = \"jazz\"\nseed = 9\n[[bgm]]\nkind = \"chirp\"\n");
    REQUIRE(c.dataset.bgms.size() == 2);
    CHECK(c.dataset.bgms[0].kind == sim::BgmKind::Jazz);
    CHECK(c.dataset.bgms[0].seed == 9);
    CHECK(c.dataset.bgms[1].kind == sim::BgmKind::Chirp);
}

TEST_CASE("gradcheck command passes at its default seed") {
    std::ostringstream log;
    CHECK(cmd_gradcheck(0, log) == kExitOk);
    CHECK(log.str().find("max relative error") != std::string::npos);
    std::string text;
    CHECK(run_args({"gradcheck"}, &text) == kExitOk);
}

TEST_CASE("cli: simulate, featurize, train, eval") {
    const auto dir = scratch("pipeline");
    const auto cfg = small_config(dir).string();
    const auto ds = (dir / "ds").string();

    REQUIRE(run_args({"simulate", "--config", cfg, "--out", ds}) == kExitOk);
    const auto manifest = nlohmann::json::parse(slurp(dir / "ds" / "manifest.json"));
    CHECK(manifest.at("records").size() == 16);
    for (const char* s : {"single_music", "cross_music", "cross_genre"}) CHECK(manifest.at("splits").contains(s));
    CHECK(fs::exists(dir / "ds" / "config.toml"));

    SUBCASE("rerun with the same seed gives the same manifest") {
        const auto again = (dir / "ds2").string();
        REQUIRE(run_args({"simulate", "--config", cfg, "--out", again}) == kExitOk);
        CHECK(fnv1a(slurp(dir / "ds2" / "manifest.json")) == fnv1a(slurp(dir / "ds" / "manifest.json")));
        CHECK(run_args({"simulate", "--config", cfg, "--out", again}) == kExitConfig);
        CHECK(run_args({"simulate", "--config", cfg, "--out", again, "--force", "--seed", "6"}) == kExitOk);
        CHECK(fnv1a(slurp(dir / "ds2" / "manifest.json")) != fnv1a(slurp(dir / "ds" / "manifest.json")));
    }

    SUBCASE("chirp datasets are tagged for the separability study") {
        const auto chirp = (dir / "chirp").string();
        REQUIRE(run_args({"simulate", "--config", cfg, "--out", chirp, "--bgm-kind", "chirp"}) == kExitOk);
        const auto m = nlohmann::json::parse(slurp(dir / "chirp" / "manifest.json"));
        CHECK(m.at("tags").get<std::vector<std::string>>() == std::vector<std::string>{"separability"});
    }

    SUBCASE("featurize, train from scratch, evaluate") {
        const auto feats = (dir / "feats").string();
        REQUIRE(run_args({"featurize", "--config", cfg, "--manifest", ds + "/manifest.json", "--out", feats}) == kExitOk);
        const auto index = read_index(feats);
        CHECK(index.at("windows").size() == 16 * 5);
        CHECK(index.at("failures").empty());

        const auto run0 = (dir / "run0").string();
        REQUIRE(run_args({"train", "--config", cfg, "--data", feats, "--out", run0, "--epochs", "0"}) == kExitOk);
        CHECK(fs::exists(dir / "run0" / "final.bin"));

        const auto run1 = (dir / "run1").string();
        REQUIRE(run_args({"train", "--config", cfg, "--data", feats, "--out", run1, "--f64"}) == kExitOk);
        CHECK(fs::exists(dir / "run1" / "metrics.csv"));
        const auto snap = load_run_config(dir / "run1" / "config.toml");
        CHECK(snap.train.f64);
        CHECK(snap.seed == 5);

        const auto ev1 = (dir / "ev1").string(), ev2 = (dir / "ev2").string();
        REQUIRE(run_args({"eval", "--config", cfg, "--data", feats, "--checkpoint", run1 + "/final.bin", "--out", ev1}) == kExitOk);
        REQUIRE(run_args({"eval", "--config", cfg, "--data", feats, "--checkpoint", run1 + "/final.bin", "--out", ev2}) == kExitOk);
        CHECK(slurp(dir / "ev1" / "metrics.json") == slurp(dir / "ev2" / "metrics.json"));
        CHECK(fs::exists(dir / "ev1" / "per_joint.csv"));

        const auto oracle = (dir / "oracle").string();
        REQUIRE(run_args({"eval", "--config", cfg, "--data", feats, "--oracle", "--out", oracle}) == kExitOk);
        const auto om = nlohmann::json::parse(slurp(dir / "oracle" / "metrics.json"));
        CHECK(om.at("pckh05").get<double>() == 1.0);
        CHECK(om.at("rmse").get<double>() == 0.0);

        CHECK(run_args({"eval", "--config", cfg, "--data", feats, "--out", (dir / "nock").string()}) == kExitConfig);
    }

    SUBCASE("a dataset directory is featurized once into the cache") {
        const auto cache = dir / "cache";
        setenv("ACOUSTICPOSE_CACHE", cache.c_str(), 1);
        REQUIRE(run_args({"train", "--config", cfg, "--data", ds, "--out", (dir / "runc").string(), "--epochs", "0"}) == kExitOk);
        std::string text;
        REQUIRE(run_args({"train", "--config", cfg, "--data", ds, "--out", (dir / "rund").string(), "--epochs", "0"}, &text) ==
                kExitOk);
        unsetenv("ACOUSTICPOSE_CACHE");
        CHECK(text.find("using cached features") != std::string::npos);
        CHECK(std::distance(fs::directory_iterator(cache), fs::directory_iterator{}) == 1);
    }

    SUBCASE("one corrupt recording among the records is reported, the rest are written") {
        std::ofstream(dir / "ds" / "records" / manifest.at("records")[3].at("id").get<std::string>() / "recorded.wav")
            << "RIFF garbage";
        std::string text;
        CHECK(run_args({"featurize", "--config", cfg, "--manifest", ds, "--out", (dir / "partial").string()}, &text) ==
              kExitData);
        const auto index = read_index(dir / "partial");
        CHECK(index.at("failures").size() == 1);
        CHECK(index.at("windows").size() == 15 * 5);
        CHECK(text.find("failed") != std::string::npos);
    }
}

TEST_CASE("featurize: 60 s clips give 100 windows of 11 x 128 x 12, 44.1 kHz music is resampled") {
    const auto dir = scratch("long");
    auto c = RunConfig::defaults();
    c.dataset.bgms.resize(1);
    c.dataset.motions = {sim::Motion::Walk};
    c.dataset.subjects = 3;
    c.dataset.clip_seconds = 60.0;
    c.dataset.track_seconds = 60.0;
    const auto m = sim::build_dataset(c.dataset, dir / "ds");
    REQUIRE(m.records.size() == 3);

    // Swap one record's music for a 44.1 kHz copy.
    const auto& files = m.files.at(m.records[0].id);
    const auto music_path = dir / "ds" / files.at("music");
    auto wav = signal::read_wav(music_path);
    for (auto& ch : wav.channels) ch = signal::resample(ch, 48000.0, 44100.0);
    wav.sample_rate = 44100.0;
    signal::write_wav(music_path, wav);

    const auto s = featurize_dataset(dir / "ds", dir / "feats", c.features, "single_music");
    CHECK(s.failures.empty());
    CHECK(s.windows == 300);
    const auto index = read_index(dir / "feats");
    const auto first = index.at("windows")[0];
    const auto x = signal::read_feature_file(dir / "feats" / first.at("input").get<std::string>());
    CHECK(x.channels == 11);
    CHECK(x.bins == 128);
    CHECK(x.frames == 12);

    const auto test = load_windows(dir / "feats", "single_music", "test");
    CHECK(test.size() == 100);
    CHECK(test.bins == 128);
}

TEST_CASE("pca-study writes points, report and plots") {
    const auto dir = scratch("pca");
    std::string text;
    REQUIRE(run_args({"pca-study", "--out", (dir / "study").string()}, &text) == kExitOk);
    for (const char* f : {"pca_points.csv", "separability.json", "pca_chirp.svg", "pca_bgm.svg", "config.toml"}) {
        CHECK_MESSAGE(fs::exists(dir / "study" / f), f);
    }
    const auto j = nlohmann::json::parse(slurp(dir / "study" / "separability.json"));
    CHECK(j.at("silhouette_chirp").get<double>() >= -1.0);
    CHECK(j.at("silhouette_chirp").get<double>() <= 1.0);
    CHECK(j.at("silhouette_chirp").get<double>() > j.at("silhouette_bgm").get<double>());
}

TEST_CASE("cli: usage errors map to the config exit code") {
    CHECK(run_args({}) == kExitConfig);
    CHECK(run_args({"train"}) == kExitConfig);
    CHECK(run_args({"simulate", "--config", "/nonexistent/run.toml", "--out", "x"}) == kExitConfig);
    CHECK(run_args({"--help"}) == kExitOk);
}
