#include "acousticpose/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "acousticpose/autodiff/gradcheck.hpp"
#include "acousticpose/cli/pipeline.hpp"
#include "acousticpose/cli/studies.hpp"
#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"
#include "acousticpose/sim/skeleton.hpp"

namespace acousticpose::cli {

namespace fs = std::filesystem;

namespace {

void prepare_out(const fs::path& out, bool force) {
    if (out.empty()) throw ConfigError("--out is required");
    if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError(out.string() + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) throw ConfigError(out.string() + " is not empty; pass --force to overwrite");
        for (const auto& e : fs::directory_iterator(out)) fs::remove_all(e.path());
    }
    fs::create_directories(out);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

void snapshot_config(const RunConfig& config, const fs::path& out) { write_text(out / "config.toml", to_toml(config) + "\n"); }

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

void write_scatter_svg(const fs::path& path, const eval::SeparabilityReport& r, const std::string& title) {
    static const char* colours[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};
    const double W = 480, H = 480, pad = 40;
    double x0 = r.points.col(0).minCoeff(), x1 = r.points.col(0).maxCoeff();
    double y0 = r.points.col(1).minCoeff(), y1 = r.points.col(1).maxCoeff();
    if (x1 - x0 < 1e-12) x1 = x0 + 1;
    if (y1 - y0 < 1e-12) y1 = y0 + 1;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"240\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title +
         " (silhouette " + fmt(r.silhouette, 3) + ")</text>\n";
    for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
        const double px = pad + (r.points(i, 0) - x0) / (x1 - x0) * (W - 2 * pad);
        const double py = H - pad - (r.points(i, 1) - y0) / (y1 - y0) * (H - 2 * pad);
        s += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) + "\" r=\"5\" fill=\"" +
             colours[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)]) % 8] + "\"/>\n";
    }
    write_text(path, s + "</svg>\n");
}

}  // namespace

int cmd_simulate(const RunConfig& config, const SimulateArgs& args, std::ostream& log) {
    RunConfig cfg = config;
    if (args.bgm_kind) {
        const auto kind = sim::parse_bgm_kind(*args.bgm_kind);
        for (auto& b : cfg.dataset.bgms) b.kind = kind;
    }
    cfg.validate();
    prepare_out(args.out, args.force);
    const auto m = sim::build_dataset(cfg.dataset, args.out);
    snapshot_config(cfg, args.out);
    log << "wrote " << m.records.size() << " records to " << args.out.string() << '\n';
    for (const auto& [protocol, subsets] : m.splits) {
        log << "  " << protocol << ": train " << subsets.at("train").size() << ", val " << subsets.at("val").size()
            << ", test " << subsets.at("test").size() << '\n';
    }
    return kExitOk;
}

int cmd_featurize(const RunConfig& config, const FeaturizeArgs& args, std::ostream& log) {
    config.validate();
    prepare_out(args.out, args.force);
    const auto s = featurize_dataset(args.dataset, args.out, config.features, config.stats_protocol);
    snapshot_config(config, args.out);
    log << "featurized " << s.records - s.failures.size() << "/" << s.records << " records into " << s.windows
        << " windows\n";
    for (const auto& [id, why] : s.failures) log << "  failed " << id << ": " << why << '\n';
    return s.failures.empty() ? kExitOk : kExitData;
}

fs::path resolve_features(const RunConfig& config, const fs::path& data, std::ostream& log) {
    if (data.empty()) throw ConfigError("--data is required");
    if (fs::exists(data / "index.json")) return data;
    if (!fs::exists(data / "manifest.json")) throw DataError(data.string() + " holds neither index.json nor manifest.json");
    std::ifstream in(data / "manifest.json");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string key_text = ss.str() + config.features.stft_json().dump() + config.stats_protocol +
                                 std::to_string(config.features.window_frames) + "/" +
                                 std::to_string(config.features.window_stride) +
                                 (config.features.per_clip_standardize ? "/clip" : "/pooled");
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(key_text)));
    const char* env = std::getenv("ACOUSTICPOSE_CACHE");
    const fs::path root = env && *env ? fs::path(env) : data / ".features";
    const fs::path dir = root / hex;
    if (fs::exists(dir / "index.json")) {
        log << "using cached features " << dir.string() << '\n';
        return dir;
    }
    fs::create_directories(dir);
    const auto s = featurize_dataset(data, dir, config.features, config.stats_protocol);
    log << "featurized " << s.windows << " windows into " << dir.string() << '\n';
    for (const auto& [id, why] : s.failures) log << "  failed " << id << ": " << why << '\n';
    return dir;
}

int cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& log) {
    config.validate();
    if (!args.resume.empty() && !fs::exists(args.resume)) throw DataError("no checkpoint at " + args.resume.string());
    const auto features = resolve_features(config, args.data, log);
    prepare_out(args.out, args.force);
    snapshot_config(config, args.out);

    const auto train_set = load_windows(features, config.train_protocol, "train");
    const auto val_set = load_windows(features, config.train_protocol, "val");
    if (train_set.empty()) throw EmptyInputError("the '" + config.train_protocol + "' training split has no windows");
    log << "training on " << train_set.size() << " windows, validating on " << val_set.size() << '\n';

    model::Bgm2Pose model(config.model, config.model_seed());
    train::FitOptions opt;
    opt.out_dir = args.out;
    opt.resume_from = args.resume;
    opt.on_epoch = [&](const train::EpochRecord& e) {
        log << "epoch " << e.epoch << "/" << config.train.epochs << "  loss " << fmt(e.total) << "  pose "
            << fmt(e.pose) << "  smooth " << fmt(e.smooth) << "  cpe " << fmt(e.cpe);
        if (e.val) log << "  val mae " << fmt(e.val->mae) << "  pckh " << fmt(e.val->pckh05);
        if (e.rejected_steps) log << "  rejected " << e.rejected_steps;
        log << '\n';
    };
    const auto r = train::fit(model, train_set, val_set.empty() ? nullptr : &val_set, config.train, opt);
    for (const auto& w : r.warnings) log << "warning: " << w << '\n';

    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : r.history) {
        nlohmann::json h{{"epoch", e.epoch}, {"steps", e.steps},   {"pose", e.pose},
                         {"smooth", e.smooth}, {"cpe", e.cpe}, {"total", e.total},
                         {"rejected_steps", e.rejected_steps}};
        if (e.val) h["val"] = e.val->to_json();
        hist.push_back(h);
    }
    const nlohmann::json summary{{"steps", r.steps},
                                 {"train_windows", train_set.size()},
                                 {"val_windows", val_set.size()},
                                 {"protocol", config.train_protocol},
                                 {"features", fs::absolute(features).generic_string()},
                                 {"warnings", r.warnings},
                                 {"history", hist}};
    write_text(args.out / "train_summary.json", summary.dump(2) + "\n");
    log << "checkpoint " << (args.out / "final.bin").string() << '\n';
    return kExitOk;
}

int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log) {
    config.validate();
    const auto features = resolve_features(config, args.data, log);
    prepare_out(args.out, args.force);
    snapshot_config(config, args.out);

    const auto windows = load_windows(features, config.eval.protocol, config.eval.subset);
    if (windows.empty()) {
        throw EmptyInputError("split '" + config.eval.protocol + "/" + config.eval.subset + "' has no windows");
    }
    std::vector<double> pred;
    std::string predictor;
    switch (args.predictor) {
        case Predictor::Oracle:
            pred = windows.p;
            predictor = "oracle";
            break;
        case Predictor::MeanPose:
            pred = tile_pose(mean_pose(load_windows(features, config.eval.protocol, "train")), windows);
            predictor = "mean_pose";
            break;
        case Predictor::Model: {
            if (args.checkpoint.empty()) throw ConfigError("--checkpoint is required unless --oracle or --mean-baseline is set");
            const auto model = train::load_model(args.checkpoint, config.eval.use_ema);
            const auto& mc = model.config();
            if (mc.mel_bins != windows.bins || mc.frames != windows.frames || mc.pose_dims() != windows.pose_dims) {
                throw DimensionError("checkpoint does not match the feature layout");
            }
            pred = train::predict(model, windows, config.eval.batch_size);
            predictor = config.eval.use_ema ? "model_ema" : "model";
            break;
        }
    }
    const auto report = eval::metric_report(pred, windows.p, windows.pose_dims / 3, windows.size());
    auto j = report.to_json();
    j["predictor"] = predictor;
    j["protocol"] = config.eval.protocol;
    j["subset"] = config.eval.subset;
    if (!args.checkpoint.empty()) j["checkpoint"] = fs::absolute(args.checkpoint).generic_string();
    write_text(args.out / "metrics.json", j.dump(2) + "\n");

    std::string csv = "joint,name,mean_distance\n";
    const auto& sk = sim::Skeleton::standard();
    for (std::size_t k = 0; k < report.per_joint.size(); ++k) {
        csv += std::to_string(k) + "," + std::string(k < sim::kJoints ? sk.names[k] : "") + "," +
               fmt(report.per_joint[k], 17) + "\n";
    }
    write_text(args.out / "per_joint.csv", csv);
    log << predictor << " on " << config.eval.protocol << "/" << config.eval.subset << " (" << report.windows
        << " windows): rmse " << fmt(report.rmse) << "  mae " << fmt(report.mae) << "  mpjpe " << fmt(report.mpjpe)
        << "  pckh@0.5 " << fmt(report.pckh05) << '\n';
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& log) {
    model::FaConfig c;
    c.mel_bins = 8;
    c.frames = 4;
    c.joints = 3;
    c.latent_dim = 4;
    c.pre_channels = {3};
    c.post_channels = {4, 3};
    c.unet_channels = {4, 5, 6};
    c.head_channels = 4;
    c.cpe_dim = 4;
    c.cpe_ffn = 6;
    model::Bgm2Pose m(c, derive_seed(seed, {1}));
    Rng rng(derive_seed(seed, {2}));
    std::normal_distribution<double> g(0.0, 1.0);
    auto randn = [&](ad::Shape s) {
        std::vector<double> v(ad::numel(s));
        for (auto& x : v) x = g(rng);
        return ad::Tensor::from(std::move(s), std::move(v));
    };
    auto X = randn({2, 11, 8, 4});
    auto M = randn({2, 2, 8, 4});
    const auto P = randn({2, 4, 9});
    X.set_requires_grad(true);
    M.set_requires_grad(true);
    std::vector<ad::Tensor> inputs{X, M};
    for (const auto& e : m.params().entries()) inputs.push_back(e.tensor);
    const auto r = ad::gradcheck([&] { return model::compute_losses(m, X, M, P, model::LossWeights{}).total; }, inputs);
    log << "gradcheck over " << r.coordinates << " coordinates: max relative error " << fmt(r.max_rel_error, 3) << '\n';
    if (!(r.max_rel_error < 1e-4)) {
        log << "worst coordinate: input " << r.worst_input << ", index " << r.worst_index << '\n';
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_pca_study(const RunConfig& config, const PcaStudyArgs& args, std::ostream& log) {
    config.validate();
    prepare_out(args.out, args.force);
    snapshot_config(config, args.out);
    sim::BgmSpec bgm = config.dataset.bgms.front();
    for (const auto& b : config.dataset.bgms) {
        if (b.kind != sim::BgmKind::Chirp) {
            bgm = b;
            break;
        }
    }
    const auto study = separability_study(config.dataset.scene, bgm, config.features, {}, config.seed);
    std::string csv = "condition,x,y,cluster\n";
    for (const auto& [name, r] : {std::pair{"chirp", &study.chirp}, std::pair{"bgm", &study.bgm}}) {
        for (Eigen::Index i = 0; i < r->points.rows(); ++i) {
            csv += std::string(name) + "," + fmt(r->points(i, 0), 17) + "," + fmt(r->points(i, 1), 17) + "," +
                   std::to_string(r->labels[static_cast<std::size_t>(i)]) + "\n";
        }
        if (config.eval.svg) write_scatter_svg(args.out / ("pca_" + std::string(name) + ".svg"), *r, name);
    }
    write_text(args.out / "pca_points.csv", csv);
    const nlohmann::json j{{"silhouette_chirp", study.chirp.silhouette},
                           {"silhouette_bgm", study.bgm.silhouette},
                           {"bgm_kind", sim::bgm_kind_name(bgm.kind)},
                           {"eigenvalues_chirp", std::vector<double>(study.chirp.eigenvalues.data(),
                                                                     study.chirp.eigenvalues.data() + study.chirp.eigenvalues.size())},
                           {"eigenvalues_bgm", std::vector<double>(study.bgm.eigenvalues.data(),
                                                                   study.bgm.eigenvalues.data() + study.bgm.eigenvalues.size())}};
    write_text(args.out / "separability.json", j.dump(2) + "\n");
    log << "silhouette: chirp " << fmt(study.chirp.silhouette) << ", " << sim::bgm_kind_name(bgm.kind) << " "
        << fmt(study.bgm.silhouette) << '\n';
    return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pose estimation from background-music sensing: simulate, featurize, train, evaluate."};
    app.require_subcommand(1);
    app.fallthrough();
    fs::path config_path, out_dir;
    std::optional<std::uint64_t> seed;
    bool force = false, f64 = false;
    std::size_t threads = 1;
    app.add_option("--config", config_path, "run configuration (TOML)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--force", force, "overwrite a non-empty output directory");
    app.add_option("--threads", threads, "worker cap")->check(CLI::PositiveNumber);
    app.add_flag("--f64", f64, "store checkpoints in 64-bit precision");

    auto* sim_cmd = app.add_subcommand("simulate", "render a synthetic dataset");
    std::optional<std::string> bgm_kind;
    sim_cmd->add_option("--bgm-kind", bgm_kind, "use this kind for every track (ambient, jazz, chirp)");

    auto* feat_cmd = app.add_subcommand("featurize", "compute windowed network features for a dataset");
    fs::path manifest;
    feat_cmd->add_option("--manifest", manifest, "dataset directory or its manifest.json")->required();

    auto* train_cmd = app.add_subcommand("train", "fit the model");
    fs::path data, resume, checkpoint;
    std::optional<std::size_t> epochs;
    train_cmd->add_option("--data", data, "feature or dataset directory")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to continue from");
    train_cmd->add_option("--epochs", epochs, "override train.epochs");

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a split");
    bool oracle = false, mean_baseline = false;
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");
    eval_cmd->add_option("--data", data, "feature or dataset directory")->required();
    eval_cmd->add_flag("--oracle", oracle, "predict the ground truth");
    eval_cmd->add_flag("--mean-baseline", mean_baseline, "predict the training mean pose");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
    auto* pca_cmd = app.add_subcommand("pca-study", "chirp vs. music feature separability");
    auto* cfg_cmd = app.add_subcommand("config", "print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig::defaults() : load_run_config(config_path);
        if (seed) cfg.set_seed(*seed);
        if (f64) cfg.train.f64 = true;
        if (epochs) cfg.train.epochs = *epochs;
        cfg.dataset.threads = threads;
        cfg.validate();

        if (*sim_cmd) return cmd_simulate(cfg, {out_dir, force, bgm_kind}, out);
        if (*feat_cmd) {
            const fs::path dir = manifest.filename() == "manifest.json" ? manifest.parent_path() : manifest;
            return cmd_featurize(cfg, {dir, out_dir, force}, out);
        }
        if (*train_cmd) return cmd_train(cfg, {data, out_dir, resume, force}, out);
        if (*eval_cmd) {
            if (oracle && mean_baseline) throw ConfigError("--oracle and --mean-baseline are exclusive");
            const auto p = oracle ? Predictor::Oracle : mean_baseline ? Predictor::MeanPose : Predictor::Model;
            return cmd_eval(cfg, {checkpoint, data, out_dir, p, force}, out);
        }
        if (*grad_cmd) return cmd_gradcheck(cfg.seed, out);
        if (*pca_cmd) return cmd_pca_study(cfg, {out_dir, force}, out);
        if (*cfg_cmd) {
            out << to_toml(cfg) << '\n';
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitOk;
}

}  // namespace acousticpose::cli
