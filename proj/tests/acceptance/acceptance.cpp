#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "acousticpose/autodiff/gradcheck.hpp"
#include "acousticpose/autodiff/ops.hpp"
#include "acousticpose/cli/config.hpp"
#include "acousticpose/cli/pipeline.hpp"
#include "acousticpose/cli/studies.hpp"
#include "acousticpose/eval/metrics.hpp"
#include "acousticpose/model/bgm2pose.hpp"
#include "acousticpose/signal/features.hpp"
#include "acousticpose/signal/mel.hpp"
#include "acousticpose/signal/stft.hpp"
#include "acousticpose/sim/dataset.hpp"
#include "acousticpose/sim/render.hpp"
#include "acousticpose/train/fit.hpp"

using namespace acousticpose;

namespace {

constexpr double kDoaDegrees = 10.0;
constexpr std::size_t kDoaSources = 24;
constexpr double kLinearity = 1e-9;
constexpr double kFlatGain = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kLossTol = 1e-9;
constexpr double kBruteTol = 1e-12;
constexpr double kMinRelativeGain = 0.20;
constexpr std::size_t kMinWindows = 500;
constexpr double kOverfitMse = 0.05;
constexpr std::size_t kOverfitClips = 32;
constexpr double kNoiseRatio = 3.0;

constexpr std::size_t kEpochs = 12;
constexpr std::size_t kOverfitEpochs = 24;
constexpr std::size_t kAblationEpochs = 30;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

signal::MonoSignal white_noise(std::size_t n, double sd, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    signal::MonoSignal s;
    s.samples.resize(n);
    for (auto& v : s.samples) v = g(rng);
    return s;
}

signal::FeatureTensor random_tensor(std::size_t c, std::size_t b, std::size_t t, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    signal::FeatureTensor out(c, b, t);
    for (auto& v : out.values) v = g(rng);
    return out;
}

ad::Tensor randn(ad::Shape shape, unsigned seed, bool grad = true) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = g(rng);
    return ad::Tensor::from(std::move(shape), std::move(v), grad);
}

// 1. DSP oracles

Outcome dsp_suite() {
    const auto bank = signal::build_mel_bank(32, 4096, 48000, 20, 24000);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto src = white_noise(12000, 0.3, 5);
    double worst_doa = 0.0;
    for (std::size_t i = 0; i < kDoaSources; ++i) {
        const double az = 2.0 * std::numbers::pi * u(rng);
        const double el = std::asin(2.0 * u(rng) - 1.0);
        const auto clip = sim::encode_plane_wave(src, az, el);
        const auto I = signal::intensity_vector(signal::stft(clip.w), signal::stft(clip.x), signal::stft(clip.y),
                                                signal::stft(clip.z), bank);
        sim::Vec3 d = sim::Vec3::Zero();
        for (std::size_t k = 0; k < I.bins; ++k) {
            for (std::size_t t = 0; t < I.frames; ++t) d += sim::Vec3(I.at(0, k, t), I.at(1, k, t), I.at(2, k, t));
        }
        const sim::Vec3 truth(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el));
        const double deg = std::acos(std::clamp(d.normalized().dot(truth), -1.0, 1.0)) * 180.0 / std::numbers::pi;
        worst_doa = std::max(worst_doa, deg);
    }

    // Recorded equal to the music in every channel gives an all-zero difference.
    const auto m = random_tensor(1, 16, 8, 4);
    const signal::FeatureTensor reps[4] = {m, m, m, m};
    bool zero_ok = true;
    const auto d0 = signal::difference_features(signal::concat_channels(reps), m, random_tensor(1, 16, 8, 5));
    for (std::size_t c = 0; c < 4; ++c) {
        for (double v : d0.channel(c)) zero_ok = zero_ok && v == 0.0;
    }

    // A flat gain g becomes log(g^2) in every bin.
    const double g = 0.37;
    const auto music = white_noise(24000, 0.4, 8);
    auto quieter = music;
    for (auto& v : quieter.samples) v *= g;
    const auto Mlog = signal::log_mel(signal::stft(music), bank);
    const auto Rlog = signal::log_mel(signal::stft(quieter), bank);
    const signal::FeatureTensor rec4[4] = {Rlog, Rlog, Rlog, Rlog};
    double flat_dev = 0.0;
    for (double v : signal::difference_features(signal::concat_channels(rec4), Mlog, Mlog).values) {
        flat_dev = std::max(flat_dev, std::abs(v - std::log(g * g)));
    }

    const auto s = white_noise(20000, 0.3, 1);
    const auto g1 = signal::stft(s);
    double lin = 0.0;
    for (double a : {2.0, -0.37, 1e3}) {
        auto scaled = s;
        for (auto& v : scaled.samples) v *= a;
        const auto g2 = signal::stft(scaled);
        for (std::size_t i = 0; i < g1.bins.size(); ++i) {
            lin = std::max(lin, std::abs(g2.bins[i] - a * g1.bins[i]) / (std::abs(a * g1.bins[i]) + 1e-12));
        }
    }
    const bool pass = worst_doa < kDoaDegrees && zero_ok && flat_dev < kFlatGain && lin < kLinearity;
    return {pass, fmt("DOA worst %.2f deg over %zu sources (< %.0f); zero property %s; flat-gain dev %.2e (< %.0e); "
                      "STFT linearity %.2e (< %.0e)",
                      worst_doa, kDoaSources, kDoaDegrees, zero_ok ? "exact" : "broken", flat_dev, kFlatGain, lin,
                      kLinearity)};
}

// 2. Gradients

model::FaConfig tiny_model() {
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
    return c;
}

Outcome gradient_suite() {
    using namespace ad;
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    auto probe = [](const Tensor& y) { return sum(mul(y, randn(y.shape(), 99, false))); };
    auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
        const double e = gradcheck(f, std::move(in)).max_rel_error;
        ++checked;
        if (e >= worst) {
            worst = e;
            worst_name = name;
        }
    };
    auto a = randn({3, 4}, 10), b = randn({3, 4}, 11), row = randn({4}, 12);
    check("add", [&] { return probe(add(a, b)); }, {a, b});
    check("sub", [&] { return probe(sub(a, row)); }, {a, row});
    check("mul", [&] { return probe(mul(a, row)); }, {a, row});
    check("scale", [&] { return probe(scale(a, -2.5)); }, {a});
    check("add_scalar", [&] { return probe(add_scalar(a, 0.3)); }, {a});
    check("gelu", [&] { return probe(gelu(a)); }, {a});
    check("exp", [&] { return probe(exp(a)); }, {a});
    auto pos = Tensor::from({5}, {0.5, 1.0, 2.0, 3.0, 0.7}, true);
    check("log", [&] { return probe(log(pos)); }, {pos});
    check("mean", [&] { return mean(mul(a, a)); }, {a});
    check("sum", [&] { return sum(mul(a, a)); }, {a});
    check("mse", [&] { return mse(a, b); }, {a, b});
    auto kinked = Tensor::from({2, 3}, {0.7, -0.4, 1.3, -1.1, 0.25, -0.6}, true);
    check("relu", [&] { return probe(relu(kinked)); }, {kinked});

    auto x = randn({2, 3, 4}, 20), y = randn({2, 2, 4}, 21);
    check("reshape", [&] { return probe(reshape(x, {6, 4})); }, {x});
    check("permute", [&] { return probe(permute(x, {2, 0, 1})); }, {x});
    check("transpose", [&] { return probe(transpose(x, 1, 2)); }, {x});
    check("concat", [&] { return probe(concat({x, y}, 1)); }, {x, y});
    check("slice", [&] { return probe(slice(x, 2, 1, 2)); }, {x});

    auto p = randn({2, 3, 4}, 30), q = randn({2, 4, 5}, 31), w = randn({4, 5}, 32);
    check("matmul", [&] { return probe(matmul(p, q)); }, {p, q});
    check("matmul (shared rhs)", [&] { return probe(matmul(p, w)); }, {p, w});
    check("softmax", [&] { return probe(softmax(p)); }, {p});
    check("log_softmax", [&] { return probe(log_softmax(p)); }, {p});
    check("l2_normalize", [&] { return probe(l2_normalize(p)); }, {p});
    auto x4 = randn({2, 3, 4, 5}, 33), gamma = randn({3}, 34), beta = randn({3}, 35);
    check("layer_norm", [&] { return probe(layer_norm(x4, 1, gamma, beta)); }, {x4, gamma, beta});
    auto qa = randn({2, 3, 4}, 37), ka = randn({2, 5, 4}, 38), va = randn({2, 5, 3}, 39);
    check("attention", [&] { return probe(scaled_dot_product_attention(qa, ka, va).first); }, {qa, ka, va});

    auto xc = randn({2, 3, 6, 5}, 40), wc = randn({4, 3, 3, 3}, 41), bc = randn({4}, 42);
    check("conv2d", [&] { return probe(conv2d(xc, wc, bc, {1, 1, 1, 1})); }, {xc, wc, bc});
    auto ws = randn({2, 3, 5, 1}, 43);
    check("conv2d (strided)", [&] { return probe(conv2d(xc, ws, Tensor(), {4, 1, 2, 0})); }, {xc, ws});
    auto x1 = randn({2, 3, 7}, 44), w1 = randn({5, 3, 3}, 45), b1 = randn({5}, 46);
    check("conv1d", [&] { return probe(conv1d(x1, w1, b1, 2, 1)); }, {x1, w1, b1});
    auto wt = randn({3, 4, 2}, 47), bt = randn({4}, 48);
    check("conv_transpose1d", [&] { return probe(conv_transpose1d(x1, wt, bt, 2)); }, {x1, wt, bt});

    model::Bgm2Pose m(tiny_model(), 10);
    auto X = randn({2, 11, 8, 4}, 50), M = randn({2, 2, 8, 4}, 51);
    const auto P = randn({2, 4, 9}, 52, false);
    std::vector<Tensor> inputs{X, M};
    for (const auto& e : m.params().entries()) inputs.push_back(e.tensor);
    const auto full = gradcheck([&] { return model::compute_losses(m, X, M, P, model::LossWeights{}).total; }, inputs);
    ++checked;
    if (full.max_rel_error >= worst) {
        worst = full.max_rel_error;
        worst_name = "total_loss";
    }
    const bool pass = worst < kGradTol;
    return {pass, fmt("%zu graphs (%zu coordinates in the full objective); worst relative error %.2e on %s (< %.0e)",
                      checked, full.coordinates, worst, worst_name.c_str(), kGradTol)};
}

// 3. Losses

Outcome loss_fixtures() {
    using namespace ad;
    const auto z1 = l2_normalize(randn({1, 5}, 1, false));
    const double single = 0.0 + model::contrastive_loss(z1, l2_normalize(randn({1, 5}, 2, false)), 0.07).item();
    const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const double pair = model::contrastive_loss(eye, eye, 0.07).item();
    const double expected = std::log1p(std::exp(-1.0 / 0.07));

    const auto P = randn({2, 5, 9}, 20, false);
    auto shifted = P.clone();
    for (std::size_t i = 0; i < 45; ++i) shifted.mutable_data()[i] += 0.3;
    for (std::size_t i = 45; i < 90; ++i) shifted.mutable_data()[i] -= 1.7;
    const double smooth = model::smooth_loss(shifted, P).item();
    const double pose = model::pose_loss(add_scalar(P, 1.0), P).item();

    const bool pass = single == 0.0 && std::abs(pair - expected) < kLossTol && std::abs(smooth) < kLossTol &&
                      std::abs(pose - 1.0) < kLossTol;
    return {pass, fmt("InfoNCE N=1 %.3g; N=2 orthogonal %.12g vs %.12g; smooth under offset %.2e; pose unit offset %.12g",
                      single, pair, expected, smooth, pose)};
}

// 4. Metrics

Outcome metric_fixtures() {
    constexpr std::size_t J = 21, F = 3;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> truth(F * J * 3);
    for (auto& v : truth) v = g(rng);
    for (std::size_t f = 0; f < F; ++f) {
        double* p = truth.data() + f * J * 3;
        for (int c = 0; c < 3; ++c) p[eval::kHeadJoint * 3 + c] = p[eval::kNeckJoint * 3 + c];
        p[eval::kHeadJoint * 3 + 2] += 0.2;
    }
    const double same = eval::pckh(truth, truth, J).pckh;
    auto far = truth;
    for (auto& v : far) v += 1.0;
    const double none = eval::pckh(far, truth, J).pckh;

    const std::vector<double> t3{0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.5,
                                 1.0, 0.0, 0.0, 1.0, 0.0, 0.3, 1.0, 0.0, 0.5};
    auto p3 = t3;
    for (std::size_t j = 0; j < 6; ++j) p3[j * 3] += j == 4 ? 0.05 : 0.15;
    const double sixth = eval::pckh(p3, t3, 3, 2, 1).pckh;

    constexpr std::size_t BF = 7, BJ = 5;
    std::vector<double> a(BF * BJ * 3), b(BF * BJ * 3);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    double sq = 0, ab = 0, dist = 0;
    std::vector<double> per(BJ, 0.0);
    for (std::size_t f = 0; f < BF; ++f) {
        for (std::size_t j = 0; j < BJ; ++j) {
            double d2 = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                const double d = a[(f * BJ + j) * 3 + c] - b[(f * BJ + j) * 3 + c];
                sq += d * d;
                ab += std::abs(d);
                d2 += d * d;
            }
            dist += std::sqrt(d2);
            per[j] += std::sqrt(d2) / BF;
        }
    }
    const auto e = eval::joint_errors(a, b, BJ);
    auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(y)); };
    double worst = std::max({rel(e.rmse, std::sqrt(sq / (BF * BJ * 3))), rel(e.mae, ab / (BF * BJ * 3)),
                             rel(e.mpjpe, dist / (BF * BJ))});
    for (std::size_t j = 0; j < BJ; ++j) worst = std::max(worst, rel(e.per_joint[j], per[j]));

    const bool pass = same == 1.0 && none == 0.0 && std::abs(sixth - 1.0 / 6.0) < 1e-15 && worst < kBruteTol;
    return {pass, fmt("PCKh@0.5 fixtures %.4f / %.4f / %.6f (want 1, 0, 1/6); brute-force deviation %.2e (< %.0e)", same,
                      none, sixth, worst, kBruteTol)};
}

// Desk-scale simulator experiments

struct DeskData {
    cli::RunConfig config;
    std::vector<cli::ClipFeatures> clips;
    sim::SplitTable splits;
};

DeskData desk_data(double snr_db) {
    DeskData d;
    d.config = cli::RunConfig::defaults();
    // Three ambient tracks and one jazz track; cross-music holds out the last ambient one.
    auto& bgms = d.config.dataset.bgms;
    const auto ambient = bgms.front();
    const auto jazz = bgms.back();
    bgms.clear();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        bgms.push_back(ambient);
        bgms.back().seed = seed;
    }
    bgms.push_back(jazz);
    d.config.dataset.clip_seconds = 6.0;
    d.config.dataset.track_seconds = 40.0;
    d.config.dataset.subjects = 6;
    d.config.dataset.test_subjects = 2;
    d.config.dataset.noise_snr_db = snr_db;
    d.config.features.mel_bins = 64;
    const auto records = sim::generate_records(d.config.dataset);
    std::vector<sim::RecordMeta> metas;
    for (const auto& r : records) metas.push_back(r.meta);
    const auto& ds = d.config.dataset;
    d.splits = sim::make_splits(metas, ds.bgms, ds.subjects, ds.test_subjects, ds.val_subjects);
    signal::FeatureExtractor extractor(d.config.features);
    d.clips = cli::extract_records(records, extractor);
    return d;
}

struct Splits {
    train::WindowSet train, val, test;
};

Splits desk_windows(const DeskData& d, const std::string& protocol) {
    const auto& table = d.splits.at(protocol);
    const auto stats = cli::fit_stats(d.clips, table.at("train"));
    return {cli::make_windows(d.clips, table.at("train"), stats, d.config.features),
            cli::make_windows(d.clips, table.at("val"), stats, d.config.features),
            cli::make_windows(d.clips, table.at("test"), stats, d.config.features)};
}

model::FaConfig desk_model() {
    model::FaConfig c;
    c.mel_bins = 64;
    c.latent_dim = 16;
    c.pre_channels = {8, 16};
    c.post_channels = {16, 8};
    c.unet_channels = {32, 48, 64};
    c.head_channels = 32;
    c.cpe_dim = 32;
    c.cpe_ffn = 64;
    return c;
}

train::TrainConfig desk_train(std::size_t epochs) {
    train::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 8;
    t.seed = 7;
    return t;
}

struct Trained {
    eval::MetricReport test;
    double train_mse = 0.0;
};

Trained train_desk(const Splits& s, const model::FaConfig& mc, const train::TrainConfig& tc) {
    model::Bgm2Pose m(mc, 1);
    auto r = train::fit(m, s.train, &s.val, tc);
    Trained out;
    train::with_parameters(m, r.ema, [&] { out.test = train::evaluate_windows(m, s.test); });
    const auto pred = train::predict(m, s.train);
    for (std::size_t i = 0; i < pred.size(); ++i) out.train_mse += (pred[i] - s.train.p[i]) * (pred[i] - s.train.p[i]);
    out.train_mse /= static_cast<double>(pred.size());
    return out;
}

double mean_baseline_mae(const Splits& s) {
    return eval::metric_report(cli::tile_pose(cli::mean_pose(s.train), s.test), s.test.p, 21, s.test.size()).mae;
}

double clean_mae = NAN;

// 5. Learnability

Outcome learnability(const DeskData& d) {
    const auto s = desk_windows(d, "single_music");
    const std::size_t total = s.train.size() + s.val.size() + s.test.size();
    const double base = mean_baseline_mae(s);
    const auto full = train_desk(s, desk_model(), desk_train(kEpochs));
    clean_mae = full.test.mae;
    const double gain = 1.0 - full.test.mae / base;

    const auto& ids = d.splits.at("single_music").at("train");
    const std::vector<std::string> few(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(kOverfitClips));
    Splits small;
    small.train = cli::make_windows(d.clips, few, cli::fit_stats(d.clips, few), d.config.features);
    small.val = small.test = small.train;
    const auto over = train_desk(small, desk_model(), desk_train(kOverfitEpochs));

    const bool pass = total >= kMinWindows && d.config.dataset.bgms.size() >= 2 && d.config.dataset.motions.size() == 5 &&
                      gain >= kMinRelativeGain && over.train_mse < kOverfitMse;
    return {pass, fmt("%zu windows, %zu BGMs, %zu motions; held-out MAE %.4f vs mean pose %.4f (gain %.1f%%, need >= %.0f%%, "
                      "PCKh %.3f); %zu-clip overfit train MSE %.4f (< %.2f)",
                      total, d.config.dataset.bgms.size(), d.config.dataset.motions.size(), full.test.mae, base,
                      100.0 * gain, 100.0 * kMinRelativeGain, full.test.pckh05, kOverfitClips, over.train_mse,
                      kOverfitMse)};
}

// 6. Separability

Outcome separability() {
    const auto config = cli::RunConfig::defaults();
    // The first default track is ambient.
    const auto study =
        cli::separability_study(config.dataset.scene, config.dataset.bgms.front(), config.features, {}, config.seed);
    const bool pass = study.chirp.silhouette > study.bgm.silhouette;
    return {pass, fmt("silhouette chirp %.3f vs BGM %.3f over 5 pose clusters", study.chirp.silhouette,
                      study.bgm.silhouette)};
}

// 7. Ablations

Outcome ablations(const DeskData& d) {
    const auto s = desk_windows(d, "cross_music");
    const auto full = train_desk(s, desk_model(), desk_train(kAblationEpochs));
    auto no_fa_cfg = desk_model();
    no_fa_cfg.use_fa = false;
    const auto no_fa = train_desk(s, no_fa_cfg, desk_train(kAblationEpochs));
    auto no_cpe_cfg = desk_train(kAblationEpochs);
    no_cpe_cfg.weights.w_beta = 0.0;
    const auto no_cpe = train_desk(s, desk_model(), no_cpe_cfg);
    const double base = mean_baseline_mae(s);
    const bool pass = no_fa.test.mae > full.test.mae && no_cpe.test.mae > full.test.mae;
    return {pass, fmt("cross-music held-out MAE full %.4f, no FA %.4f, w_beta=0 %.4f (mean pose %.4f; %zu train / %zu test "
                      "windows, %zu epochs)",
                      full.test.mae, no_fa.test.mae, no_cpe.test.mae, base, s.train.size(), s.test.size(), kAblationEpochs)};
}

// 8. Noise

Outcome noise_robustness() {
    const auto noisy = desk_data(10.0);
    const auto s = desk_windows(noisy, "single_music");
    const auto r = train_desk(s, desk_model(), desk_train(kEpochs));
    const double ratio = r.test.mae / clean_mae;
    const bool pass = std::isfinite(r.test.mae) && std::isfinite(clean_mae) && ratio < kNoiseRatio;
    return {pass, fmt("SNR 10 dB held-out MAE %.4f vs clean %.4f (ratio %.2f, < %.0f; mean pose %.4f)", r.test.mae,
                      clean_mae, ratio, kNoiseRatio, mean_baseline_mae(s))};
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    int passed = 0, total = 0;
    auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        const auto t0 = clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        ++total;
        passed += o.pass;
        std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
    };
    run(1, "DSP oracle suite", dsp_suite);
    run(2, "gradient suite", gradient_suite);
    run(3, "loss fixtures", loss_fixtures);
    run(4, "metric fixtures", metric_fixtures);
    {
        const auto clean = desk_data(std::numeric_limits<double>::infinity());
        run(5, "desk-scale learnability", [&] { return learnability(clean); });
        run(6, "separability (chirp vs BGM)", separability);
        run(7, "ablation direction (cross-music)", [&] { return ablations(clean); });
    }
    run(8, "noise robustness (SNR 10 dB)", noise_robustness);
    std::printf("%d/%d acceptance criteria passed\n", passed, total);
    return passed == total ? 0 : 1;
}
