#include "acousticpose/cli/studies.hpp"

#include <cmath>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"
#include "acousticpose/sim/skeleton.hpp"

namespace acousticpose::cli {

namespace {

std::vector<sim::PoseSequence> cluster_centres(std::size_t clusters, std::uint64_t seed) {
    const auto motions = sim::all_motions();
    std::vector<sim::PoseSequence> out;
    for (std::size_t k = 0; k < clusters; ++k) {
        const auto m = motions[k % motions.size()];
        const auto seq = sim::gen_pose_sequence(m, 2.0, derive_seed(seed, {0xC1, k}));
        out.push_back(seq.slice(10 + 3 * (k / motions.size()), 1));
    }
    return out;
}

eval::SeparabilityReport condition(const sim::SceneConfig& scene, const signal::StereoClip& track,
                                   const std::vector<sim::PoseSequence>& windows_poses, std::size_t per_cluster,
                                   const signal::FeatureConfig& fc, double snr_db, std::uint64_t seed) {
    const signal::FeatureExtractor extractor(fc);
    const std::size_t T = fc.window_frames;
    const std::size_t clusters = windows_poses.size() / per_cluster;

    // Windows cycle through the clusters so no cluster owns a stretch of the track.
    const std::size_t count = clusters * per_cluster;
    sim::PoseSequence poses(count * T);
    std::vector<int> labels;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = i % clusters, w = i / clusters;
        const auto& src = windows_poses[k * per_cluster + w];
        for (std::size_t t = 0; t < T; ++t) {
            std::copy(src.coords.begin(), src.coords.end(),
                      poses.coords.begin() + static_cast<std::ptrdiff_t>((i * T + t) * sim::kPoseDims));
        }
        labels.push_back(static_cast<int>(k));
    }
    const auto samples = static_cast<std::size_t>(std::lround(static_cast<double>(count * T) * fc.sample_rate / sim::kPoseFps));
    signal::StereoClip music;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& s = track.channel(c).samples;
        if (s.size() < samples) throw DataError("separability track is shorter than the study");
        music.channel(c).sample_rate = fc.sample_rate;
        music.channel(c).samples.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(samples));
    }
    auto rec = sim::render_recording(scene, music, poses);
    if (std::isfinite(snr_db)) rec = sim::add_gaussian_noise(rec, snr_db, derive_seed(seed, {0x5E}));
    const auto raw = extractor.extract_recorded(rec);
    const std::vector<signal::FeatureTensor> parts{raw.intensity, raw.recorded};
    const auto z = signal::standardize_channels(signal::concat_channels(parts), signal::channel_stats(signal::concat_channels(parts)));

    std::vector<std::vector<double>> rows;
    for (auto s : signal::window_starts(z.frames, T, T)) {
        if (rows.size() == count) break;
        rows.push_back(z.frames_range(s, T).values);
    }
    labels.resize(rows.size());
    if (rows.empty()) throw EmptyInputError("separability study produced no windows");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), x.cols());
    }
    return eval::feature_pca(x, labels);
}

}  // namespace

SeparabilityStudy separability_study(const sim::SceneConfig& scene, const sim::BgmSpec& bgm,
                                     const signal::FeatureConfig& features, const SeparabilityOptions& options,
                                     std::uint64_t seed) {
    if (options.clusters < 2 || options.windows_per_cluster < 3) {
        throw ConfigError("separability study needs >= 2 clusters of >= 3 windows");
    }
    const auto centres = cluster_centres(options.clusters, seed);
    std::vector<sim::PoseSequence> windows;
    Rng rng(derive_seed(seed, {0x717}));
    std::normal_distribution<double> jitter(0.0, options.pose_jitter);
    for (const auto& c : centres) {
        for (std::size_t w = 0; w < options.windows_per_cluster; ++w) {
            auto p = c;
            for (std::size_t j = 1; j < sim::kJoints; ++j) {
                for (std::size_t a = 0; a < 3; ++a) p.coords[j * 3 + a] += jitter(rng);
            }
            sim::normalize_pose(p);
            windows.push_back(std::move(p));
        }
    }

    const double seconds = static_cast<double>(options.clusters * options.windows_per_cluster * features.window_frames) /
                           sim::kPoseFps;
    sim::BgmSpec chirp;
    chirp.kind = sim::BgmKind::Chirp;
    chirp.chirp_period_s = options.chirp_period_s;
    chirp.level_rms = bgm.level_rms;
    chirp.seed = bgm.seed;
    const auto chirp_track = sim::synth_bgm(chirp, seconds, derive_seed(seed, {0xC4}), features.sample_rate);
    const auto bgm_track = sim::synth_bgm(bgm, seconds, derive_seed(seed, {0xB6}), features.sample_rate);

    SeparabilityStudy out;
    out.chirp = condition(scene, chirp_track, windows, options.windows_per_cluster, features, options.noise_snr_db,
                          derive_seed(seed, {1}));
    out.bgm = condition(scene, bgm_track, windows, options.windows_per_cluster, features, options.noise_snr_db,
                        derive_seed(seed, {2}));
    return out;
}

std::vector<double> mean_pose(const train::WindowSet& windows) {
    if (windows.empty()) throw EmptyInputError("mean pose of an empty window set");
    std::vector<double> mean(windows.pose_dims, 0.0);
    const std::size_t rows = windows.size() * windows.frames;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t d = 0; d < windows.pose_dims; ++d) mean[d] += windows.p[r * windows.pose_dims + d];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    return mean;
}

std::vector<double> tile_pose(const std::vector<double>& pose, const train::WindowSet& windows) {
    if (pose.size() != windows.pose_dims) throw DimensionError("pose does not match the window layout");
    std::vector<double> out;
    out.reserve(windows.p.size());
    for (std::size_t r = 0; r < windows.size() * windows.frames; ++r) out.insert(out.end(), pose.begin(), pose.end());
    return out;
}

}  // namespace acousticpose::cli
