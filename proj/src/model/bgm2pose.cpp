#include "acousticpose/model/bgm2pose.hpp"

#include <cmath>
#include <random>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::model {

using namespace ad;

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    auto y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
}

}  // namespace

void FaConfig::validate() const {
    auto positive = [](std::size_t v, const char* what) {
        if (v == 0) throw ConfigError(std::string("model.") + what + " must be positive");
    };
    positive(mel_bins, "mel_bins");
    positive(frames, "frames");
    positive(in_channels, "in_channels");
    positive(music_channels, "music_channels");
    positive(joints, "joints");
    positive(latent_dim, "latent_dim");
    positive(freq_stride, "freq_stride");
    positive(head_channels, "head_channels");
    positive(cpe_dim, "cpe_dim");
    positive(cpe_ffn, "cpe_ffn");
    if (pre_kernel_freq % 2 == 0 || pre_kernel_time % 2 == 0 || post_kernel_freq % 2 == 0 || post_kernel_time % 2 == 0) {
        throw ConfigError("model kernel sizes must be odd");
    }
    if (post_channels.empty()) throw ConfigError("model.post_channels needs at least one block");
    if (unet_channels.empty()) throw ConfigError("model.unet_channels needs at least one level");
    for (auto c : pre_channels) positive(c, "pre_channels");
    for (auto c : post_channels) positive(c, "post_channels");
    for (auto c : unet_channels) positive(c, "unet_channels");
    if (frames % (std::size_t{1} << unet_depth()) != 0) {
        throw ConfigError("model.frames must be divisible by 2^unet depth");
    }
}

std::size_t FaConfig::reduced_bins() const {
    std::size_t b = mel_bins;
    for (std::size_t i = 0; i < post_channels.size(); ++i) b = conv_out(b, post_kernel_freq, freq_stride, post_kernel_freq / 2);
    return b;
}

nlohmann::json FaConfig::to_json() const {
    return {{"mel_bins", mel_bins},
            {"frames", frames},
            {"in_channels", in_channels},
            {"music_channels", music_channels},
            {"joints", joints},
            {"latent_dim", latent_dim},
            {"pre_channels", pre_channels},
            {"post_channels", post_channels},
            {"pre_kernel_freq", pre_kernel_freq},
            {"pre_kernel_time", pre_kernel_time},
            {"post_kernel_freq", post_kernel_freq},
            {"post_kernel_time", post_kernel_time},
            {"freq_stride", freq_stride},
            {"unet_channels", unet_channels},
            {"head_channels", head_channels},
            {"cpe_dim", cpe_dim},
            {"cpe_ffn", cpe_ffn},
            {"use_fa", use_fa},
            {"unet_skips", unet_skips},
            {"cpe_detach", cpe_detach}};
}

FaConfig FaConfig::from_json(const nlohmann::json& j) {
    FaConfig c;
    try {
        j.at("mel_bins").get_to(c.mel_bins);
        j.at("frames").get_to(c.frames);
        j.at("in_channels").get_to(c.in_channels);
        j.at("music_channels").get_to(c.music_channels);
        j.at("joints").get_to(c.joints);
        j.at("latent_dim").get_to(c.latent_dim);
        j.at("pre_channels").get_to(c.pre_channels);
        j.at("post_channels").get_to(c.post_channels);
        j.at("pre_kernel_freq").get_to(c.pre_kernel_freq);
        j.at("pre_kernel_time").get_to(c.pre_kernel_time);
        j.at("post_kernel_freq").get_to(c.post_kernel_freq);
        j.at("post_kernel_time").get_to(c.post_kernel_time);
        j.at("freq_stride").get_to(c.freq_stride);
        j.at("unet_channels").get_to(c.unet_channels);
        j.at("head_channels").get_to(c.head_channels);
        j.at("cpe_dim").get_to(c.cpe_dim);
        j.at("cpe_ffn").get_to(c.cpe_ffn);
        j.at("use_fa").get_to(c.use_fa);
        j.at("unet_skips").get_to(c.unet_skips);
        j.at("cpe_detach").get_to(c.cpe_detach);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

void LossWeights::validate() const {
    if (!(w_alpha > 0.0)) throw ConfigError("w_alpha must be positive");
    if (!(w_beta >= 0.0)) throw ConfigError("w_beta must be non-negative");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

Bgm2Pose::Bgm2Pose(FaConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    const auto& c = config_;
    const std::size_t d = c.latent_dim;

    for (const char* branch : {"fa.pre_x", "fa.pre_m"}) {
        std::size_t in = std::string(branch) == "fa.pre_x" ? c.in_channels : c.music_channels;
        auto widths = c.pre_channels;
        widths.push_back(d);
        for (std::size_t i = 0; i < widths.size(); ++i) {
            add_conv2d(std::string(branch) + "." + std::to_string(i), in, widths[i], c.pre_kernel_freq, c.pre_kernel_time);
            in = widths[i];
        }
    }
    Rng rng(derive_seed(seed_, {0xF00D}));
    std::normal_distribution<double> small(0.0, 0.02);
    auto gaussian = [&](Shape s) {
        std::vector<double> v(numel(s));
        for (auto& x : v) x = small(rng);
        return Tensor::from(std::move(s), std::move(v));
    };
    params_.add("fa.freq_embedding", gaussian({c.mel_bins, d}));
    auto square = [&](const std::string& name) {
        Rng r(derive_seed(seed_, {0x9A, init_counter_++}));
        const double bound = std::sqrt(3.0 / static_cast<double>(d));
        std::vector<double> v(d * d);
        for (auto& x : v) x = uniform(r, -bound, bound);
        params_.add(name, Tensor::from({d, d}, std::move(v)));
    };
    square("fa.w_q");
    square("fa.w_k");
    square("fa.w_v");

    std::size_t in = d;
    for (std::size_t i = 0; i < c.post_channels.size(); ++i) {
        add_conv2d("fa.post." + std::to_string(i), in, c.post_channels[i], c.post_kernel_freq, c.post_kernel_time);
        in = c.post_channels[i];
    }

    const auto& u = c.unet_channels;
    add_conv1d("unet.enc.0", c.trunk_channels(), u[0], 3, true);
    for (std::size_t i = 1; i < u.size(); ++i) add_conv1d("unet.enc." + std::to_string(i), u[i - 1], u[i], 3, true);
    for (std::size_t i = u.size() - 1; i >= 1; --i) {
        const auto name = "unet.up." + std::to_string(i);
        {
            Rng r(derive_seed(seed_, {0x7C, init_counter_++}));
            const double bound = std::sqrt(3.0 / static_cast<double>(u[i] * 2));
            std::vector<double> v(u[i] * u[i - 1] * 2);
            for (auto& x : v) x = uniform(r, -bound, bound);
            params_.add(name + ".weight", Tensor::from({u[i], u[i - 1], 2}, std::move(v)));
            params_.add(name + ".bias", Tensor::zeros({u[i - 1]}));
        }
        add_conv1d("unet.dec." + std::to_string(i), 2 * u[i - 1], u[i - 1], 3, true);
    }
    add_conv1d("head.0", u[0], c.head_channels, 3, false);
    add_conv1d("head.1", c.head_channels, c.pose_dims(), 1, false, 0.01);

    add_token_encoder("cpe.pose", c.pose_dims());
    add_token_encoder("cpe.audio", c.trunk_channels());
}

void Bgm2Pose::add_conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kh, std::size_t kw) {
    Rng r(derive_seed(seed_, {0xC2, init_counter_++}));
    const double bound = std::sqrt(3.0 / static_cast<double>(in * kh * kw));
    std::vector<double> v(out * in * kh * kw);
    for (auto& x : v) x = uniform(r, -bound, bound);
    params_.add(name + ".weight", Tensor::from({out, in, kh, kw}, std::move(v)));
    params_.add(name + ".bias", Tensor::zeros({out}));
    params_.add(name + ".ln_gamma", Tensor::full({out}, 1.0));
    params_.add(name + ".ln_beta", Tensor::zeros({out}));
}

void Bgm2Pose::add_conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t k, bool norm,
                          double gain) {
    Rng r(derive_seed(seed_, {0xC1, init_counter_++}));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in * k));
    std::vector<double> v(out * in * k);
    for (auto& x : v) x = uniform(r, -bound, bound);
    params_.add(name + ".weight", Tensor::from({out, in, k}, std::move(v)));
    params_.add(name + ".bias", Tensor::zeros({out}));
    if (norm) {
        params_.add(name + ".ln_gamma", Tensor::full({out}, 1.0));
        params_.add(name + ".ln_beta", Tensor::zeros({out}));
    }
}

void Bgm2Pose::add_token_encoder(const std::string& name, std::size_t in) {
    const std::size_t e = config_.cpe_dim, T = config_.frames, h = config_.cpe_ffn;
    add_conv1d(name + ".embed", in, e, 3, false);
    Rng rng(derive_seed(seed_, {0x70C, init_counter_++}));
    std::normal_distribution<double> small(0.0, 0.02);
    auto gaussian = [&](Shape s) {
        std::vector<double> v(numel(s));
        for (auto& x : v) x = small(rng);
        return Tensor::from(std::move(s), std::move(v));
    };
    auto dense = [&](const std::string& n, std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
        std::vector<double> v(fan_in * fan_out);
        for (auto& x : v) x = uniform(rng, -bound, bound);
        params_.add(n + ".weight", Tensor::from({fan_in, fan_out}, std::move(v)));
        params_.add(n + ".bias", Tensor::zeros({fan_out}));
    };
    params_.add(name + ".token", gaussian({1, 1, e}));
    params_.add(name + ".time_embedding", gaussian({T + 1, e}));
    params_.add(name + ".ln1_gamma", Tensor::full({e}, 1.0));
    params_.add(name + ".ln1_beta", Tensor::zeros({e}));
    dense(name + ".q", e, e);
    dense(name + ".k", e, e);
    dense(name + ".v", e, e);
    dense(name + ".o", e, e);
    params_.add(name + ".ln2_gamma", Tensor::full({e}, 1.0));
    params_.add(name + ".ln2_beta", Tensor::zeros({e}));
    dense(name + ".ffn1", e, h);
    dense(name + ".ffn2", h, e);
}

Tensor Bgm2Pose::block2d(const std::string& name, const Tensor& x, std::size_t stride_h, std::size_t kh,
                         std::size_t kw) const {
    auto y = conv2d(x, param(name + ".weight"), param(name + ".bias"), {stride_h, 1, kh / 2, kw / 2});
    // Normalise each time step over channels and bins jointly, then apply per-channel affine.
    const std::size_t N = y.size(0), C = y.size(1), B = y.size(2), T = y.size(3);
    auto z = reshape(permute(y, {0, 3, 1, 2}), {N, T, C * B});
    z = permute(reshape(layer_norm(z, 2, Tensor{}, Tensor{}), {N, T, C, B}), {0, 2, 3, 1});
    z = add(mul(z, reshape(param(name + ".ln_gamma"), {C, 1, 1})), reshape(param(name + ".ln_beta"), {C, 1, 1}));
    return relu(z);
}

Tensor Bgm2Pose::block1d(const std::string& name, const Tensor& x, std::size_t stride) const {
    auto y = conv1d(x, param(name + ".weight"), param(name + ".bias"), stride, 1);
    y = layer_norm(y, 1, param(name + ".ln_gamma"), param(name + ".ln_beta"));
    return relu(y);
}

FaOutput Bgm2Pose::fa_module(const Tensor& X, const Tensor& M) const {
    const auto& c = config_;
    if (X.dim() != 4 || M.dim() != 4) throw DimensionError("fa_module expects [N, C, b, T] inputs");
    if (X.size(3) != M.size(3)) {
        throw AlignmentError("recorded features have " + std::to_string(X.size(3)) + " frames, music has " +
                             std::to_string(M.size(3)));
    }
    if (X.size(0) != M.size(0)) throw DimensionError("fa_module batch sizes differ");
    if (X.size(1) != c.in_channels || M.size(1) != c.music_channels || X.size(2) != c.mel_bins ||
        M.size(2) != c.mel_bins) {
        throw DimensionError("fa_module input shapes " + shape_str(X.shape()) + " / " + shape_str(M.shape()) +
                             " do not match the model config");
    }
    const std::size_t N = X.size(0), T = X.size(3);

    auto x = X, m = M;
    for (std::size_t i = 0; i <= c.pre_channels.size(); ++i) {
        x = block2d("fa.pre_x." + std::to_string(i), x, 1, c.pre_kernel_freq, c.pre_kernel_time);
        m = block2d("fa.pre_m." + std::to_string(i), m, 1, c.pre_kernel_freq, c.pre_kernel_time);
    }
    FaOutput out;
    const auto F = param("fa.freq_embedding");
    out.x_hat = add(permute(x, {0, 3, 2, 1}), F);
    out.m_hat = add(permute(m, {0, 3, 2, 1}), F);
    if (c.use_fa) {
        const auto Q = matmul(out.x_hat, param("fa.w_q"));
        const auto K = matmul(out.m_hat, param("fa.w_k"));
        const auto V = matmul(out.x_hat, param("fa.w_v"));
        auto [attn, weights] = scaled_dot_product_attention(Q, K, V);
        out.attended = add(out.x_hat, attn);
        out.attention = weights;
    } else {
        out.attended = out.x_hat;
    }
    auto y = permute(out.attended, {0, 3, 2, 1});
    for (std::size_t i = 0; i < c.post_channels.size(); ++i) {
        y = block2d("fa.post." + std::to_string(i), y, c.freq_stride, c.post_kernel_freq, c.post_kernel_time);
    }
    out.features = reshape(y, {N, y.size(1) * y.size(2), T});
    return out;
}

Tensor Bgm2Pose::backbone(const Tensor& features) const {
    const auto& c = config_;
    const auto& u = c.unet_channels;
    std::vector<Tensor> skips{block1d("unet.enc.0", features, 1)};
    for (std::size_t i = 1; i < u.size(); ++i) skips.push_back(block1d("unet.enc." + std::to_string(i), skips.back(), 2));
    auto y = skips.back();
    for (std::size_t i = u.size() - 1; i >= 1; --i) {
        const auto name = "unet.up." + std::to_string(i);
        y = conv_transpose1d(y, param(name + ".weight"), param(name + ".bias"), 2);
        const auto skip = c.unet_skips ? skips[i - 1] : Tensor::zeros(skips[i - 1].shape());
        y = block1d("unet.dec." + std::to_string(i), concat({y, skip}, 1), 1);
    }
    y = relu(conv1d(y, param("head.0.weight"), param("head.0.bias"), 1, 1));
    y = conv1d(y, param("head.1.weight"), param("head.1.bias"), 1, 0);
    return transpose(y, 1, 2);
}

Tensor Bgm2Pose::token_encoder(const std::string& name, const Tensor& seq) const {
    const std::size_t N = seq.size(0), T = seq.size(2), e = config_.cpe_dim;
    if (T != config_.frames) throw DimensionError(name + " expects " + std::to_string(config_.frames) + " frames");
    auto x = conv1d(seq, param(name + ".embed.weight"), param(name + ".embed.bias"), 1, 1);
    x = transpose(x, 1, 2);
    const auto token = add(Tensor::zeros({N, 1, e}), param(name + ".token"));
    x = add(concat({token, x}, 1), param(name + ".time_embedding"));

    auto h = layer_norm(x, 2, param(name + ".ln1_gamma"), param(name + ".ln1_beta"));
    const auto q = linear(h, param(name + ".q.weight"), param(name + ".q.bias"));
    const auto k = linear(h, param(name + ".k.weight"), param(name + ".k.bias"));
    const auto v = linear(h, param(name + ".v.weight"), param(name + ".v.bias"));
    x = add(x, linear(scaled_dot_product_attention(q, k, v).first, param(name + ".o.weight"), param(name + ".o.bias")));
    h = layer_norm(x, 2, param(name + ".ln2_gamma"), param(name + ".ln2_beta"));
    h = gelu(linear(h, param(name + ".ffn1.weight"), param(name + ".ffn1.bias")));
    x = add(x, linear(h, param(name + ".ffn2.weight"), param(name + ".ffn2.bias")));
    return l2_normalize(reshape(slice(x, 1, 0, 1), {N, e}));
}

Tensor Bgm2Pose::pose_encoder(const Tensor& poses) const {
    if (poses.dim() != 3 || poses.size(2) != config_.pose_dims()) {
        throw DimensionError("pose_encoder expects [N, T, " + std::to_string(config_.pose_dims()) + "], got " +
                             shape_str(poses.shape()));
    }
    return token_encoder("cpe.pose", transpose(poses, 1, 2));
}

Tensor Bgm2Pose::audio_encoder(const Tensor& features) const {
    if (features.dim() != 3 || features.size(1) != config_.trunk_channels()) {
        throw DimensionError("audio_encoder expects [N, " + std::to_string(config_.trunk_channels()) + ", T], got " +
                             shape_str(features.shape()));
    }
    return token_encoder("cpe.audio", config_.cpe_detach ? features.detach() : features);
}

ModelOutput Bgm2Pose::forward(const Tensor& X, const Tensor& M, bool with_audio_embedding) const {
    ModelOutput out;
    out.fa = fa_module(X, M);
    out.poses = backbone(out.fa.features);
    if (with_audio_embedding) out.z_audio = audio_encoder(out.fa.features);
    return out;
}

Tensor pose_loss(const Tensor& predicted, const Tensor& truth) {
    if (predicted.shape() != truth.shape()) {
        throw DimensionError("pose_loss shapes " + shape_str(predicted.shape()) + " vs " + shape_str(truth.shape()));
    }
    return mse(predicted, truth);
}

Tensor smooth_loss(const Tensor& predicted, const Tensor& truth) {
    if (predicted.shape() != truth.shape()) {
        throw DimensionError("smooth_loss shapes " + shape_str(predicted.shape()) + " vs " + shape_str(truth.shape()));
    }
    if (predicted.dim() < 2 || predicted.size(1) < 2) throw ContractError("smooth_loss needs at least two frames");
    const std::size_t T = predicted.size(1);
    auto velocity = [T](const Tensor& p) { return sub(slice(p, 1, 1, T - 1), slice(p, 1, 0, T - 1)); };
    return mse(velocity(predicted), velocity(truth));
}

Tensor contrastive_loss(const Tensor& z_pose, const Tensor& z_audio, double tau) {
    if (z_pose.dim() != 2 || z_pose.shape() != z_audio.shape()) {
        throw DimensionError("contrastive_loss shapes " + shape_str(z_pose.shape()) + " vs " + shape_str(z_audio.shape()));
    }
    if (!(tau > 0.0)) throw ContractError("contrastive temperature must be positive");
    const std::size_t N = z_pose.size(0), e = z_pose.size(1);
    if (N == 0) throw EmptyInputError("contrastive_loss on an empty batch");
    for (const Tensor* z : {&z_pose, &z_audio}) {
        for (std::size_t r = 0; r < N; ++r) {
            double s = 0.0;
            for (std::size_t i = 0; i < e; ++i) s += z->data()[r * e + i] * z->data()[r * e + i];
            if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
                throw ContractError("contrastive_loss rows must be unit norm (row " + std::to_string(r) + " has norm " +
                                    std::to_string(std::sqrt(s)) + ")");
            }
        }
    }
    const auto S = scale(matmul(z_pose, transpose(z_audio, 0, 1)), 1.0 / tau);
    std::vector<double> eye(N * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) eye[i * N + i] = 1.0;
    const auto I = Tensor::from({N, N}, std::move(eye));
    const auto rows = sum(mul(log_softmax(S), I));
    const auto cols = sum(mul(log_softmax(transpose(S, 0, 1)), I));
    return scale(add(rows, cols), -1.0 / (2.0 * static_cast<double>(N)));
}

Tensor total_loss(const Tensor& pose, const Tensor& smooth, const Tensor& cpe, const LossWeights& w) {
    return add(add(pose, scale(smooth, w.w_alpha)), scale(cpe, w.w_beta));
}

LossBreakdown compute_losses(const Bgm2Pose& model, const Tensor& X, const Tensor& M, const Tensor& P,
                             const LossWeights& w) {
    w.validate();
    LossBreakdown out;
    const bool cpe = w.w_beta > 0.0 && X.size(0) > 1;
    out.output = model.forward(X, M, cpe);
    out.pose = pose_loss(out.output.poses, P);
    out.smooth = smooth_loss(out.output.poses, P);
    out.cpe = cpe ? contrastive_loss(model.pose_encoder(P), out.output.z_audio, w.tau) : Tensor::scalar(0.0);
    out.total = total_loss(out.pose, out.smooth, out.cpe, w);
    return out;
}

}  // namespace acousticpose::model
