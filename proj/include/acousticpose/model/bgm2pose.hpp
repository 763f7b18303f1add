#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/autodiff/ops.hpp"
#include "acousticpose/autodiff/params.hpp"

namespace acousticpose::model {

using ad::Tensor;

struct FaConfig {
    std::size_t mel_bins = 128;
    std::size_t frames = 12;
    std::size_t in_channels = 11;
    std::size_t music_channels = 2;
    std::size_t joints = 21;
    std::size_t latent_dim = 64;
    // Hidden widths of the pre-attention blocks; the last block always maps to latent_dim.
    std::vector<std::size_t> pre_channels{16, 32};
    std::vector<std::size_t> post_channels{32, 16};
    std::size_t pre_kernel_freq = 3, pre_kernel_time = 1;
    std::size_t post_kernel_freq = 5, post_kernel_time = 1;
    std::size_t freq_stride = 4;
    // Widths per U-Net level; depth is size() - 1.
    std::vector<std::size_t> unet_channels{64, 96, 128};
    std::size_t head_channels = 64;
    std::size_t cpe_dim = 64;
    std::size_t cpe_ffn = 128;
    bool use_fa = true;
    bool unet_skips = true;
    bool cpe_detach = false;

    void validate() const;
    std::size_t pose_dims() const { return joints * 3; }
    std::size_t reduced_bins() const;
    std::size_t trunk_channels() const { return post_channels.back() * reduced_bins(); }
    std::size_t unet_depth() const { return unet_channels.size() - 1; }

    nlohmann::json to_json() const;
    static FaConfig from_json(const nlohmann::json& j);
};

struct LossWeights {
    double w_alpha = 100.0;
    double w_beta = 1.0;
    double tau = 0.07;

    // w_beta may be zero to switch the contrastive term off.
    void validate() const;
};

struct FaOutput {
    Tensor x_hat;      // [N, T, b, d] recorded branch + F
    Tensor m_hat;      // [N, T, b, d] music branch + F
    Tensor attended;   // [N, T, b, d] after the residual
    Tensor attention;  // [N, T, b, b]; undefined when use_fa is off
    Tensor features;   // [N, C', T] reshaped trunk feature
};

struct ModelOutput {
    FaOutput fa;
    Tensor poses;    // [N, T, 3J]
    Tensor z_audio;  // [N, e]
};

class Bgm2Pose {
public:
    Bgm2Pose(FaConfig config, std::uint64_t seed);

    const FaConfig& config() const { return config_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }

    // X [N, 11, b, T], M [N, 2, b, T]. Throws AlignmentError if T differs.
    FaOutput fa_module(const Tensor& X, const Tensor& M) const;
    // [N, C', T] -> [N, T, 3J]
    Tensor backbone(const Tensor& features) const;
    // [N, T, 3J] -> unit rows [N, e]
    Tensor pose_encoder(const Tensor& poses) const;
    // [N, C', T] -> unit rows [N, e]
    Tensor audio_encoder(const Tensor& features) const;

    ModelOutput forward(const Tensor& X, const Tensor& M, bool with_audio_embedding = true) const;

private:
    Tensor param(const std::string& name) const { return params_.get(name); }
    Tensor block2d(const std::string& name, const Tensor& x, std::size_t stride_h, std::size_t kh, std::size_t kw) const;
    Tensor block1d(const std::string& name, const Tensor& x, std::size_t stride) const;
    Tensor token_encoder(const std::string& name, const Tensor& seq) const;

    void add_conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kh, std::size_t kw);
    void add_conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t k, bool norm, double gain = 1.0);
    void add_token_encoder(const std::string& name, std::size_t in);

    FaConfig config_;
    ad::ParamStore params_;
    std::uint64_t seed_;
    std::uint64_t init_counter_ = 0;
};

// Mean squared error over every joint coordinate.
Tensor pose_loss(const Tensor& predicted, const Tensor& truth);
// Mean squared error between predicted and true frame-to-frame displacements (time is axis 1).
Tensor smooth_loss(const Tensor& predicted, const Tensor& truth);
// Symmetric InfoNCE over matched rows. Throws ContractError unless rows are unit norm (1e-6).
Tensor contrastive_loss(const Tensor& z_pose, const Tensor& z_audio, double tau);
Tensor total_loss(const Tensor& pose, const Tensor& smooth, const Tensor& cpe, const LossWeights& w);

struct LossBreakdown {
    Tensor pose, smooth, cpe, total;
    ModelOutput output;
};

// Full objective for one batch; P is [N, T, 3J]. The contrastive term is skipped
// (zero) when w_beta == 0 or the batch holds a single window.
LossBreakdown compute_losses(const Bgm2Pose& model, const Tensor& X, const Tensor& M, const Tensor& P,
                             const LossWeights& w);

}  // namespace acousticpose::model
