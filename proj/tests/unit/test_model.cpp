#include <doctest.h>

#include <cmath>
#include <random>

#include "acousticpose/autodiff/gradcheck.hpp"
#include "acousticpose/common/error.hpp"
#include "acousticpose/model/bgm2pose.hpp"

using namespace acousticpose;
using namespace acousticpose::model;
using ad::Shape;

namespace {

Tensor randn(Shape shape, unsigned seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = g(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor unit_rows(std::size_t n, std::size_t e, unsigned seed) { return ad::l2_normalize(randn({n, e}, seed)); }

FaConfig tiny_config() {
    FaConfig c;
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

FaConfig small_config() {
    FaConfig c;
    c.mel_bins = 32;
    c.latent_dim = 8;
    c.pre_channels = {8};
    c.post_channels = {8, 8};
    c.unet_channels = {16, 16, 16};
    c.head_channels = 16;
    c.cpe_dim = 16;
    c.cpe_ffn = 16;
    return c;
}

double cosine(const Tensor& a, const Tensor& b) {
    double s = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        s += a.data()[i] * b.data()[i];
        na += a.data()[i] * a.data()[i];
        nb += b.data()[i] * b.data()[i];
    }
    return s / std::sqrt(na * nb);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("fa_module: shapes for the full-size input") {
    FaConfig c;
    Bgm2Pose m(c, 1);
    const auto X = randn({1, 11, 128, 12}, 1), M = randn({1, 2, 128, 12}, 2);
    ad::NoGradGuard guard;
    const auto fa = m.fa_module(X, M);
    CHECK(c.reduced_bins() == 8);
    CHECK(fa.features.shape() == Shape{1, c.post_channels.back() * 8, 12});
    CHECK(fa.attention.shape() == Shape{1, 12, 128, 128});
    CHECK(m.backbone(fa.features).shape() == Shape{1, 12, 63});
    CHECK_THROWS_AS(m.fa_module(X, randn({1, 2, 128, 11}, 3)), AlignmentError);
    CHECK_THROWS_AS(m.fa_module(randn({1, 10, 128, 12}, 3), M), DimensionError);
}

TEST_CASE("fa_module: attention rows are distributions") {
    Bgm2Pose m(small_config(), 2);
    ad::NoGradGuard guard;
    const auto fa = m.fa_module(randn({3, 11, 32, 12}, 4), randn({3, 2, 32, 12}, 5));
    const std::size_t b = 32;
    const auto w = fa.attention.data();
    for (std::size_t r = 0; r < fa.attention.numel() / b; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            CHECK(w[r * b + i] >= 0.0);
            s += w[r * b + i];
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("fa_module: zero key projection with flat music gives uniform attention") {
    Bgm2Pose m(small_config(), 3);
    auto wk = m.params().get("fa.w_k");
    std::fill(wk.mutable_data().begin(), wk.mutable_data().end(), 0.0);
    ad::NoGradGuard guard;
    const auto M = Tensor::full({2, 2, 32, 12}, 0.7);
    const auto fa = m.fa_module(randn({2, 11, 32, 12}, 6), M);
    for (double v : fa.attention.data()) CHECK(std::abs(v - 1.0 / 32.0) < 1e-12);
}

TEST_CASE("fa_module: frequency embedding is shared by both branches") {
    Bgm2Pose m(small_config(), 4);
    const auto X = randn({1, 11, 32, 12}, 7), M = randn({1, 2, 32, 12}, 8);
    ad::NoGradGuard guard;
    const auto before = m.fa_module(X, M);
    auto F = m.params().get("fa.freq_embedding");
    F.mutable_data()[5] += 0.5;
    const auto after = m.fa_module(X, M);
    CHECK(values(before.x_hat) != values(after.x_hat));
    CHECK(values(before.m_hat) != values(after.m_hat));
    std::size_t changed_x = 0, changed_m = 0;
    for (std::size_t i = 0; i < before.x_hat.numel(); ++i) {
        const double dx = after.x_hat.data()[i] - before.x_hat.data()[i];
        const double dm = after.m_hat.data()[i] - before.m_hat.data()[i];
        changed_x += dx != 0.0;
        changed_m += dm != 0.0;
        if (dx != 0.0) CHECK(dx == doctest::Approx(0.5));
    }
    CHECK(changed_x == 12);
    CHECK(changed_m == 12);
}

TEST_CASE("fa_module: no mixing across time before the U-Net") {
    Bgm2Pose m(small_config(), 5);
    auto X = randn({2, 11, 32, 12}, 9);
    const auto M = randn({2, 2, 32, 12}, 10);
    ad::NoGradGuard guard;
    const auto base = m.fa_module(X, M);
    const std::size_t t0 = 5;
    auto& xv = X.mutable_data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        if (i % 12 == t0) xv[i] = 0.0;
    }
    const auto zeroed = m.fa_module(X, M);
    // attended [N, T, b, d]
    const std::size_t per_t = 32 * 8;
    bool t0_changed = false;
    for (std::size_t i = 0; i < base.attended.numel(); ++i) {
        const std::size_t t = (i / per_t) % 12;
        if (t == t0) {
            t0_changed = t0_changed || base.attended.data()[i] != zeroed.attended.data()[i];
        } else {
            CHECK(base.attended.data()[i] == zeroed.attended.data()[i]);
        }
    }
    CHECK(t0_changed);
    for (std::size_t i = 0; i < base.features.numel(); ++i) {
        if (i % 12 != t0) CHECK(base.features.data()[i] == zeroed.features.data()[i]);
    }
}

TEST_CASE("fa ablation ignores the music") {
    auto c = small_config();
    c.use_fa = false;
    Bgm2Pose m(c, 6);
    const auto X = randn({1, 11, 32, 12}, 11);
    ad::NoGradGuard guard;
    const auto a = m.fa_module(X, randn({1, 2, 32, 12}, 12));
    const auto b = m.fa_module(X, randn({1, 2, 32, 12}, 13));
    CHECK(!a.attention.defined());
    CHECK(values(a.features) == values(b.features));
}

TEST_CASE("backbone: shape, zero head and skip ablation") {
    auto c = small_config();
    Bgm2Pose m(c, 7);
    const auto feat = randn({2, c.trunk_channels(), 12}, 14);
    ad::NoGradGuard guard;
    const auto p = m.backbone(feat);
    CHECK(p.shape() == Shape{2, 12, 63});
    for (double v : p.data()) CHECK(std::isfinite(v));

    auto c2 = c;
    c2.unet_skips = false;
    Bgm2Pose no_skip(c2, 7);
    const auto q = no_skip.backbone(feat);
    double gap = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) gap += std::pow(p.data()[i] - q.data()[i], 2);
    CHECK(gap > 0.0);

    for (const char* name : {"head.1.weight", "head.1.bias"}) {
        auto t = m.params().get(name);
        std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
    const auto zero = m.backbone(feat);
    for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("encoders: unit norm, determinism, sensitivity") {
    auto c = small_config();
    Bgm2Pose m(c, 8);
    ad::NoGradGuard guard;
    const auto poses = randn({3, 12, 63}, 15);
    const auto z = m.pose_encoder(poses);
    CHECK(z.shape() == Shape{3, 16});
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 16; ++i) s += z.data()[r * 16 + i] * z.data()[r * 16 + i];
        CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
    }
    CHECK(values(m.pose_encoder(poses)) == values(z));

    // Raise one arm by two units in every frame.
    auto moved = poses.clone();
    for (std::size_t t = 0; t < 12; ++t) {
        for (std::size_t j : {5u, 6u, 7u, 8u}) moved.mutable_data()[(t * 21 + j) * 3 + 2] += 2.0;
    }
    const auto a = m.pose_encoder(ad::slice(poses, 0, 0, 1));
    const auto b = m.pose_encoder(ad::slice(moved, 0, 0, 1));
    CHECK(cosine(a, b) < 0.999);

    const auto feat = randn({2, c.trunk_channels(), 12}, 16);
    const auto za = m.audio_encoder(feat);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 16; ++i) s += za.data()[r * 16 + i] * za.data()[r * 16 + i];
        CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
    }
    CHECK(values(m.audio_encoder(feat)) == values(za));
    CHECK(cosine(ad::slice(za, 0, 0, 1), ad::slice(za, 0, 1, 1)) < 0.999);
}

TEST_CASE("contrastive_loss fixtures") {
    const auto z1 = unit_rows(1, 5, 1);
    CHECK(contrastive_loss(z1, unit_rows(1, 5, 2), 0.07).item() == 0.0);

    const auto e = Tensor::from({2, 2}, {1, 0, 0, 1});
    const double expected = std::log1p(std::exp(-1.0 / 0.07));
    CHECK(std::abs(contrastive_loss(e, e, 0.07).item() - expected) < 1e-9);

    const auto zp = unit_rows(6, 8, 3);
    const auto za = unit_rows(6, 8, 4);
    const double aligned = contrastive_loss(zp, zp, 0.07).item();
    CHECK(aligned >= 0.0);
    // Reversing row order of the audio side breaks every matched pair.
    const auto shuffled = ad::concat({ad::slice(zp, 0, 3, 3), ad::slice(zp, 0, 0, 3)}, 0);
    CHECK(contrastive_loss(zp, shuffled, 0.07).item() > aligned);

    // Simultaneous permutation leaves the loss unchanged.
    const double base = contrastive_loss(zp, za, 0.07).item();
    const auto pp = ad::concat({ad::slice(zp, 0, 2, 4), ad::slice(zp, 0, 0, 2)}, 0);
    const auto pa = ad::concat({ad::slice(za, 0, 2, 4), ad::slice(za, 0, 0, 2)}, 0);
    CHECK(contrastive_loss(pp, pa, 0.07).item() == doctest::Approx(base).epsilon(1e-12));

    CHECK_THROWS_AS(contrastive_loss(Tensor::from({1, 2}, {1, 1}), Tensor::from({1, 2}, {1, 0}), 0.07), ContractError);

    // Brute-force recomputation.
    double ref = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        double row = 0.0, col = 0.0, sii = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            double sij = 0.0, sji = 0.0;
            for (std::size_t k = 0; k < 8; ++k) {
                sij += zp.data()[i * 8 + k] * za.data()[j * 8 + k];
                sji += zp.data()[j * 8 + k] * za.data()[i * 8 + k];
            }
            row += std::exp(sij / 0.07);
            col += std::exp(sji / 0.07);
            if (i == j) sii = sij;
        }
        ref += -std::log(std::exp(sii / 0.07) / row) - std::log(std::exp(sii / 0.07) / col);
    }
    CHECK(base == doctest::Approx(ref / 12.0).epsilon(1e-10));
}

TEST_CASE("pose and smooth loss fixtures") {
    const auto P = randn({2, 5, 9}, 20);
    CHECK(pose_loss(P, P).item() == 0.0);
    CHECK(pose_loss(ad::add_scalar(P, 1.0), P).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(smooth_loss(P, P).item() == 0.0);
    auto offset = P.clone();
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t i = 0; i < 45; ++i) offset.mutable_data()[n * 45 + i] += n == 0 ? 0.3 : -1.7;
    }
    CHECK(std::abs(smooth_loss(offset, P).item()) < 1e-24);

    const auto Q = randn({2, 5, 9}, 21);
    double se = 0.0, sv = 0.0;
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t t = 0; t < 5; ++t) {
            for (std::size_t j = 0; j < 9; ++j) {
                const std::size_t i = (n * 5 + t) * 9 + j;
                se += std::pow(Q.data()[i] - P.data()[i], 2);
                if (t >= 1) {
                    const std::size_t k = i - 9;
                    const double dq = Q.data()[i] - Q.data()[k], dp = P.data()[i] - P.data()[k];
                    sv += (dq - dp) * (dq - dp);
                }
            }
        }
    }
    CHECK(pose_loss(Q, P).item() == doctest::Approx(se / 90.0).epsilon(1e-12));
    CHECK(smooth_loss(Q, P).item() == doctest::Approx(sv / 72.0).epsilon(1e-12));
    CHECK_THROWS_AS(smooth_loss(randn({2, 1, 9}, 22), randn({2, 1, 9}, 23)), ContractError);
    CHECK_THROWS_AS(pose_loss(randn({2, 5, 9}, 22), randn({2, 4, 9}, 23)), DimensionError);
}

TEST_CASE("total_loss weighting") {
    LossWeights w;
    const auto t = total_loss(Tensor::scalar(1.0), Tensor::scalar(0.01), Tensor::scalar(0.5), w);
    CHECK(t.item() == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(total_loss(Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), w).item() == 0.0);
}

TEST_CASE("gradient of the total equals the weighted component gradients") {
    Bgm2Pose m(tiny_config(), 9);
    const auto X = randn({2, 11, 8, 4}, 30), M = randn({2, 2, 8, 4}, 31), P = randn({2, 4, 9}, 32);
    LossWeights w;
    auto grads = [&](int which) {
        m.params().zero_grad();
        auto l = compute_losses(m, X, M, P, w);
        Tensor target = which == 0 ? l.total : which == 1 ? l.pose : which == 2 ? ad::scale(l.smooth, w.w_alpha)
                                                                                 : ad::scale(l.cpe, w.w_beta);
        target.backward();
        std::vector<double> g;
        for (const auto& e : m.params().entries()) {
            if (e.tensor.has_grad()) g.insert(g.end(), e.tensor.grad().begin(), e.tensor.grad().end());
            else g.insert(g.end(), e.tensor.numel(), 0.0);
        }
        return g;
    };
    const auto total = grads(0), a = grads(1), b = grads(2), c = grads(3);
    for (std::size_t i = 0; i < total.size(); ++i) CHECK(std::abs(total[i] - (a[i] + b[i] + c[i])) < 1e-9 * std::max(1.0, std::abs(total[i])));
}

TEST_CASE("gradcheck: full objective at tiny shapes") {
    Bgm2Pose m(tiny_config(), 10);
    auto X = randn({2, 11, 8, 4}, 40);
    auto M = randn({2, 2, 8, 4}, 41);
    const auto P = randn({2, 4, 9}, 42);
    X.set_requires_grad(true);
    M.set_requires_grad(true);
    std::vector<Tensor> inputs{X, M};
    for (const auto& e : m.params().entries()) inputs.push_back(e.tensor);
    const auto r = ad::gradcheck([&] { return compute_losses(m, X, M, P, LossWeights{}).total; }, inputs);
    CHECK(r.coordinates > 500);
    CHECK(r.max_rel_error < 1e-4);
}
