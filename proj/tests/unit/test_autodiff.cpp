#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "acousticpose/autodiff/gradcheck.hpp"
#include "acousticpose/autodiff/ops.hpp"
#include "acousticpose/autodiff/params.hpp"
#include "acousticpose/common/error.hpp"

using namespace acousticpose;
using namespace acousticpose::ad;

namespace {

Tensor randn(Shape shape, unsigned seed, bool grad = true, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = g(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// Random fixed weights turn any tensor into a scalar with a non-trivial gradient.
Tensor probe(const Tensor& y, unsigned seed = 99) {
    return sum(mul(y, randn(y.shape(), seed, false)));
}

double check(const std::function<Tensor()>& f, std::vector<Tensor> in) { return gradcheck(f, std::move(in)).max_rel_error; }

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("ops: basic forward fixtures") {
    const auto s = softmax(Tensor::from({3}, {0, 0, 0}));
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

    const auto A = randn({3, 3}, 1, false);
    const auto I = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto IA = matmul(I, A);
    for (std::size_t i = 0; i < 9; ++i) CHECK(IA.data()[i] == A.data()[i]);

    const auto x = randn({2, 3, 7}, 2, false);
    const auto ident = Tensor::from({3, 3, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto y = conv1d(x, ident, Tensor());
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

    const auto b = add(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), Tensor::from({3}, {10, 20, 30}));
    CHECK(std::vector<double>(b.data().begin(), b.data().end()) == std::vector<double>{11, 22, 33, 14, 25, 36});
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
    CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
}

TEST_CASE("backward: simple derivatives and contracts") {
    auto x = Tensor::scalar(3.0, true);
    mul(x, x).backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    CHECK_THROWS_AS(Tensor::zeros({2}, true).backward(), ContractError);

    // Softmax is shift invariant, so its input gradient sums to zero in each row.
    auto z = randn({4, 5}, 3);
    sum(mul(softmax(z), randn({4, 5}, 4, false))).backward();
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i) s += z.grad()[r * 5 + i];
        CHECK(std::abs(s) < 1e-12);
    }
}

TEST_CASE("backward: linearity over summed losses") {
    auto w = randn({3, 4}, 5);
    auto x = randn({2, 3}, 6, false);
    auto f1 = [&] { return sum(relu(matmul(x, w))); };
    auto f2 = [&] { return mean(mul(matmul(x, w), matmul(x, w))); };
    w.zero_grad();
    add(f1(), f2()).backward();
    const std::vector<double> joint(w.grad().begin(), w.grad().end());
    w.zero_grad();
    f1().backward();
    f2().backward();
    for (std::size_t i = 0; i < joint.size(); ++i) CHECK(std::abs(joint[i] - w.grad()[i]) < 1e-12);
}

TEST_CASE("backward: repeated runs are bit identical") {
    auto run = [] {
        auto w = randn({2, 3, 3, 3}, 7);
        auto x = randn({2, 3, 5, 4}, 8, false);
        sum(gelu(conv2d(x, w, Tensor(), {1, 1, 1, 1}))).backward();
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    CHECK(run() == run());
}

TEST_CASE("gradcheck: elementwise and reductions") {
    auto a = randn({3, 4}, 10), b = randn({3, 4}, 11), row = randn({4}, 12);
    CHECK(check([&] { return probe(add(a, b)); }, {a, b}) < kTol);
    CHECK(check([&] { return probe(sub(a, row)); }, {a, row}) < kTol);
    CHECK(check([&] { return probe(mul(a, row)); }, {a, row}) < kTol);
    CHECK(check([&] { return probe(scale(a, -2.5)); }, {a}) < kTol);
    CHECK(check([&] { return probe(add_scalar(a, 0.3)); }, {a}) < kTol);
    CHECK(check([&] { return probe(gelu(a)); }, {a}) < kTol);
    CHECK(check([&] { return probe(exp(a)); }, {a}) < kTol);
    auto pos = Tensor::from({5}, {0.5, 1.0, 2.0, 3.0, 0.7}, true);
    CHECK(check([&] { return probe(log(pos)); }, {pos}) < kTol);
    CHECK(check([&] { return mean(mul(a, a)); }, {a}) < kTol);
    CHECK(check([&] { return mse(a, b); }, {a, b}) < kTol);
    auto col = randn({3, 1}, 13);
    CHECK(check([&] { return probe(mul(a, col)); }, {a, col}) < kTol);
}

TEST_CASE("gradcheck: relu away from the kink") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::vector<double> v(20);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2 ? -1.0 : 1.0) * (u(rng) + 0.05);
    auto x = Tensor::from({4, 5}, v, true);
    CHECK(check([&] { return probe(relu(x)); }, {x}) < 1e-6);
}

TEST_CASE("gradcheck: quadratic form") {
    auto A = randn({4, 4}, 15, false);
    auto x = randn({4, 1}, 16);
    CHECK(check([&] { return sum(mul(x, matmul(A, x))); }, {x}) < 1e-8);
}

TEST_CASE("gradcheck: shape ops") {
    auto x = randn({2, 3, 4}, 20);
    auto y = randn({2, 2, 4}, 21);
    CHECK(check([&] { return probe(reshape(x, {6, 4})); }, {x}) < kTol);
    CHECK(check([&] { return probe(permute(x, {2, 0, 1})); }, {x}) < kTol);
    CHECK(check([&] { return probe(transpose(x, 1, 2)); }, {x}) < kTol);
    CHECK(check([&] { return probe(concat({x, y}, 1)); }, {x, y}) < kTol);
    CHECK(check([&] { return probe(slice(x, 2, 1, 2)); }, {x}) < kTol);
    CHECK(check([&] { return probe(slice(x, 0, 1, 1)); }, {x}) < kTol);
}

TEST_CASE("gradcheck: matmul, softmax, normalisation, attention") {
    auto a = randn({2, 3, 4}, 30), b = randn({2, 4, 5}, 31), w = randn({4, 5}, 32);
    CHECK(check([&] { return probe(matmul(a, b)); }, {a, b}) < kTol);
    CHECK(check([&] { return probe(matmul(a, w)); }, {a, w}) < kTol);
    CHECK(check([&] { return probe(softmax(a)); }, {a}) < kTol);
    CHECK(check([&] { return probe(log_softmax(a)); }, {a}) < kTol);
    CHECK(check([&] { return probe(l2_normalize(a)); }, {a}) < kTol);

    auto x = randn({2, 3, 4, 5}, 33), gamma = randn({3}, 34), beta = randn({3}, 35);
    CHECK(check([&] { return probe(layer_norm(x, 1, gamma, beta)); }, {x, gamma, beta}) < kTol);
    auto g4 = randn({5}, 36);
    CHECK(check([&] { return probe(layer_norm(x, 3, g4, Tensor())); }, {x, g4}) < kTol);

    auto q = randn({2, 3, 4}, 37), k = randn({2, 5, 4}, 38), v = randn({2, 5, 3}, 39);
    CHECK(check([&] { return probe(scaled_dot_product_attention(q, k, v).first); }, {q, k, v}) < kTol);
}

TEST_CASE("gradcheck: convolutions") {
    auto x = randn({2, 3, 6, 5}, 40), w = randn({4, 3, 3, 3}, 41), bias = randn({4}, 42);
    CHECK(check([&] { return probe(conv2d(x, w, bias, {1, 1, 1, 1})); }, {x, w, bias}) < kTol);
    auto w2 = randn({2, 3, 5, 3}, 43);
    CHECK(check([&] { return probe(conv2d(x, w2, Tensor(), {4, 1, 2, 1})); }, {x, w2}) < kTol);

    auto x1 = randn({2, 3, 7}, 44), w1 = randn({5, 3, 3}, 45), b1 = randn({5}, 46);
    CHECK(check([&] { return probe(conv1d(x1, w1, b1, 2, 1)); }, {x1, w1, b1}) < kTol);
    auto wt = randn({3, 4, 2}, 47), bt = randn({4}, 48);
    CHECK(check([&] { return probe(conv_transpose1d(x1, wt, bt, 2)); }, {x1, wt, bt}) < kTol);
    auto wt3 = randn({3, 2, 3}, 49);
    CHECK(check([&] { return probe(conv_transpose1d(x1, wt3, Tensor(), 2)); }, {x1, wt3}) < kTol);
}

TEST_CASE("conv2d matches direct summation") {
    const auto x = randn({2, 3, 6, 5}, 50, false), w = randn({4, 3, 3, 2}, 51, false), b = randn({4}, 52, false);
    const Conv2dOptions opt{2, 1, 1, 0};
    const auto y = conv2d(x, w, b, opt);
    const std::size_t Ho = (6 + 2 - 3) / 2 + 1, Wo = (5 - 2) / 1 + 1;
    REQUIRE(y.shape() == Shape{2, 4, Ho, Wo});
    auto X = [&](std::size_t n, std::size_t c, long h, long ww) {
        if (h < 0 || ww < 0 || h >= 6 || ww >= 5) return 0.0;
        return x.data()[((n * 3 + c) * 6 + static_cast<std::size_t>(h)) * 5 + static_cast<std::size_t>(ww)];
    };
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t o = 0; o < 4; ++o) {
            for (std::size_t i = 0; i < Ho; ++i) {
                for (std::size_t j = 0; j < Wo; ++j) {
                    double s = b.data()[o];
                    for (std::size_t c = 0; c < 3; ++c) {
                        for (std::size_t p = 0; p < 3; ++p) {
                            for (std::size_t q = 0; q < 2; ++q) {
                                s += w.data()[((o * 3 + c) * 3 + p) * 2 + q] *
                                     X(n, c, static_cast<long>(i * 2 + p) - 1, static_cast<long>(j + q));
                            }
                        }
                    }
                    CHECK(std::abs(y.data()[((n * 4 + o) * Ho + i) * Wo + j] - s) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("conv_transpose1d matches scatter definition and inverts stride-k pooling layout") {
    const auto x = randn({1, 2, 4}, 60, false), w = randn({2, 3, 2}, 61, false);
    const auto y = conv_transpose1d(x, w, Tensor(), 2);
    REQUIRE(y.shape() == Shape{1, 3, 8});
    std::vector<double> expect(24, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t o = 0; o < 3; ++o) {
            for (std::size_t l = 0; l < 4; ++l) {
                for (std::size_t j = 0; j < 2; ++j) expect[o * 8 + l * 2 + j] += x.data()[c * 4 + l] * w.data()[(c * 3 + o) * 2 + j];
            }
        }
    }
    for (std::size_t i = 0; i < 24; ++i) CHECK(std::abs(y.data()[i] - expect[i]) < 1e-12);
}

TEST_CASE("l2_normalize and layer_norm invariants") {
    const auto z = l2_normalize(randn({5, 7}, 70, false));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 7; ++i) s += z.data()[r * 7 + i] * z.data()[r * 7 + i];
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto zn = l2_normalize(Tensor::zeros({2, 3}));
    for (double v : zn.data()) CHECK(v == 0.0);

    const auto ln = layer_norm(randn({2, 4, 3}, 71, false, 5.0), 1, Tensor(), Tensor());
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t t = 0; t < 3; ++t) {
            double m = 0.0, v = 0.0;
            for (std::size_t c = 0; c < 4; ++c) m += ln.data()[(n * 4 + c) * 3 + t];
            m /= 4.0;
            for (std::size_t c = 0; c < 4; ++c) v += std::pow(ln.data()[(n * 4 + c) * 3 + t] - m, 2);
            CHECK(std::abs(m) < 1e-12);
            CHECK(v / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
        }
    }
}

TEST_CASE("no-grad mode builds no graph") {
    auto w = randn({3}, 80);
    NoGradGuard guard;
    const auto y = mul(w, w);
    CHECK(!y.requires_grad());
    CHECK(y.node()->inputs.empty());
}

TEST_CASE("params: registry, snapshot and checkpoint round trip") {
    ParamStore store;
    store.add("a.weight", randn({2, 3}, 90, false));
    store.add("a.bias", randn({3}, 91, false));
    CHECK(store.get("a.weight").requires_grad());
    CHECK(store.total_numel() == 9);
    CHECK_THROWS_AS(store.add("a.bias", Tensor::zeros({3})), ContractError);

    const auto dir = std::filesystem::temp_directory_path() / "acousticpose_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto snap = store.snapshot();
    save_tensors(dir / "m.bin", snap, DType::F64, {{"epoch", 3}});
    save_tensors(dir / "m32.bin", snap, DType::F32);

    ParamStore other;
    other.add("a.weight", Tensor::zeros({2, 3}));
    other.add("a.bias", Tensor::zeros({3}));
    const auto file = load_tensors(dir / "m.bin");
    CHECK(file.meta["epoch"] == 3);
    other.restore(file.arrays);
    for (std::size_t i = 0; i < 6; ++i) CHECK(other.get("a.weight").data()[i] == store.get("a.weight").data()[i]);

    const auto f32 = load_tensors(dir / "m32.bin");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(f32.find("a.bias")->values[i] == static_cast<double>(static_cast<float>(store.get("a.bias").data()[i])));
    }

    ParamStore wrong;
    wrong.add("a.weight", Tensor::zeros({3, 2}));
    wrong.add("a.bias", Tensor::zeros({3}));
    CHECK_THROWS_AS(wrong.restore(file.arrays), CheckpointError);
    ParamStore missing;
    missing.add("a.weight", Tensor::zeros({2, 3}));
    missing.add("b", Tensor::zeros({1}));
    CHECK_THROWS_AS(missing.restore(file.arrays), CheckpointError);
    CHECK_THROWS_AS(load_tensors(dir / "absent.bin"), CheckpointError);
    std::filesystem::remove_all(dir);
}
