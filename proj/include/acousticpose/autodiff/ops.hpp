#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "acousticpose/autodiff/tensor.hpp"

namespace acousticpose::ad {

// Elementwise with numpy-style broadcasting (shapes aligned from the right).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// [..., m, k] x [..., k, n]. Batch dims of b must equal a's, or b is 2-D and shared.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& x, std::size_t d0, std::size_t d1);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor softmax(const Tensor& x);      // over the last axis
Tensor log_softmax(const Tensor& x);  // over the last axis

// x / max(||x||, eps) over the last axis.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Normalises over `axis` with population variance; gamma/beta have shape [size(axis)] and may be undefined.
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct Conv2dOptions {
    std::size_t stride_h = 1, stride_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
};

// x [N, C, H, W], w [O, C, kh, kw], bias [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dOptions& opt = {});
// x [N, C, L], w [O, C, k].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride = 1, std::size_t pad = 0);
// x [N, C, L], w [C, O, k]; output length (L - 1) * stride + k.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride);

// softmax(q k^T / sqrt(d)) v over the last two axes; also returns the weights.
std::pair<Tensor, Tensor> scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Mean of squared differences over every element.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace acousticpose::ad
