#pragma once

#include <cstdint>
#include <vector>

#include "vsd/tensor.h"

namespace vsd::ops {

using tensor::Shape;
using tensor::Tensor;

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor scale(const Tensor& a, const Tensor& s);  // s is a one-element tensor
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor detach(const Tensor& a);

// ---- 2-D linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor take_rows(const Tensor& a, const std::vector<int64_t>& rows);
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);

// Mean negative log-likelihood of targets under row-wise softmax(logits).
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int64_t>& targets);

// Rows scaled to unit L2 norm along the last axis (smoothed by eps inside the
// square root).
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);
// x / sqrt(mean(x^2) + eps) along the last axis.
Tensor rms_norm(const Tensor& a, double eps = 1e-6);

// Bias vector added along the last axis (the only broadcast this engine has
// besides scalars).
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);
// Mean over all axes except the last; returns 1 x C.
Tensor global_mean_channels(const Tensor& a);

// softmax(Q K^T / sqrt(d)) V with Q: Lq x d, K: Lk x d, V: Lk x dv.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

// ---- clip-shaped (F x H x W x C) ----

// Per-channel mixing of the same spatial location across k neighboring
// frames; frame padding is edge replication. kernel is (k) shared across
// channels or (k, C) per channel; k must be odd.
Tensor temporal_conv(const Tensor& h, const Tensor& kernel);

// Spatial convolution applied per frame, zero "same" padding.
// x: F x H x W x Ci, w: Co x kh x kw x Ci, bias: (Co) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor avg_pool_hw(const Tensor& x, int factor);
Tensor upsample_nearest_hw(const Tensor& x, int factor);

// F x H x W x C -> (F/pf * H/ph * W/pw) x (pf*ph*pw*C) patch rows and back.
Tensor patchify3d(const Tensor& x, int pf, int ph, int pw);
Tensor unpatchify3d(const Tensor& rows, const Shape& fhwc, int pf, int ph, int pw);

// Nearest codebook entry per row (ties -> lowest index), straight-through
// gradient to `rows`; the codebook receives no gradient through this op.
Tensor quantize_st(const Tensor& rows, const Tensor& codebook, std::vector<int64_t>* indices_out);

}  // namespace vsd::ops

namespace vsd::tensor {
inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return ops::scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return ops::scale(a, s); }
}  // namespace vsd::tensor
