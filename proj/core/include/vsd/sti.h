#pragma once

#include <cstdint>
#include <string>

#include "vsd/nn.h"
#include "vsd/tensor.h"

namespace vsd::sti {

using tensor::Tensor;

// Learnable state of one spatial-temporal interaction layer: attention
// projections for the cross-frame branch, a per-channel temporal kernel for
// the detail branch, and a scalar gate logit mixing the two.
struct StiParams {
    Tensor wq, wk, wv, wo;  // d x d
    Tensor kernel;          // k x d, per-channel temporal taps
    Tensor gate_logit;      // scalar
    int gamma = 1;

    int frame_kernel() const { return static_cast<int>(kernel.dim(0)); }
    void validate(int64_t height, int64_t width) const;
};

struct StiOutput {
    Tensor features;
    double gate = 0.5;            // sigmoid(gate_logit) at evaluation time
    int64_t attention_tokens = 0;
    int64_t attention_entries = 0;  // materialized attention matrix size
};

// Identity-at-initialization: q/k/v are identity maps, the output projection
// and the temporal kernel are zero, the gate logit is zero (gate 0.5).
StiParams init_params(int64_t channels, int gamma, int frame_kernel);

// Pool spatially by gamma, attend over all frame tokens jointly, project,
// then restore the original resolution by nearest-neighbor upsampling.
Tensor semantic_interaction(const Tensor& h, const StiParams& p, int64_t* tokens_out = nullptr);

// Per-channel temporal convolution at each fixed spatial location.
Tensor detail_preserve(const Tensor& h, const StiParams& p);

// h + gate * semantic + (1 - gate) * detail, gate = sigmoid(gate_logit).
StiOutput forward(const Tensor& h, const StiParams& p);

// checkpoint naming: "<prefix>.wq" etc.
void store_params(nn::ParamStore& store, const std::string& prefix, const StiParams& p);
StiParams bind_params(const nn::VarMap& vars, const std::string& prefix, int gamma);

}  // namespace vsd::sti
