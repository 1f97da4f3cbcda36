#include "vsd/sti.h"

#include <cmath>
#include <stdexcept>

#include "vsd/ops.h"

namespace vsd::sti {

using namespace vsd::ops;

void StiParams::validate(int64_t height, int64_t width) const {
    if (gamma < 1) throw std::invalid_argument("sti: gamma must be positive");
    if (height % gamma != 0 || width % gamma != 0)
        throw std::invalid_argument("sti: gamma " + std::to_string(gamma) +
                                    " does not divide spatial size " + std::to_string(height) + "x" +
                                    std::to_string(width));
    if (frame_kernel() % 2 == 0) throw std::invalid_argument("sti: frame kernel must be odd");
}

StiParams init_params(int64_t channels, int gamma, int frame_kernel) {
    if (frame_kernel % 2 == 0) throw std::invalid_argument("sti: frame kernel must be odd");
    StiParams p;
    p.wq = nn::init_identity(channels);
    p.wk = nn::init_identity(channels);
    p.wv = nn::init_identity(channels);
    p.wo = Tensor::zeros({channels, channels});
    p.kernel = Tensor::zeros({frame_kernel, channels});
    p.gate_logit = Tensor::scalar(0.0);
    p.gamma = gamma;
    return p;
}

Tensor semantic_interaction(const Tensor& h, const StiParams& p, int64_t* tokens_out) {
    if (h.ndim() != 4) throw std::invalid_argument("sti: expected F,H,W,d input");
    p.validate(h.dim(1), h.dim(2));
    const int64_t frames = h.dim(0), height = h.dim(1), width = h.dim(2), channels = h.dim(3);
    const int64_t tokens = frames * (height / p.gamma) * (width / p.gamma);
    if (tokens_out) *tokens_out = tokens;

    Tensor pooled = avg_pool_hw(h, p.gamma);
    Tensor tok = reshape(pooled, {tokens, channels});
    Tensor q = matmul(tok, p.wq);
    Tensor k = matmul(tok, p.wk);
    Tensor v = matmul(tok, p.wv);
    Tensor mixed = matmul(attention(q, k, v), p.wo);
    Tensor folded = reshape(mixed, {frames, height / p.gamma, width / p.gamma, channels});
    return upsample_nearest_hw(folded, p.gamma);
}

Tensor detail_preserve(const Tensor& h, const StiParams& p) {
    if (h.ndim() != 4) throw std::invalid_argument("sti: expected F,H,W,d input");
    if (p.frame_kernel() % 2 == 0) throw std::invalid_argument("sti: frame kernel must be odd");
    return temporal_conv(h, p.kernel);
}

StiOutput forward(const Tensor& h, const StiParams& p) {
    StiOutput out;
    Tensor semantic = semantic_interaction(h, p, &out.attention_tokens);
    out.attention_entries = out.attention_tokens * out.attention_tokens;
    Tensor detail = detail_preserve(h, p);
    Tensor gate = sigmoid(p.gate_logit);
    Tensor inverse_gate = add_scalar(neg(gate), 1.0);
    out.gate = gate.data()[0];
    out.features = add(h, add(scale(semantic, gate), scale(detail, inverse_gate)));
    return out;
}

void store_params(nn::ParamStore& store, const std::string& prefix, const StiParams& p) {
    store[prefix + ".wq"] = p.wq;
    store[prefix + ".wk"] = p.wk;
    store[prefix + ".wv"] = p.wv;
    store[prefix + ".wo"] = p.wo;
    store[prefix + ".kernel"] = p.kernel;
    store[prefix + ".gate_logit"] = p.gate_logit;
}

StiParams bind_params(const nn::VarMap& vars, const std::string& prefix, int gamma) {
    StiParams p;
    p.wq = vars[prefix + ".wq"];
    p.wk = vars[prefix + ".wk"];
    p.wv = vars[prefix + ".wv"];
    p.wo = vars[prefix + ".wo"];
    p.kernel = vars[prefix + ".kernel"];
    p.gate_logit = vars[prefix + ".gate_logit"];
    p.gamma = gamma;
    return p;
}

}  // namespace vsd::sti
