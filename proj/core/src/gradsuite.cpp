#include "vsd/gradsuite.h"

#include <functional>

#include "vsd/denoiser.h"
#include "vsd/gradcheck.h"
#include "vsd/nn.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/sti.h"
#include "vsd/vq.h"

namespace vsd::gradsuite {

namespace {

using gradcheck::grad_check;
using nn::VarMap;
using tensor::Tensor;
using namespace vsd::ops;

Tensor random_tensor(tensor::Shape shape, rng::Prng& prng, double scale = 1.0) {
    std::vector<double> data(static_cast<size_t>(tensor::shape_numel(shape)));
    for (auto& v : data) v = prng.normal() * scale;
    return Tensor::from_data(std::move(shape), std::move(data));
}

void randomize(nn::ParamStore& params, uint64_t seed, double scale = 0.2) {
    for (auto& [name, t] : params) {
        rng::Prng prng(rng::mix(seed, rng::hash_str(name)));
        std::vector<double> data(static_cast<size_t>(t.numel()));
        for (auto& v : data) v = prng.normal() * scale;
        t = Tensor::from_data(t.shape(), std::move(data));
    }
}

void check(std::vector<Entry>& out, const std::string& name,
           const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5,
           int64_t cap = 0) {
    const gradcheck::Result r = grad_check(f, x, eps, cap, rng::hash_str(name));
    out.push_back(Entry{name, r.max_rel_error, r.coords_checked});
}

// gradient w.r.t. one named parameter, everything else held constant
void check_param(std::vector<Entry>& out, const std::string& label, const nn::ParamStore& params,
                 const std::string& pname, const std::function<Tensor(const VarMap&)>& loss_of,
                 int64_t cap = 0) {
    auto f = [&params, &pname, &loss_of](const Tensor& x) {
        VarMap vars(params, false);
        vars.set(pname, x);
        return loss_of(vars);
    };
    check(out, label + "." + pname, f, params.at(pname), 1e-5, cap);
}

void primitive_checks(std::vector<Entry>& out, uint64_t seed) {
    rng::Prng prng(rng::mix(seed, 1));

    {  // softmax chain
        const Tensor w = random_tensor({6, 5}, prng);
        check(out, "softmax.mix",
              [&](const Tensor& x) { return sum(mul(softmax_rows(x), w)); },
              random_tensor({6, 5}, prng));
        check(out, "softmax.cross_entropy",
              [&](const Tensor& x) {
                  return cross_entropy_rows(x, {0, 3, 2, 4, 1, 0});
              },
              random_tensor({6, 5}, prng));
    }
    {  // attention w.r.t each operand
        const Tensor q = random_tensor({5, 4}, prng);
        const Tensor k = random_tensor({5, 4}, prng);
        const Tensor v = random_tensor({5, 4}, prng);
        check(out, "attention.q",
              [&](const Tensor& x) { return mean(mul(attention(x, k, v), attention(x, k, v))); }, q);
        check(out, "attention.k",
              [&](const Tensor& x) { return mean(mul(attention(q, x, v), attention(q, x, v))); }, k);
        check(out, "attention.v",
              [&](const Tensor& x) { return mean(mul(attention(q, k, x), attention(q, k, x))); }, v);
    }
    {  // temporal conv, shared and per-channel kernels
        const Tensor h = random_tensor({3, 4, 4, 2}, prng);
        const Tensor shared = random_tensor({3}, prng);
        const Tensor per_channel = random_tensor({3, 2}, prng);
        auto sq = [](const Tensor& t) { return mean(mul(t, t)); };
        check(out, "temporal_conv.shared.input",
              [&](const Tensor& x) { return sq(temporal_conv(x, shared)); }, h);
        check(out, "temporal_conv.shared.kernel",
              [&](const Tensor& x) { return sq(temporal_conv(h, x)); }, shared);
        check(out, "temporal_conv.per_channel.input",
              [&](const Tensor& x) { return sq(temporal_conv(x, per_channel)); }, h);
        check(out, "temporal_conv.per_channel.kernel",
              [&](const Tensor& x) { return sq(temporal_conv(h, x)); }, per_channel);
    }
    {  // spatial conv
        const Tensor x = random_tensor({2, 4, 4, 3}, prng);
        const Tensor w = random_tensor({4, 3, 3, 3}, prng, 0.4);
        const Tensor b = random_tensor({4}, prng, 0.2);
        auto sq = [](const Tensor& t) { return mean(mul(t, t)); };
        check(out, "conv2d.input", [&](const Tensor& p) { return sq(conv2d(p, w, b)); }, x);
        check(out, "conv2d.weight", [&](const Tensor& p) { return sq(conv2d(x, p, b)); }, w);
        check(out, "conv2d.bias", [&](const Tensor& p) { return sq(conv2d(x, w, p)); }, b);
    }
    {  // normalization and resampling
        auto sq = [](const Tensor& t) { return mean(mul(t, t)); };
        const Tensor w = random_tensor({6, 4}, prng);
        check(out, "rms_norm",
              [&](const Tensor& x) { return sum(mul(rms_norm(x), w)); }, random_tensor({6, 4}, prng));
        check(out, "l2_normalize",
              [&](const Tensor& x) { return sum(mul(l2_normalize_rows(x), w)); },
              random_tensor({6, 4}, prng));
        check(out, "avg_pool",
              [&](const Tensor& x) { return sq(avg_pool_hw(x, 2)); }, random_tensor({2, 4, 4, 3}, prng));
        check(out, "upsample",
              [&](const Tensor& x) { return sq(upsample_nearest_hw(x, 2)); },
              random_tensor({2, 4, 4, 3}, prng));
    }
}

void sti_checks(std::vector<Entry>& out, uint64_t seed) {
    rng::Prng prng(rng::mix(seed, 2));
    const Tensor h = random_tensor({3, 8, 8, 4}, prng);
    nn::ParamStore params;
    sti::store_params(params, "sti", sti::init_params(4, 2, 3));
    randomize(params, rng::mix(seed, 3));

    auto loss_of = [&h](const VarMap& vars) {
        const sti::StiParams p = sti::bind_params(vars, "sti", 2);
        const Tensor f = sti::forward(h, p).features;
        return mean(mul(f, f));
    };
    for (const auto& [name, t] : params) check_param(out, "sti", params, name, loss_of);

    auto f_input = [&params](const Tensor& x) {
        VarMap vars(params, false);
        const sti::StiParams p = sti::bind_params(vars, "sti", 2);
        const Tensor f = sti::forward(x, p).features;
        return mean(mul(f, f));
    };
    check(out, "sti.input", f_input, h);
}

void denoiser_checks(std::vector<Entry>& out, uint64_t seed) {
    denoiser::DenoiserConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.temporal = denoiser::TemporalKind::sti;
    cfg.gamma = 2;
    cfg.frame_kernel = 3;
    cfg.text_dim = 8;
    cfg.vocab_size = 64;
    cfg.time_dim = 8;
    cfg.frames = 2;
    cfg.height = 8;
    cfg.width = 8;

    nn::ParamStore params = denoiser::init_params(cfg, seed);
    randomize(params, rng::mix(seed, 4));
    rng::Prng prng(rng::mix(seed, 5));
    const Tensor x_t = random_tensor({cfg.frames, cfg.height, cfg.width, cfg.channels}, prng);
    const std::string caption = "cartoon\ta red circle sliding across";
    const int t = 500;

    auto loss_of = [&](const VarMap& vars) {
        const Tensor eps_hat = denoiser::forward(cfg, vars, x_t, t, caption);
        return mean(mul(eps_hat, eps_hat));
    };
    for (const auto& [name, tnsr] : params) {
        const int64_t cap = tnsr.numel() > 256 ? 96 : 0;  // embed tables
        check_param(out, "denoiser", params, name, loss_of, cap);
    }
    auto f_input = [&](const Tensor& x) {
        VarMap vars(params, false);
        const Tensor eps_hat = denoiser::forward(cfg, vars, x, t, caption);
        return mean(mul(eps_hat, eps_hat));
    };
    check(out, "denoiser.input", f_input, x_t);
}

void vq_prior_checks(std::vector<Entry>& out, uint64_t seed) {
    vq::VqConfig cfg;
    cfg.codebook_size = 8;
    cfg.code_dim = 4;
    cfg.patch = 2;
    cfg.hidden = 8;
    cfg.frames = 2;
    cfg.height = 8;
    cfg.width = 8;
    cfg.prior_dim = 8;
    cfg.prior_vocab = 64;

    vq::VqModel model(cfg, seed);
    randomize(model.params(), rng::mix(seed, 6));

    rng::Prng prng(rng::mix(seed, 7));
    vq::TokenGrid z;
    z.frames = cfg.grid_frames();
    z.height = cfg.grid_height();
    z.width = cfg.grid_width();
    z.mask_symbol = cfg.codebook_size;
    z.codes.resize(static_cast<size_t>(cfg.cells()));
    z.mask.assign(z.codes.size(), 0);
    for (auto& c : z.codes) c = static_cast<int64_t>(prng.below(static_cast<uint64_t>(cfg.codebook_size)));
    const vq::TokenGrid z_bar = vq::mask_corrupt(z, 0.5, rng::mix(seed, 8));
    const std::string caption = "real\ta blue star circling around";

    const nn::ParamStore& params = model.params();
    auto loss_of = [&](const VarMap& vars) {
        auto logits_fn = [&](const vq::TokenGrid& grid, const std::string& y) {
            return model.prior_logits(vars, grid, y);
        };
        return vq::prior_loss(logits_fn, z, z_bar, caption);
    };
    for (const auto& [name, tnsr] : params) {
        if (name.rfind("prior.", 0) != 0) continue;  // only the prior path is differentiable here
        const int64_t cap = tnsr.numel() > 256 ? 96 : 0;
        check_param(out, "vq", params, name, loss_of, cap);
    }
}

}  // namespace

std::vector<Entry> run_suite(uint64_t seed) {
    std::vector<Entry> entries;
    primitive_checks(entries, seed);
    sti_checks(entries, seed);
    denoiser_checks(entries, seed);
    vq_prior_checks(entries, seed);
    return entries;
}

double worst_error(const std::vector<Entry>& entries) {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
    return worst;
}

}  // namespace vsd::gradsuite
