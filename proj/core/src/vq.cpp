#include "vsd/vq.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "vsd/denoiser.h"  // tokenize
#include "vsd/ops.h"
#include "vsd/rng.h"

namespace vsd::vq {

using namespace vsd::ops;
using nn::VarMap;

void VqConfig::validate() const {
    if (codebook_size < 2) throw std::invalid_argument("vq: codebook needs at least 2 entries");
    if (patch < 1) throw std::invalid_argument("vq: bad patch size");
    if (frames % patch != 0 || height % patch != 0 || width % patch != 0)
        throw std::invalid_argument("vq: patch does not tile the clip");
}

std::vector<int64_t> TokenGrid::masked_positions() const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(static_cast<int64_t>(i));
    return out;
}

namespace {

int64_t patch_dim(const VqConfig& cfg) {
    return static_cast<int64_t>(cfg.patch) * cfg.patch * cfg.patch * cfg.channels;
}

nn::ParamStore make_params(const VqConfig& cfg, uint64_t seed) {
    cfg.validate();
    nn::ParamStore p;
    const int64_t pd = patch_dim(cfg);
    p["enc.w1"] = nn::init_fan_in({pd, cfg.hidden}, pd, seed, "enc.w1");
    p["enc.b1"] = Tensor::zeros({cfg.hidden});
    p["enc.w2"] = nn::init_fan_in({cfg.hidden, cfg.code_dim}, cfg.hidden, seed, "enc.w2");
    p["enc.b2"] = Tensor::zeros({cfg.code_dim});
    p["codebook"] = nn::init_normal({cfg.codebook_size, cfg.code_dim}, 0.5, seed, "codebook");
    p["dec.w1"] = nn::init_fan_in({cfg.code_dim, cfg.hidden}, cfg.code_dim, seed, "dec.w1");
    p["dec.b1"] = Tensor::zeros({cfg.hidden});
    p["dec.w2"] = nn::init_fan_in({cfg.hidden, pd}, cfg.hidden, seed, "dec.w2");
    p["dec.b2"] = Tensor::zeros({pd});

    const int64_t d = cfg.prior_dim;
    p["prior.text_embed"] = nn::init_normal({cfg.prior_vocab, d}, 0.02, seed, "prior.text_embed");
    p["prior.code_embed"] =
        nn::init_normal({cfg.codebook_size + 1, d}, 0.02, seed, "prior.code_embed");
    p["prior.pos"] = nn::init_normal({denoiser::kMaxCaptionTokens + cfg.cells(), d}, 0.02, seed,
                                     "prior.pos");
    p["prior.attn.wq"] = nn::init_fan_in({d, d}, d, seed, "prior.attn.wq");
    p["prior.attn.wk"] = nn::init_fan_in({d, d}, d, seed, "prior.attn.wk");
    p["prior.attn.wv"] = nn::init_fan_in({d, d}, d, seed, "prior.attn.wv");
    p["prior.attn.wo"] = nn::init_fan_in({d, d}, d, seed, "prior.attn.wo");
    p["prior.mlp.w1"] = nn::init_fan_in({d, 2 * d}, d, seed, "prior.mlp.w1");
    p["prior.mlp.b1"] = Tensor::zeros({2 * d});
    p["prior.mlp.w2"] = nn::init_fan_in({2 * d, d}, 2 * d, seed, "prior.mlp.w2");
    p["prior.mlp.b2"] = Tensor::zeros({d});
    p["prior.head.w"] = nn::init_fan_in({d, cfg.codebook_size}, d, seed, "prior.head.w");
    p["prior.head.b"] = Tensor::zeros({cfg.codebook_size});
    return p;
}

struct EncodeResult {
    Tensor features;   // cells x code_dim
    Tensor quantized;  // cells x code_dim (straight-through)
    std::vector<int64_t> indices;
};

EncodeResult encode_features(const VqConfig& cfg, const VarMap& vars, const Tensor& x) {
    if (x.ndim() != 4 || x.dim(0) != cfg.frames || x.dim(1) != cfg.height ||
        x.dim(2) != cfg.width || x.dim(3) != cfg.channels)
        throw std::invalid_argument("vq: clip shape " + tensor::shape_str(x.shape()) +
                                    " does not match config");
    EncodeResult r;
    Tensor rows = patchify3d(x, cfg.patch, cfg.patch, cfg.patch);
    Tensor hidden = silu(nn::linear(rows, vars["enc.w1"], vars["enc.b1"]));
    r.features = nn::linear(hidden, vars["enc.w2"], vars["enc.b2"]);
    r.quantized = quantize_st(r.features, vars["codebook"], &r.indices);
    return r;
}

Tensor decode_rows(const VqConfig& cfg, const VarMap& vars, const Tensor& quantized) {
    Tensor hidden = silu(nn::linear(quantized, vars["dec.w1"], vars["dec.b1"]));
    Tensor rows = nn::linear(hidden, vars["dec.w2"], vars["dec.b2"]);
    return unpatchify3d(rows, {cfg.frames, cfg.height, cfg.width, cfg.channels}, cfg.patch,
                        cfg.patch, cfg.patch);
}

}  // namespace

VqModel::VqModel(VqConfig cfg, uint64_t seed)
    : cfg_(cfg), params_(make_params(cfg, seed)),
      usage_(static_cast<size_t>(cfg.codebook_size), 0) {}

VqModel::VqModel(VqConfig cfg, nn::ParamStore params)
    : cfg_(cfg), params_(std::move(params)), usage_(static_cast<size_t>(cfg.codebook_size), 0) {
    cfg_.validate();
}

TokenGrid VqModel::encode(const Tensor& x) {
    const VarMap vars(params_, false);
    const EncodeResult enc = encode_features(cfg_, vars, x);
    TokenGrid grid;
    grid.frames = cfg_.grid_frames();
    grid.height = cfg_.grid_height();
    grid.width = cfg_.grid_width();
    grid.codes = enc.indices;
    grid.mask.assign(enc.indices.size(), 0);
    grid.mask_symbol = cfg_.codebook_size;
    for (int64_t code : enc.indices) ++usage_[static_cast<size_t>(code)];
    return grid;
}

Tensor VqModel::decode(const TokenGrid& grid) const {
    if (grid.cells() != cfg_.cells() || static_cast<int64_t>(grid.codes.size()) != cfg_.cells())
        throw std::invalid_argument("vq: token grid does not match config");
    for (size_t i = 0; i < grid.codes.size(); ++i) {
        if (grid.mask[i] || grid.codes[i] < 0 || grid.codes[i] >= cfg_.codebook_size)
            throw std::invalid_argument("vq: cannot decode a masked or out-of-range code");
    }
    const VarMap vars(params_, false);
    Tensor quantized = take_rows(vars["codebook"], grid.codes);
    return decode_rows(cfg_, vars, quantized);
}

double VqModel::round_trip_error(const Tensor& x) {
    const TokenGrid grid = encode(x);
    return ops::mse(decode(grid), x).value();
}

Tensor VqModel::train_loss(const VarMap& vars, const Tensor& x) const {
    const EncodeResult enc = encode_features(cfg_, vars, x);
    Tensor recon = decode_rows(cfg_, vars, enc.quantized);
    Tensor recon_loss = ops::mse(recon, x);
    Tensor chosen = take_rows(vars["codebook"], enc.indices);
    Tensor codebook_loss = ops::mse(chosen, detach(enc.features));
    Tensor commitment = ops::mse(enc.features, detach(chosen));
    return add(recon_loss, add(codebook_loss, scale(commitment, 0.25)));
}

Tensor VqModel::prior_logits(const VarMap& vars, const TokenGrid& corrupted,
                             const std::string& caption) const {
    if (corrupted.cells() != cfg_.cells())
        throw std::invalid_argument("vq: token grid does not match config");
    for (int64_t code : corrupted.codes)
        if (code < 0 || code > cfg_.codebook_size)
            throw std::invalid_argument("vq: code outside [0, K] in prior input");

    const std::vector<int64_t> text_ids = denoiser::tokenize(caption, cfg_.prior_vocab);
    Tensor text = embedding_lookup(vars["prior.text_embed"], text_ids);
    Tensor codes = embedding_lookup(vars["prior.code_embed"], corrupted.codes);
    Tensor seq = concat_rows(text, codes);

    const int64_t seq_len = seq.dim(0);
    std::vector<int64_t> positions(static_cast<size_t>(seq_len));
    std::iota(positions.begin(), positions.end(), 0);
    seq = add(seq, take_rows(vars["prior.pos"], positions));

    Tensor normed = rms_norm(seq);
    Tensor q = matmul(normed, vars["prior.attn.wq"]);
    Tensor k = matmul(normed, vars["prior.attn.wk"]);
    Tensor v = matmul(normed, vars["prior.attn.wv"]);
    seq = add(seq, matmul(attention(q, k, v), vars["prior.attn.wo"]));
    Tensor mlp_in = rms_norm(seq);
    Tensor mlp = nn::linear(silu(nn::linear(mlp_in, vars["prior.mlp.w1"], vars["prior.mlp.b1"])),
                            vars["prior.mlp.w2"], vars["prior.mlp.b2"]);
    seq = add(seq, mlp);

    std::vector<int64_t> cell_rows(static_cast<size_t>(cfg_.cells()));
    std::iota(cell_rows.begin(), cell_rows.end(), static_cast<int64_t>(text_ids.size()));
    Tensor cells = take_rows(seq, cell_rows);
    return nn::linear(rms_norm(cells), vars["prior.head.w"], vars["prior.head.b"]);
}

void VqModel::reset_usage() { usage_.assign(static_cast<size_t>(cfg_.codebook_size), 0); }

TokenGrid mask_corrupt(const TokenGrid& grid, double rate, uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("mask_corrupt: rate outside [0,1]");
    TokenGrid out = grid;
    const int64_t cells = grid.cells();
    const int64_t count = static_cast<int64_t>(std::floor(rate * static_cast<double>(cells)));
    std::vector<int64_t> positions(static_cast<size_t>(cells));
    std::iota(positions.begin(), positions.end(), 0);
    rng::Prng prng(rng::mix(seed, 0x6d61736bULL));
    prng.shuffle(positions);
    for (int64_t i = 0; i < count; ++i) {
        const auto p = static_cast<size_t>(positions[static_cast<size_t>(i)]);
        out.codes[p] = grid.mask_symbol;
        out.mask[p] = 1;
    }
    return out;
}

Tensor prior_loss(const PriorLogitsFn& logits_fn, const TokenGrid& z, const TokenGrid& z_bar,
                  const std::string& caption) {
    if (z.cells() != z_bar.cells())
        throw std::invalid_argument("prior_loss: grid shape mismatch");
    const std::vector<int64_t> masked = z_bar.masked_positions();
    if (masked.empty()) return Tensor::scalar(0.0);
    Tensor logits = logits_fn(z_bar, caption);
    if (logits.ndim() != 2 || logits.dim(0) != z.cells())
        throw std::invalid_argument("prior_loss: logits must be (cells x K)");
    std::vector<int64_t> targets;
    targets.reserve(masked.size());
    for (int64_t p : masked) {
        const int64_t code = z.codes[static_cast<size_t>(p)];
        if (code < 0 || code >= logits.dim(1))
            throw std::invalid_argument("prior_loss: true code outside codebook");
        targets.push_back(code);
    }
    return cross_entropy_rows(take_rows(logits, masked), targets);
}

VqFitResult fit_vq(VqModel& model, const std::vector<Tensor>& clips, const VqFitOptions& options) {
    if (clips.empty()) throw std::invalid_argument("fit_vq: no clips");
    if (options.steps < 1) throw std::invalid_argument("fit_vq: steps must be >= 1");
    const int batch = std::max(1, std::min<int>(options.batch_size, static_cast<int>(clips.size())));
    const size_t probe = std::min<size_t>(clips.size(), 4);

    nn::Adam optimizer(options.lr);
    VqFitResult result;
    rng::Prng picker(rng::mix(options.seed, 0x7671ULL));

    auto log_round_trip = [&] {
        double err = 0.0;
        for (size_t i = 0; i < probe; ++i) err += model.round_trip_error(clips[i]);
        result.round_trip_curve.push_back(err / static_cast<double>(probe));
    };

    for (int step = 0; step < options.steps; ++step) {
        tensor::Graph graph;
        const VarMap vars(model.params(), true);
        Tensor loss;
        for (int slot = 0; slot < batch; ++slot) {
            const auto i = static_cast<size_t>(picker.below(clips.size()));
            Tensor item_loss = model.train_loss(vars, clips[i]);
            loss = loss.defined() ? add(loss, item_loss) : item_loss;
        }
        loss = scale(loss, 1.0 / batch);
        const tensor::GradTable grads = graph.backward(loss);
        optimizer.step(model.params(), vars, grads);
        result.loss_curve.push_back(loss.value());
        if (options.log_every > 0 && (step % options.log_every == 0 || step + 1 == options.steps))
            log_round_trip();
    }
    return result;
}

std::vector<double> fit_prior(VqModel& model,
                              const std::vector<std::pair<Tensor, std::string>>& items,
                              const PriorFitOptions& options) {
    if (items.empty()) throw std::invalid_argument("fit_prior: no items");
    std::vector<std::pair<TokenGrid, std::string>> encoded;
    encoded.reserve(items.size());
    for (const auto& [x, caption] : items) encoded.emplace_back(model.encode(x), caption);

    nn::Adam optimizer(options.lr);
    std::vector<double> curve;
    rng::Prng picker(rng::mix(options.seed, 0x7072696fULL));
    for (int step = 0; step < options.steps; ++step) {
        const auto i = static_cast<size_t>(picker.below(encoded.size()));
        const double rate = 0.25 + 0.5 * picker.uniform();
        const TokenGrid corrupted =
            mask_corrupt(encoded[i].first, rate, rng::mix(options.seed, static_cast<uint64_t>(step)));

        tensor::Graph graph;
        const VarMap vars(model.params(), true);
        auto logits_fn = [&](const TokenGrid& grid, const std::string& caption) {
            return model.prior_logits(vars, grid, caption);
        };
        Tensor loss = prior_loss(logits_fn, encoded[i].first, corrupted, encoded[i].second);
        if (loss.node_id() < 0) continue;  // nothing masked this step
        const tensor::GradTable grads = graph.backward(loss);
        optimizer.step(model.params(), vars, grads);
        curve.push_back(loss.value());
        if (options.log_every > 0 && (step % options.log_every == 0 || step + 1 == options.steps))
            std::cerr << "prior step " << step << " nll " << loss.value() << "\n";
    }
    return curve;
}

}  // namespace vsd::vq
