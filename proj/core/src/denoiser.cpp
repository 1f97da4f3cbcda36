#include "vsd/denoiser.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "vsd/clip.h"
#include "vsd/curation.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/sti.h"

namespace vsd::denoiser {

using namespace vsd::ops;
using nn::VarMap;

TemporalKind temporal_kind_from_string(const std::string& s) {
    if (s == "none") return TemporalKind::none;
    if (s == "conv1d") return TemporalKind::conv1d;
    if (s == "sti") return TemporalKind::sti;
    throw std::invalid_argument("denoiser: unknown temporal kind '" + s + "'");
}

std::string to_string(TemporalKind kind) {
    switch (kind) {
        case TemporalKind::none: return "none";
        case TemporalKind::conv1d: return "conv1d";
        case TemporalKind::sti: return "sti";
    }
    return "?";
}

void DenoiserConfig::validate() const {
    if (base_channels < 1 || depth < 1 || frames < 1) throw std::invalid_argument("denoiser: bad config");
    if (frame_kernel % 2 == 0) throw std::invalid_argument("denoiser: frame kernel must be odd");
    if (gamma < 1) throw std::invalid_argument("denoiser: gamma must be positive");
    if (time_dim % 2 != 0) throw std::invalid_argument("denoiser: time_dim must be even");
    const int div = 1 << depth;
    if (height % div != 0 || width % div != 0)
        throw std::invalid_argument("denoiser: spatial size must be divisible by 2^depth");
    for (int level = 0; level < depth; ++level) {
        const int h = height >> level, w = width >> level;
        if (h % gamma != 0 || w % gamma != 0)
            throw std::invalid_argument("denoiser: gamma " + std::to_string(gamma) +
                                        " does not divide the level-" + std::to_string(level) +
                                        " grid " + std::to_string(h) + "x" + std::to_string(w));
    }
}

std::vector<int64_t> tokenize(const std::string& caption, int64_t vocab_size) {
    if (vocab_size < 2) throw std::invalid_argument("tokenize: vocabulary too small");
    std::vector<int64_t> ids{kStartTokenId};
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        if (static_cast<int64_t>(ids.size()) < kMaxCaptionTokens)
            ids.push_back(1 + static_cast<int64_t>(rng::hash_str(token) %
                                                   static_cast<uint64_t>(vocab_size - 1)));
        token.clear();
    };
    for (char raw : caption) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else {
            token.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return ids;
}

TextEmbedding encode_text(const std::string& caption, const Tensor& embedding_table) {
    TextEmbedding out;
    out.token_ids = tokenize(caption, embedding_table.dim(0));
    out.tokens = embedding_lookup(embedding_table, out.token_ids);
    return out;
}

nn::ParamStore init_params(const DenoiserConfig& cfg, uint64_t seed) {
    cfg.validate();
    nn::ParamStore p;
    auto conv = [&](const std::string& name, int64_t cout, int64_t cin) {
        p[name + ".w"] = nn::init_fan_in({cout, 3, 3, cin}, 9 * cin, seed, name + ".w");
        p[name + ".b"] = Tensor::zeros({cout});
    };
    auto zero_conv = [&](const std::string& name, int64_t cout, int64_t cin) {
        p[name + ".w"] = Tensor::zeros({cout, 3, 3, cin});
        p[name + ".b"] = Tensor::zeros({cout});
    };

    p["text.embed"] = nn::init_normal({cfg.vocab_size, cfg.text_dim}, 0.02, seed, "text.embed");
    p["time.w1"] = nn::init_fan_in({cfg.time_dim, cfg.time_dim}, cfg.time_dim, seed, "time.w1");
    p["time.b1"] = Tensor::zeros({cfg.time_dim});
    p["time.w2"] = nn::init_fan_in({cfg.time_dim, cfg.time_dim}, cfg.time_dim, seed, "time.w2");
    p["time.b2"] = Tensor::zeros({cfg.time_dim});

    conv("stem", cfg.base_channels, cfg.channels);
    for (int level = 0; level < cfg.depth; ++level) {
        const std::string dl = "down" + std::to_string(level);
        const int64_t c = cfg.level_channels(level);
        if (level > 0) conv(dl + ".proj", c, cfg.level_channels(level - 1));
        conv(dl + ".res.conv1", c, c);
        p[dl + ".res.tproj.w"] = nn::init_fan_in({cfg.time_dim, c}, cfg.time_dim, seed, dl + ".res.tproj.w");
        p[dl + ".res.tproj.b"] = Tensor::zeros({c});
        zero_conv(dl + ".res.conv2", c, c);
        p[dl + ".attn.wq"] = nn::init_fan_in({c, c}, c, seed, dl + ".attn.wq");
        p[dl + ".attn.wk"] = nn::init_fan_in({cfg.text_dim, c}, cfg.text_dim, seed, dl + ".attn.wk");
        p[dl + ".attn.wv"] = nn::init_fan_in({cfg.text_dim, c}, cfg.text_dim, seed, dl + ".attn.wv");
        p[dl + ".attn.wo"] = Tensor::zeros({c, c});
        if (cfg.temporal == TemporalKind::conv1d) {
            p[dl + ".temporal.kernel"] = Tensor::zeros({cfg.frame_kernel, c});
        } else if (cfg.temporal == TemporalKind::sti) {
            sti::store_params(p, "sti." + dl, sti::init_params(c, cfg.gamma, cfg.frame_kernel));
        }
    }
    for (int level = cfg.depth - 2; level >= 0; --level) {
        const std::string ul = "up" + std::to_string(level);
        const int64_t c = cfg.level_channels(level);
        conv(ul + ".proj", c, cfg.level_channels(level + 1));
        conv(ul + ".res.conv1", c, c);
        p[ul + ".res.tproj.w"] = nn::init_fan_in({cfg.time_dim, c}, cfg.time_dim, seed, ul + ".res.tproj.w");
        p[ul + ".res.tproj.b"] = Tensor::zeros({c});
        zero_conv(ul + ".res.conv2", c, c);
    }
    zero_conv("head", cfg.channels, cfg.base_channels);
    return p;
}

namespace {

Tensor res_block(const VarMap& vars, const std::string& prefix, const Tensor& h, const Tensor& temb) {
    const int64_t c = h.dim(3);
    Tensor a = silu(rms_norm(h));
    a = conv2d(a, vars[prefix + ".conv1.w"], vars[prefix + ".conv1.b"]);
    Tensor tb = nn::linear(temb, vars[prefix + ".tproj.w"], vars[prefix + ".tproj.b"]);
    a = add_channel_bias(a, reshape(tb, {c}));
    a = silu(rms_norm(a));
    a = conv2d(a, vars[prefix + ".conv2.w"], vars[prefix + ".conv2.b"]);
    return add(h, a);
}

Tensor cross_attention(const VarMap& vars, const std::string& prefix, const Tensor& h,
                       const Tensor& text_tokens) {
    const int64_t c = h.dim(3);
    const int64_t n = h.numel() / c;
    Tensor tokens = reshape(h, {n, c});
    Tensor q = matmul(rms_norm(tokens), vars[prefix + ".wq"]);
    Tensor k = matmul(text_tokens, vars[prefix + ".wk"]);
    Tensor v = matmul(text_tokens, vars[prefix + ".wv"]);
    Tensor mixed = matmul(attention(q, k, v), vars[prefix + ".wo"]);
    return add(h, reshape(mixed, h.shape()));
}

Tensor temporal_block(const DenoiserConfig& cfg, const VarMap& vars, int level, const Tensor& h) {
    switch (cfg.temporal) {
        case TemporalKind::none:
            return h;
        case TemporalKind::conv1d:
            return add(h, temporal_conv(h, vars["down" + std::to_string(level) + ".temporal.kernel"]));
        case TemporalKind::sti: {
            const sti::StiParams p =
                sti::bind_params(vars, "sti.down" + std::to_string(level), cfg.gamma);
            return sti::forward(h, p).features;
        }
    }
    throw std::logic_error("denoiser: unreachable temporal kind");
}

}  // namespace

Tensor forward(const DenoiserConfig& cfg, const VarMap& vars, const Tensor& x_t, int t,
               const std::string& caption) {
    if (x_t.ndim() != 4 || x_t.dim(3) != cfg.channels)
        throw std::invalid_argument("denoiser: input shape " + tensor::shape_str(x_t.shape()) +
                                    " does not match config");
    if (x_t.dim(1) != cfg.height || x_t.dim(2) != cfg.width)
        throw std::invalid_argument("denoiser: spatial size mismatch vs config");

    Tensor temb = silu(nn::linear(nn::timestep_features(t, cfg.time_dim), vars["time.w1"], vars["time.b1"]));
    temb = nn::linear(temb, vars["time.w2"], vars["time.b2"]);
    const TextEmbedding text = encode_text(caption, vars["text.embed"]);

    Tensor h = conv2d(x_t, vars["stem.w"], vars["stem.b"]);
    std::vector<Tensor> skips;
    for (int level = 0; level < cfg.depth; ++level) {
        const std::string dl = "down" + std::to_string(level);
        if (level > 0)
            h = conv2d(avg_pool_hw(h, 2), vars[dl + ".proj.w"], vars[dl + ".proj.b"]);
        h = res_block(vars, dl + ".res", h, temb);
        h = cross_attention(vars, dl + ".attn", h, text.tokens);
        h = temporal_block(cfg, vars, level, h);
        skips.push_back(h);
    }
    for (int level = cfg.depth - 2; level >= 0; --level) {
        const std::string ul = "up" + std::to_string(level);
        h = conv2d(upsample_nearest_hw(h, 2), vars[ul + ".proj.w"], vars[ul + ".proj.b"]);
        h = add(h, skips[static_cast<size_t>(level)]);
        h = res_block(vars, ul + ".res", h, temb);
    }
    h = silu(rms_norm(h));
    return conv2d(h, vars["head.w"], vars["head.b"]);
}

Denoiser::Denoiser(DenoiserConfig cfg, uint64_t seed)
    : cfg_(cfg), params_(init_params(cfg, seed)) {}

Denoiser::Denoiser(DenoiserConfig cfg, nn::ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
}

Tensor Denoiser::denoise(const Tensor& x_t, int t, const std::string& caption) const {
    const VarMap vars(params_, false);
    return forward(cfg_, vars, x_t, t, caption);
}

diffusion::DenoiseFn Denoiser::as_denoise_fn() const {
    return [this](const Tensor& x_t, int t, const std::string& caption) {
        return denoise(x_t, t, caption);
    };
}

std::vector<TrainItem> load_training_items(const std::vector<manifest::Record>& records,
                                           const std::filesystem::path& media_root, int frames) {
    std::vector<TrainItem> items;
    for (const auto& r : records) {
        try {
            clip::ClipU8 media = clip::load_media(media_root / r.path);
            media = curation::flip_pad(media, frames);
            items.push_back({clip::to_model_tensor(media), manifest::training_caption(r)});
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping item '" << r.id << "': " << e.what() << "\n";
        }
    }
    if (items.empty()) throw std::runtime_error("training: no decodable items in manifest");
    return items;
}

FitResult fit(Denoiser& model, const std::vector<TrainItem>& items, const FitOptions& options) {
    if (options.steps < 1) throw std::invalid_argument("fit: steps must be >= 1");
    if (items.empty()) throw std::invalid_argument("fit: no training items");
    const diffusion::NoiseSchedule schedule = diffusion::make_schedule(1000);
    const int batch = std::max(1, std::min<int>(options.batch_size, static_cast<int>(items.size())));

    nn::Adam optimizer(options.lr);
    FitResult result;
    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = 0;
    uint64_t epoch = 0;

    for (int step = 0; step < options.steps; ++step) {
        tensor::Graph graph;
        const VarMap vars(model.params(), true);
        auto net = [&](const Tensor& x_t, int t, const std::string& caption) {
            return forward(model.config(), vars, x_t, t, caption);
        };

        Tensor loss;
        for (int slot = 0; slot < batch; ++slot) {
            if (cursor == 0) {
                rng::Prng shuffler(rng::mix(options.seed, 0x65706f63ULL + epoch));
                shuffler.shuffle(order);
                ++epoch;
            }
            const TrainItem& item = items[order[cursor]];
            cursor = (cursor + 1) % items.size();
            const uint64_t noise_seed =
                rng::mix(options.seed, static_cast<uint64_t>(step) * 1024 + static_cast<uint64_t>(slot));
            Tensor item_loss = diffusion::training_loss(item.x0, item.caption, net, schedule, noise_seed);
            loss = loss.defined() ? add(loss, item_loss) : item_loss;
        }
        loss = scale(loss, 1.0 / batch);

        const tensor::GradTable grads = graph.backward(loss);
        optimizer.step(model.params(), vars, grads);
        result.loss_curve.push_back(loss.value());
        if (options.log_every > 0 && (step % options.log_every == 0 || step + 1 == options.steps))
            std::cerr << "step " << step << " loss " << loss.value() << "\n";
    }
    return result;
}

double validation_loss(const Denoiser& model, const std::vector<TrainItem>& items,
                       const diffusion::NoiseSchedule& schedule, uint64_t seed) {
    if (items.empty()) throw std::invalid_argument("validation: no items");
    const VarMap vars(model.params(), false);
    auto net = [&](const Tensor& x_t, int t, const std::string& caption) {
        return forward(model.config(), vars, x_t, t, caption);
    };
    double total = 0.0;
    for (size_t i = 0; i < items.size(); ++i) {
        const Tensor loss = diffusion::training_loss(items[i].x0, items[i].caption, net, schedule,
                                                     rng::mix(seed, 0x76616cULL + i));
        total += loss.value();
    }
    return total / static_cast<double>(items.size());
}

}  // namespace vsd::denoiser
