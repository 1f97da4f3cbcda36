#include "vsd/metrics.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "vsd/denoiser.h"  // tokenize
#include "vsd/ops.h"
#include "vsd/rng.h"

namespace vsd::metrics {

using namespace vsd::ops;
using nn::VarMap;

FeatureStats compute_feature_stats(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2)
        throw std::invalid_argument("feature_stats: need at least 2 samples");
    FeatureStats s;
    s.count = static_cast<int64_t>(features.size());
    s.dim = static_cast<int64_t>(features.front().size());
    for (const auto& f : features)
        if (static_cast<int64_t>(f.size()) != s.dim)
            throw std::invalid_argument("feature_stats: inconsistent feature widths");

    s.mean.assign(static_cast<size_t>(s.dim), 0.0);
    for (const auto& f : features)
        for (int64_t i = 0; i < s.dim; ++i) s.mean[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
    for (auto& v : s.mean) v /= static_cast<double>(s.count);

    s.cov.assign(static_cast<size_t>(s.dim * s.dim), 0.0);
    for (const auto& f : features) {
        for (int64_t i = 0; i < s.dim; ++i) {
            const double di = f[static_cast<size_t>(i)] - s.mean[static_cast<size_t>(i)];
            for (int64_t j = 0; j < s.dim; ++j) {
                const double dj = f[static_cast<size_t>(j)] - s.mean[static_cast<size_t>(j)];
                s.cov[static_cast<size_t>(i * s.dim + j)] += di * dj;
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(s.count - 1);
    for (auto& v : s.cov) v *= inv;
    return s;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim != b.dim) throw std::invalid_argument("frechet: dimension mismatch");
    const int64_t d = a.dim;
    for (double v : a.mean)
        if (!std::isfinite(v)) throw std::invalid_argument("frechet: non-finite stats");
    for (double v : b.mean)
        if (!std::isfinite(v)) throw std::invalid_argument("frechet: non-finite stats");

    using Matrix = Eigen::MatrixXd;
    const Matrix sa = Eigen::Map<const Matrix>(a.cov.data(), d, d);
    const Matrix sb = Eigen::Map<const Matrix>(b.cov.data(), d, d);
    if (!sa.allFinite() || !sb.allFinite()) throw std::invalid_argument("frechet: non-finite stats");

    double mean_term = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
        mean_term += diff * diff;
    }

    // Tr((Sa Sb)^{1/2}) = Tr((Sb^{1/2} Sa Sb^{1/2})^{1/2}), which keeps every
    // eigendecomposition on a symmetric matrix.
    Eigen::SelfAdjointEigenSolver<Matrix> eig_b(sb);
    Eigen::VectorXd vals_b = eig_b.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix sqrt_b = eig_b.eigenvectors() * vals_b.asDiagonal() * eig_b.eigenvectors().transpose();
    const Matrix inner = sqrt_b * sa * sqrt_b;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_m(0.5 * (inner + inner.transpose()));
    const double trace_sqrt = eig_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = mean_term + sa.trace() + sb.trace() - 2.0 * trace_sqrt;
    return std::max(value, 0.0);
}

namespace {

nn::ParamStore make_params(const EncoderConfig& cfg, uint64_t seed) {
    nn::ParamStore p;
    auto conv = [&](const std::string& name, int64_t cout, int64_t cin) {
        p[name + ".w"] = nn::init_fan_in({cout, 3, 3, cin}, 9 * cin, seed, name + ".w");
        p[name + ".b"] = Tensor::zeros({cout});
    };
    conv("enc.v1", cfg.c1, cfg.channels);
    conv("enc.v2", cfg.c2, cfg.c1);
    conv("enc.v3", cfg.c3, cfg.c2);
    p["enc.vt.kernel"] = nn::init_normal({3, cfg.c2}, 0.2, seed, "enc.vt.kernel");
    p["enc.vf.w"] = nn::init_fan_in({cfg.c3, cfg.feat_dim}, cfg.c3, seed, "enc.vf.w");
    p["enc.vf.b"] = Tensor::zeros({cfg.feat_dim});
    p["enc.vp.w"] = nn::init_fan_in({cfg.feat_dim, cfg.embed_dim}, cfg.feat_dim, seed, "enc.vp.w");
    p["enc.vp.b"] = Tensor::zeros({cfg.embed_dim});

    p["txt.embed"] = nn::init_normal({cfg.vocab, cfg.text_dim}, 0.02, seed, "txt.embed");
    p["txt.w1"] = nn::init_fan_in({cfg.text_dim, cfg.text_dim}, cfg.text_dim, seed, "txt.w1");
    p["txt.b1"] = Tensor::zeros({cfg.text_dim});
    p["txt.w2"] = nn::init_fan_in({cfg.text_dim, cfg.embed_dim}, cfg.text_dim, seed, "txt.w2");
    p["txt.b2"] = Tensor::zeros({cfg.embed_dim});
    return p;
}

Tensor video_feature_fwd(const EncoderConfig& cfg, const VarMap& vars, const Tensor& unit_clip) {
    if (unit_clip.ndim() != 4 || unit_clip.dim(3) != cfg.channels)
        throw std::invalid_argument("encoder: expected F,H,W,C clip, got " +
                                    tensor::shape_str(unit_clip.shape()));
    Tensor x = add_scalar(scale(unit_clip, 2.0), -1.0);
    x = silu(conv2d(x, vars["enc.v1.w"], vars["enc.v1.b"]));
    x = avg_pool_hw(x, 2);
    x = silu(conv2d(x, vars["enc.v2.w"], vars["enc.v2.b"]));
    x = avg_pool_hw(x, 2);
    x = silu(add(x, temporal_conv(x, vars["enc.vt.kernel"])));
    x = silu(conv2d(x, vars["enc.v3.w"], vars["enc.v3.b"]));
    Tensor pooled = global_mean_channels(x);  // 1 x c3
    return silu(nn::linear(pooled, vars["enc.vf.w"], vars["enc.vf.b"]));
}

}  // namespace

DualEncoder::DualEncoder(EncoderConfig cfg, uint64_t seed)
    : cfg_(cfg), params_(make_params(cfg, seed)) {}

DualEncoder::DualEncoder(EncoderConfig cfg, nn::ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {}

Tensor DualEncoder::video_features(const Tensor& unit_clip) const {
    const VarMap vars(params_, false);
    return video_feature_fwd(cfg_, vars, unit_clip);
}

Tensor DualEncoder::video_embedding_fwd(const VarMap& vars, const Tensor& unit_clip) const {
    Tensor features = video_feature_fwd(cfg_, vars, unit_clip);
    return l2_normalize_rows(nn::linear(features, vars["enc.vp.w"], vars["enc.vp.b"]));
}

Tensor DualEncoder::text_embedding_fwd(const VarMap& vars, const std::string& caption) const {
    const std::vector<int64_t> ids = denoiser::tokenize(caption, cfg_.vocab);
    Tensor tokens = embedding_lookup(vars["txt.embed"], ids);
    Tensor pooled = global_mean_channels(tokens);
    Tensor hidden = silu(nn::linear(pooled, vars["txt.w1"], vars["txt.b1"]));
    return l2_normalize_rows(nn::linear(hidden, vars["txt.w2"], vars["txt.b2"]));
}

Tensor DualEncoder::video_embedding(const Tensor& unit_clip) const {
    const VarMap vars(params_, false);
    return video_embedding_fwd(vars, unit_clip);
}

Tensor DualEncoder::text_embedding(const std::string& caption) const {
    const VarMap vars(params_, false);
    return text_embedding_fwd(vars, caption);
}

std::vector<double> train_dual_encoder(DualEncoder& model,
                                       const std::vector<std::pair<Tensor, std::string>>& pairs,
                                       const EncoderFitOptions& options) {
    if (pairs.size() < 2) throw std::invalid_argument("dual encoder: need at least 2 pairs");
    const int batch = std::max(2, std::min<int>(options.batch_size, static_cast<int>(pairs.size())));

    nn::Adam optimizer(options.lr);
    std::vector<double> curve;
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = 0;
    uint64_t epoch = 0;

    for (int step = 0; step < options.steps; ++step) {
        tensor::Graph graph;
        const VarMap vars(model.params(), true);

        Tensor videos, texts;
        for (int slot = 0; slot < batch; ++slot) {
            if (cursor == 0) {
                rng::Prng shuffler(rng::mix(options.seed, 0x636c69ULL + epoch));
                shuffler.shuffle(order);
                ++epoch;
            }
            const auto& [clip, caption] = pairs[order[cursor]];
            cursor = (cursor + 1) % pairs.size();
            Tensor v = model.video_embedding_fwd(vars, clip);
            Tensor t = model.text_embedding_fwd(vars, caption);
            videos = videos.defined() ? concat_rows(videos, v) : v;
            texts = texts.defined() ? concat_rows(texts, t) : t;
        }

        Tensor logits = scale(matmul(videos, transpose(texts)), 1.0 / model.config().temperature);
        std::vector<int64_t> diagonal(static_cast<size_t>(batch));
        std::iota(diagonal.begin(), diagonal.end(), 0);
        Tensor loss = scale(add(cross_entropy_rows(logits, diagonal),
                                cross_entropy_rows(transpose(logits), diagonal)),
                            0.5);

        const tensor::GradTable grads = graph.backward(loss);
        optimizer.step(model.params(), vars, grads);
        curve.push_back(loss.value());
        if (options.log_every > 0 && (step % options.log_every == 0 || step + 1 == options.steps))
            std::cerr << "encoder step " << step << " loss " << loss.value() << "\n";
    }
    return curve;
}

double fvd(const std::vector<Tensor>& real_clips, const std::vector<Tensor>& generated_clips,
           const DualEncoder& encoder) {
    if (real_clips.size() < 2 || generated_clips.size() < 2)
        throw std::invalid_argument("fvd: need at least 2 clips per side");
    auto features_of = [&](const std::vector<Tensor>& clips) {
        std::vector<std::vector<double>> features;
        features.reserve(clips.size());
        for (const auto& c : clips) features.push_back(encoder.video_features(c).data_copy());
        return features;
    };
    return frechet_distance(compute_feature_stats(features_of(real_clips)),
                            compute_feature_stats(features_of(generated_clips)));
}

SimilarityResult clip_similarity(const Tensor& unit_clip,
                                 const std::vector<std::string>& candidate_captions,
                                 int true_index, const DualEncoder& encoder) {
    if (candidate_captions.empty()) throw std::invalid_argument("clip_similarity: empty candidates");
    if (true_index < 0 || true_index >= static_cast<int>(candidate_captions.size()))
        throw std::invalid_argument("clip_similarity: true caption index out of range");

    const Tensor v = encoder.video_embedding(unit_clip);
    const auto& vd = v.data();
    SimilarityResult result;
    result.scores.reserve(candidate_captions.size());
    for (const auto& caption : candidate_captions) {
        const Tensor t = encoder.text_embedding(caption);
        const auto& td = t.data();
        double cosine = 0.0;  // both embeddings are unit rows
        for (size_t i = 0; i < vd.size(); ++i) cosine += vd[i] * td[i];
        result.scores.push_back(cosine);
    }
    result.true_score = result.scores[static_cast<size_t>(true_index)];
    int better = 0;
    for (double s : result.scores)
        if (s > result.true_score) ++better;
    result.true_rank = 1 + better;
    return result;
}

double discreteness(const Tensor& unit_clip) {
    if (unit_clip.ndim() != 4)
        throw std::invalid_argument("discreteness: expected F,H,W,C clip");
    const int64_t frames = unit_clip.dim(0);
    if (frames < 2) {
        std::cerr << "warning: discreteness of a single-frame clip is 0\n";
        return 0.0;
    }
    const int64_t plane = unit_clip.numel() / frames;
    const auto& d = unit_clip.data();
    double total = 0.0;
    for (int64_t f = 0; f + 1 < frames; ++f) {
        const double* a = d.data() + f * plane;
        const double* b = d.data() + (f + 1) * plane;
        double sq = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
            const double diff = a[i] - b[i];
            sq += diff * diff;
        }
        total += std::sqrt(sq / static_cast<double>(plane));
    }
    return total / static_cast<double>(frames - 1);
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["fvd"] = fvd;
    j["clip_sim_mean"] = clip_sim_mean;
    j["clip_rank_median"] = clip_rank_median;
    j["discreteness_mean"] = discreteness_mean;
    j["n_real"] = n_real;
    j["n_gen"] = n_gen;
    return j.dump(2);
}

}  // namespace vsd::metrics
