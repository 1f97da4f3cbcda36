#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vsd/nn.h"
#include "vsd/tensor.h"

namespace vsd::metrics {

using tensor::Tensor;

// Gaussian moments of a feature population.
struct FeatureStats {
    int64_t dim = 0;
    int64_t count = 0;
    std::vector<double> mean;  // dim
    std::vector<double> cov;   // dim x dim, row-major, unbiased estimator
};

FeatureStats compute_feature_stats(const std::vector<std::vector<double>>& features);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the matrix square root
// uses symmetric eigendecomposition with negative eigenvalues clamped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct EncoderConfig {
    int c1 = 12, c2 = 24, c3 = 24;
    int64_t feat_dim = 32;   // penultimate width, the FVD feature
    int64_t embed_dim = 32;  // shared retrieval space
    int64_t text_dim = 32;
    int64_t vocab = 512;
    int frames = 8, height = 32, width = 32, channels = 3;
    double temperature = 0.07;
};

// Jointly trained toy video/text dual encoder. Clips are unit-space tensors
// (F x H x W x 3 in [0,1]).
class DualEncoder {
public:
    DualEncoder(EncoderConfig cfg, uint64_t seed);
    DualEncoder(EncoderConfig cfg, nn::ParamStore params);

    const EncoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    Tensor video_features(const Tensor& unit_clip) const;  // 1 x feat_dim
    Tensor video_embedding(const Tensor& unit_clip) const;  // 1 x embed_dim, unit norm
    Tensor text_embedding(const std::string& caption) const;

    // graph-recording variants used by the trainer
    Tensor video_embedding_fwd(const nn::VarMap& vars, const Tensor& unit_clip) const;
    Tensor text_embedding_fwd(const nn::VarMap& vars, const std::string& caption) const;

private:
    EncoderConfig cfg_;
    nn::ParamStore params_;
};

struct EncoderFitOptions {
    int steps = 300;
    int batch_size = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
    int log_every = 25;
};

// Symmetric InfoNCE with in-batch negatives; returns the loss curve.
std::vector<double> train_dual_encoder(DualEncoder& model,
                                       const std::vector<std::pair<Tensor, std::string>>& pairs,
                                       const EncoderFitOptions& options);

// Frechet distance between the two populations' frozen video-tower features.
double fvd(const std::vector<Tensor>& real_clips, const std::vector<Tensor>& generated_clips,
           const DualEncoder& encoder);

struct SimilarityResult {
    std::vector<double> scores;  // cosine per candidate
    double true_score = 0.0;
    int true_rank = 0;  // 1 + number of strictly better candidates
};

SimilarityResult clip_similarity(const Tensor& unit_clip,
                                 const std::vector<std::string>& candidate_captions,
                                 int true_index, const DualEncoder& encoder);

// Mean over consecutive frame pairs of the per-pixel RMS difference; 0 for a
// single frame (with a warning).
double discreteness(const Tensor& unit_clip);

struct MetricsReport {
    double fvd = 0.0;
    double clip_sim_mean = 0.0;
    double clip_rank_median = 0.0;
    double discreteness_mean = 0.0;
    int64_t n_real = 0;
    int64_t n_gen = 0;

    std::string to_json() const;
};

}  // namespace vsd::metrics
