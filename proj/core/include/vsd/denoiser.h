#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vsd/diffusion.h"
#include "vsd/manifest.h"
#include "vsd/nn.h"
#include "vsd/tensor.h"

namespace vsd::denoiser {

using tensor::Tensor;

enum class TemporalKind { none, conv1d, sti };

TemporalKind temporal_kind_from_string(const std::string& s);
std::string to_string(TemporalKind kind);

struct DenoiserConfig {
    int base_channels = 16;
    int depth = 2;
    TemporalKind temporal = TemporalKind::sti;
    int gamma = 2;
    int frame_kernel = 3;
    int text_dim = 32;
    int64_t vocab_size = 512;
    int time_dim = 32;
    int frames = 8;
    int height = 32;
    int width = 32;
    int channels = 3;

    int level_channels(int level) const { return base_channels << level; }
    void validate() const;
};

struct TextEmbedding {
    std::vector<int64_t> token_ids;  // start token first, length capped
    Tensor tokens;                   // L x text_dim
};

inline constexpr int64_t kMaxCaptionTokens = 32;
inline constexpr int64_t kStartTokenId = 0;

// lowercase, whitespace-split, hashed into the vocabulary (slot 0 reserved
// for the start token)
std::vector<int64_t> tokenize(const std::string& caption, int64_t vocab_size);
TextEmbedding encode_text(const std::string& caption, const Tensor& embedding_table);

nn::ParamStore init_params(const DenoiserConfig& cfg, uint64_t seed);

// One pass through the UNet; x_t must match the run's clip geometry.
Tensor forward(const DenoiserConfig& cfg, const nn::VarMap& vars, const Tensor& x_t, int t,
               const std::string& caption);

class Denoiser {
public:
    Denoiser(DenoiserConfig cfg, uint64_t seed);
    Denoiser(DenoiserConfig cfg, nn::ParamStore params);

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    int64_t param_count() const { return nn::param_count(params_); }

    Tensor denoise(const Tensor& x_t, int t, const std::string& caption) const;
    diffusion::DenoiseFn as_denoise_fn() const;

private:
    DenoiserConfig cfg_;
    nn::ParamStore params_;
};

struct TrainItem {
    Tensor x0;  // model pixel space [-1, 1]
    std::string caption;
};

struct FitOptions {
    int steps = 300;
    int batch_size = 2;
    double lr = 1e-3;
    uint64_t seed = 0;
    int log_every = 25;  // 0 silences progress lines
};

struct FitResult {
    std::vector<double> loss_curve;
};

// Decodes manifest media into training items; undecodable records are
// skipped with a warning, an empty result is an error.
std::vector<TrainItem> load_training_items(const std::vector<manifest::Record>& records,
                                           const std::filesystem::path& media_root, int frames);

FitResult fit(Denoiser& model, const std::vector<TrainItem>& items, const FitOptions& options);

// Mean eps-MSE over the items with fixed per-item noise draws.
double validation_loss(const Denoiser& model, const std::vector<TrainItem>& items,
                       const diffusion::NoiseSchedule& schedule, uint64_t seed);

}  // namespace vsd::denoiser
