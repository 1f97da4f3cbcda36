#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vsd/nn.h"
#include "vsd/tensor.h"

namespace vsd::vq {

using tensor::Tensor;

struct VqConfig {
    int64_t codebook_size = 64;  // K; MASK is the extra symbol K
    int64_t code_dim = 16;
    int patch = 2;  // downsampling per axis of the 3D tokenizer
    int64_t hidden = 32;
    int frames = 8;
    int height = 32;
    int width = 32;
    int channels = 3;
    int64_t prior_dim = 32;
    int64_t prior_vocab = 256;

    int64_t grid_frames() const { return frames / patch; }
    int64_t grid_height() const { return height / patch; }
    int64_t grid_width() const { return width / patch; }
    int64_t cells() const { return grid_frames() * grid_height() * grid_width(); }
    void validate() const;
};

struct TokenGrid {
    int64_t frames = 0, height = 0, width = 0;  // token grid extents
    std::vector<int64_t> codes;                 // [0,K) or the MASK symbol
    std::vector<uint8_t> mask;                  // 1 where corrupted
    int64_t mask_symbol = 0;                    // == K

    int64_t cells() const { return frames * height * width; }
    std::vector<int64_t> masked_positions() const;
};

class VqModel {
public:
    VqModel(VqConfig cfg, uint64_t seed);
    VqModel(VqConfig cfg, nn::ParamStore params);

    const VqConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // 3D-VQ tokenization; updates the codebook usage counters.
    TokenGrid encode(const Tensor& x);
    Tensor decode(const TokenGrid& grid) const;  // rejects masked grids
    double round_trip_error(const Tensor& x);    // MSE of decode(encode(x))

    // reconstruction + codebook + 0.25 * commitment, straight-through
    Tensor train_loss(const nn::VarMap& vars, const Tensor& x) const;

    // (cells x K) logits of the masked-token prior over [caption; corrupted grid]
    Tensor prior_logits(const nn::VarMap& vars, const TokenGrid& corrupted,
                        const std::string& caption) const;

    const std::vector<int64_t>& usage() const { return usage_; }
    void reset_usage();

private:
    VqConfig cfg_;
    nn::ParamStore params_;
    std::vector<int64_t> usage_;
};

// Replaces exactly floor(rate * cells) positions, chosen by seeded shuffle,
// with the MASK symbol.
TokenGrid mask_corrupt(const TokenGrid& grid, double rate, uint64_t seed);

using PriorLogitsFn = std::function<Tensor(const TokenGrid& corrupted, const std::string& caption)>;

// Mean negative log-likelihood of the true codes at the masked cells; 0 when
// nothing is masked.
Tensor prior_loss(const PriorLogitsFn& logits_fn, const TokenGrid& z, const TokenGrid& z_bar,
                  const std::string& caption);

struct VqFitOptions {
    int steps = 300;
    int batch_size = 4;
    double lr = 1e-3;
    uint64_t seed = 0;
    int log_every = 10;  // spacing of the round-trip log
};

struct VqFitResult {
    std::vector<double> loss_curve;
    std::vector<double> round_trip_curve;  // fixed-batch reconstruction error
};

VqFitResult fit_vq(VqModel& model, const std::vector<Tensor>& clips, const VqFitOptions& options);

struct PriorFitOptions {
    int steps = 200;
    double lr = 1e-3;
    uint64_t seed = 0;
    int log_every = 20;
};

std::vector<double> fit_prior(VqModel& model,
                              const std::vector<std::pair<Tensor, std::string>>& items,
                              const PriorFitOptions& options);

}  // namespace vsd::vq
