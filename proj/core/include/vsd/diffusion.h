#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vsd/tensor.h"

namespace vsd::diffusion {

using tensor::Shape;
using tensor::Tensor;

// Cumulative signal coefficients of the forward process plus the step
// sub-sequence used by the deterministic sampler.
struct NoiseSchedule {
    int total_steps = 0;
    std::vector<double> alpha_bar;  // alpha_bar[t-1] for t in 1..T, strictly decreasing
    std::vector<int> ddim_steps;    // ascending step indices; sampler walks them descending

    double alpha_bar_at(int t) const;  // t in 1..T
    void validate() const;
};

// Linear-beta schedule from 1e-4 to 0.02 with an evenly spaced DDIM
// sub-sequence whose endpoints are 1 and T.
NoiseSchedule make_schedule(int total_steps, const std::string& kind = "linear",
                            int ddim_count = 25);

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// conditional noise predictor: (x_t, t, caption) -> eps_hat
using DenoiseFn = std::function<Tensor(const Tensor& x_t, int t, const std::string& caption)>;

struct StepNoise {
    int t = 0;
    Tensor eps;
};

// The (t, eps) draw used by training_loss, exposed so oracles can replay it.
StepNoise draw_step_noise(uint64_t seed, const Shape& shape, int total_steps);

// Mean squared error between the predicted and the drawn noise at a
// uniformly drawn step.
Tensor training_loss(const Tensor& x0, const std::string& caption, const DenoiseFn& net,
                     const NoiseSchedule& schedule, uint64_t seed);

// Deterministic sampler (eta = 0) over the schedule's sub-sequence, ending on
// the clean estimate; output clamped to the valid pixel range [-1, 1].
Tensor ddim_sample(const DenoiseFn& net, const std::string& caption,
                   const NoiseSchedule& schedule, const Shape& shape, uint64_t seed);

inline constexpr double kPixelMin = -1.0;
inline constexpr double kPixelMax = 1.0;

}  // namespace vsd::diffusion
