#include "vsd/diffusion.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vsd/ops.h"
#include "vsd/rng.h"

namespace vsd::diffusion {

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t < 1 || t > total_steps)
        throw std::out_of_range("schedule: step " + std::to_string(t) + " outside [1, " +
                                std::to_string(total_steps) + "]");
    return alpha_bar[static_cast<size_t>(t - 1)];
}

void NoiseSchedule::validate() const {
    if (total_steps < 1 || alpha_bar.size() != static_cast<size_t>(total_steps))
        throw std::invalid_argument("schedule: inconsistent step count");
    double prev = 1.0;
    for (double a : alpha_bar) {
        if (!(a > 0.0 && a <= 1.0 && a < prev))
            throw std::invalid_argument("schedule: alpha_bar must be strictly decreasing in (0,1]");
        prev = a;
    }
    if (ddim_steps.empty()) throw std::invalid_argument("schedule: empty DDIM sub-sequence");
    for (size_t i = 0; i < ddim_steps.size(); ++i) {
        if (ddim_steps[i] < 1 || ddim_steps[i] > total_steps)
            throw std::invalid_argument("schedule: DDIM step out of range");
        if (i > 0 && ddim_steps[i] <= ddim_steps[i - 1])
            throw std::invalid_argument("schedule: DDIM steps must be ascending");
    }
}

NoiseSchedule make_schedule(int total_steps, const std::string& kind, int ddim_count) {
    if (total_steps < 25)
        throw std::invalid_argument("schedule: need at least 25 steps, got " +
                                    std::to_string(total_steps));
    if (kind != "linear") throw std::invalid_argument("schedule: unknown kind '" + kind + "'");
    if (ddim_count < 1 || ddim_count > total_steps)
        throw std::invalid_argument("schedule: bad DDIM count");

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.alpha_bar.resize(static_cast<size_t>(total_steps));
    const double beta_lo = 1e-4, beta_hi = 0.02;
    double acc = 1.0;
    for (int t = 0; t < total_steps; ++t) {
        const double beta =
            total_steps == 1
                ? beta_lo
                : beta_lo + (beta_hi - beta_lo) * static_cast<double>(t) / (total_steps - 1);
        acc *= 1.0 - beta;
        s.alpha_bar[static_cast<size_t>(t)] = acc;
    }

    // evenly spaced, always containing both endpoints 1 and T
    s.ddim_steps.resize(static_cast<size_t>(ddim_count));
    if (ddim_count == 1) {
        s.ddim_steps[0] = total_steps;
    } else {
        for (int i = 0; i < ddim_count; ++i) {
            const double f = static_cast<double>(i) / (ddim_count - 1);
            s.ddim_steps[static_cast<size_t>(i)] =
                1 + static_cast<int>(std::lround(f * (total_steps - 1)));
        }
        for (int i = 1; i < ddim_count; ++i)  // dedupe-guard for tiny T
            if (s.ddim_steps[static_cast<size_t>(i)] <= s.ddim_steps[static_cast<size_t>(i - 1)])
                s.ddim_steps[static_cast<size_t>(i)] = s.ddim_steps[static_cast<size_t>(i - 1)] + 1;
    }
    s.validate();
    return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!x0.same_shape(eps))
        throw std::invalid_argument("q_sample: noise shape " + tensor::shape_str(eps.shape()) +
                                    " does not match " + tensor::shape_str(x0.shape()));
    const double ab = schedule.alpha_bar_at(t);
    return ops::add(ops::scale(x0, std::sqrt(ab)), ops::scale(eps, std::sqrt(1.0 - ab)));
}

StepNoise draw_step_noise(uint64_t seed, const Shape& shape, int total_steps) {
    rng::Prng prng(rng::mix(seed, 0x74657073ULL));
    StepNoise draw;
    draw.t = 1 + static_cast<int>(prng.below(static_cast<uint64_t>(total_steps)));
    draw.eps = Tensor::from_data(shape, prng.normal_vector(static_cast<size_t>(tensor::shape_numel(shape))));
    return draw;
}

Tensor training_loss(const Tensor& x0, const std::string& caption, const DenoiseFn& net,
                     const NoiseSchedule& schedule, uint64_t seed) {
    const StepNoise draw = draw_step_noise(seed, x0.shape(), schedule.total_steps);
    const Tensor x_t = q_sample(x0, draw.t, draw.eps, schedule);
    const Tensor eps_hat = net(x_t, draw.t, caption);
    if (!eps_hat.same_shape(x0))
        throw std::invalid_argument("training_loss: net output shape mismatch");
    Tensor loss = ops::mse(eps_hat, draw.eps);
    if (!std::isfinite(loss.value()))
        throw std::runtime_error("training_loss: non-finite loss at step t=" +
                                 std::to_string(draw.t));
    return loss;
}

Tensor ddim_sample(const DenoiseFn& net, const std::string& caption,
                   const NoiseSchedule& schedule, const Shape& shape, uint64_t seed) {
    schedule.validate();
    rng::Prng prng(rng::mix(seed, 0x6464696dULL));
    const size_t n = static_cast<size_t>(tensor::shape_numel(shape));
    std::vector<double> x = prng.normal_vector(n);

    std::vector<int> steps(schedule.ddim_steps.rbegin(), schedule.ddim_steps.rend());
    for (size_t i = 0; i < steps.size(); ++i) {
        const int t = steps[i];
        const double ab = schedule.alpha_bar_at(t);
        const Tensor eps_hat = net(Tensor::from_data(shape, x), t, caption);
        const auto& e = eps_hat.data();
        if (e.size() != n) throw std::runtime_error("ddim_sample: net output shape mismatch");

        const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
        const double sq_om = std::sqrt(1.0 - ab);
        // alpha_bar of the next stop; 1 at the virtual step 0 ends on x0_hat
        const double ab_next = (i + 1 < steps.size()) ? schedule.alpha_bar_at(steps[i + 1]) : 1.0;
        const double sq_ab_next = std::sqrt(ab_next);
        const double sq_om_next = std::sqrt(1.0 - ab_next);
        for (size_t j = 0; j < n; ++j) {
            const double x0_hat = (x[j] - sq_om * e[j]) * inv_sqrt_ab;
            x[j] = sq_ab_next * x0_hat + sq_om_next * e[j];
            if (!std::isfinite(x[j]))
                throw std::runtime_error("ddim_sample: non-finite value at step t=" +
                                         std::to_string(t));
        }
    }
    for (auto& v : x) v = std::clamp(v, kPixelMin, kPixelMax);
    return Tensor::from_data(shape, std::move(x));
}

}  // namespace vsd::diffusion
