#pragma once

#include <functional>

#include "vsd/tensor.h"

namespace vsd::gradcheck {

using tensor::Tensor;

struct Result {
    double max_rel_error = 0.0;
    int64_t coords_checked = 0;
};

// Compares reverse-mode gradients of the scalar-valued f against central
// finite differences at x. Error per coordinate is
// |analytic - numeric| / max(1, |analytic|). f must be a pure function.
// max_coords > 0 checks a seeded random subset for large inputs.
Result grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5, int64_t max_coords = 0, uint64_t seed = 0);

}  // namespace vsd::gradcheck
