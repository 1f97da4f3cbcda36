#include "vsd/gradcheck.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vsd/rng.h"

namespace vsd::gradcheck {

using tensor::GradTable;
using tensor::Graph;

Result grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps,
                  int64_t max_coords, uint64_t seed) {
    if (!x.all_finite()) throw std::invalid_argument("grad_check: point is not finite");

    Tensor analytic;
    {
        Graph graph;
        Tensor leaf = graph.variable(x.shape(), x.data_copy());
        Tensor loss = f(leaf);
        if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
        if (!loss.all_finite()) throw std::runtime_error("grad_check: non-finite loss");
        GradTable grads = graph.backward(loss);
        analytic = grads.grad_of(leaf);
    }
    if (!analytic.all_finite()) throw std::runtime_error("grad_check: non-finite analytic gradient");

    std::vector<int64_t> coords(static_cast<size_t>(x.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && max_coords < x.numel()) {
        rng::Prng prng(rng::mix(seed, 0x67726463ULL));
        prng.shuffle(coords);
        coords.resize(static_cast<size_t>(max_coords));
    }

    const auto& ga = analytic.data();
    Result result;
    std::vector<double> probe = x.data_copy();
    for (int64_t i : coords) {
        const double saved = probe[static_cast<size_t>(i)];
        probe[static_cast<size_t>(i)] = saved + eps;
        const double up = f(Tensor::from_data(x.shape(), probe)).value();
        probe[static_cast<size_t>(i)] = saved - eps;
        const double down = f(Tensor::from_data(x.shape(), probe)).value();
        probe[static_cast<size_t>(i)] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("grad_check: non-finite intermediate during probing");
        const double numeric = (up - down) / (2.0 * eps);
        const double a = ga[static_cast<size_t>(i)];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        result.max_rel_error = std::max(result.max_rel_error, err);
        ++result.coords_checked;
    }
    return result;
}

}  // namespace vsd::gradcheck
