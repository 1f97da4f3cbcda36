#include "vsd/nn.h"

#include <cmath>
#include <stdexcept>

#include "vsd/ops.h"

namespace vsd::nn {

int64_t param_count(const ParamStore& params) {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

Tensor init_normal(const Shape& shape, double stddev, uint64_t seed, const std::string& name) {
    rng::Prng prng(rng::mix(seed, rng::hash_str(name)));
    std::vector<double> data(static_cast<size_t>(tensor::shape_numel(shape)));
    for (auto& v : data) v = prng.normal() * stddev;
    return Tensor::from_data(shape, std::move(data));
}

Tensor init_fan_in(const Shape& shape, int64_t fan_in, uint64_t seed, const std::string& name) {
    return init_normal(shape, 1.0 / std::sqrt(static_cast<double>(fan_in)), seed, name);
}

Tensor init_zeros(const Shape& shape) { return Tensor::zeros(shape); }

Tensor init_identity(int64_t n) {
    std::vector<double> data(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i * n + i)] = 1.0;
    return Tensor::from_data({n, n}, std::move(data));
}

VarMap::VarMap(const ParamStore& store, bool trainable) : trainable_(trainable) {
    for (const auto& [name, values] : store) {
        if (trainable) {
            vars_.emplace(name, tensor::variable(values.shape(), values.data_copy()));
        } else {
            vars_.emplace(name, values);
        }
    }
}

const Tensor& VarMap::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("params: unknown parameter '" + name + "'");
    return it->second;
}

void Adam::step(ParamStore& params, const VarMap& vars, const GradTable& grads) {
    if (!vars.trainable()) throw std::logic_error("adam: VarMap is not trainable");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, values] : params) {
        const Tensor grad = grads.grad_of(vars[name]);
        const auto& g = grad.data();
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) m.assign(g.size(), 0.0);
        if (v.empty()) v.assign(g.size(), 0.0);
        std::vector<double> next = values.data_copy();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            next[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        values = Tensor::from_data(values.shape(), std::move(next));
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    Tensor out = ops::matmul(x, w);
    if (bias.defined()) out = ops::add_channel_bias(out, bias);
    return out;
}

Tensor timestep_features(int t, int64_t dim) {
    if (dim % 2 != 0) throw std::invalid_argument("timestep_features: dim must be even");
    const int64_t half = dim / 2;
    std::vector<double> data(static_cast<size_t>(dim));
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        data[static_cast<size_t>(i)] = std::sin(t * freq);
        data[static_cast<size_t>(half + i)] = std::cos(t * freq);
    }
    return Tensor::from_data({1, dim}, std::move(data));
}

}  // namespace vsd::nn
