#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsd/rng.h"
#include "vsd/tensor.h"

namespace vsd::nn {

using tensor::GradTable;
using tensor::Shape;
using tensor::Tensor;

// Named parameter set; the unit of checkpointing. Name order is the sorted
// map order, so serialization is deterministic.
using ParamStore = std::map<std::string, Tensor>;

int64_t param_count(const ParamStore& params);

// Deterministic initializers, keyed by (seed, name) so layouts can be
// reordered without changing values.
Tensor init_normal(const Shape& shape, double stddev, uint64_t seed, const std::string& name);
Tensor init_fan_in(const Shape& shape, int64_t fan_in, uint64_t seed, const std::string& name);
Tensor init_zeros(const Shape& shape);
Tensor init_identity(int64_t n);

// One training step's view of a ParamStore: every parameter re-materialized
// as a leaf in the active graph (trainable) or as a plain constant.
class VarMap {
public:
    VarMap(const ParamStore& store, bool trainable);

    const Tensor& operator[](const std::string& name) const;
    // substitute one entry (e.g. a finite-difference probe point)
    void set(const std::string& name, Tensor value) { vars_[name] = std::move(value); }
    bool trainable() const { return trainable_; }
    const std::map<std::string, Tensor>& vars() const { return vars_; }

private:
    std::map<std::string, Tensor> vars_;
    bool trainable_;
};

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, const VarMap& vars, const GradTable& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// y = x W (+ bias when defined); x is (rows x in), W stored (in x out).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Sinusoidal features of an integer step, dim must be even. Constant tensor.
Tensor timestep_features(int t, int64_t dim);

}  // namespace vsd::nn
