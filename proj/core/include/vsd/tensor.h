#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vsd::tensor {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;
class GradSink;

// Immutable N-dimensional array of doubles, row-major. A tensor created while
// a Graph is active and marked requires-grad (or derived from one) carries a
// node id into that graph; plain tensors are constants.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor scalar(double value);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    const std::vector<double>& data() const;
    std::vector<double> data_copy() const { return data(); }

    // scalar convenience; throws unless numel() == 1
    double value() const;
    double at(std::initializer_list<int64_t> index) const;

    bool requires_grad() const { return node_ >= 0; }
    int node_id() const { return node_; }
    uint64_t graph_id() const { return graph_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    friend class Graph;
    friend struct OpBuilder;

    std::shared_ptr<const std::vector<double>> data_;
    Shape shape_;
    int node_ = -1;
    uint64_t graph_ = 0;
};

// Gradients produced by one backward pass, keyed by leaf node id.
class GradTable {
public:
    // zero tensor when the leaf never influenced the loss
    Tensor grad_of(const Tensor& leaf) const;
    bool contains(const Tensor& leaf) const;
    size_t size() const { return grads_.size(); }

private:
    friend class Graph;
    uint64_t graph_ = 0;
    std::unordered_map<int, Tensor> grads_;
};

// Reverse-mode tape. Constructing a Graph makes it the active recording
// context for the current thread (stack discipline); destroying it pops it.
// backward() may run at most once per graph.
class Graph {
public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* active();

    uint64_t id() const { return id_; }
    size_t node_count() const { return nodes_.size(); }

    // Leaf tensor recorded in this graph; participates in backward.
    Tensor variable(Shape shape, std::vector<double> data);

    GradTable backward(const Tensor& loss);

private:
    friend struct OpBuilder;
    friend class GradSink;

    using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

    struct Node {
        Shape shape;
        BackwardFn backward;  // null for leaves
        bool leaf = false;
    };

    int add_node(Shape shape, BackwardFn fn, bool leaf);

    uint64_t id_;
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Accumulates gradient contributions during backward. accum() returns a
// zero-initialized buffer shaped like the node's output; callers add into it.
class GradSink {
public:
    std::vector<double>& accum(int node_id);

private:
    friend class Graph;
    explicit GradSink(Graph& g) : graph_(g) {}
    Graph& graph_;
    std::vector<std::unique_ptr<std::vector<double>>> buffers_;
};

// Leaf in the currently active graph; throws if none is active.
Tensor variable(Shape shape, std::vector<double> data);
Tensor variable_like(const Tensor& values);

}  // namespace vsd::tensor
