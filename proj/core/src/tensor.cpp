#include "vsd/tensor.h"

#include <atomic>
#include <cmath>
#include <sstream>

namespace vsd::tensor {

namespace {

thread_local std::vector<Graph*> g_active_graphs;

std::atomic<uint64_t> g_next_graph_id{1};

}  // namespace

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

Tensor Tensor::zeros(Shape shape) {
    const int64_t n = shape_numel(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    const int64_t n = shape_numel(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(n), value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

const std::vector<double>& Tensor::data() const {
    if (!data_) throw std::logic_error("tensor: access to undefined tensor");
    return *data_;
}

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("tensor: value() on non-scalar " + shape_str(shape_));
    return data()[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
    if (static_cast<int>(index.size()) != ndim())
        throw std::invalid_argument("tensor: index rank mismatch");
    int64_t flat = 0;
    int i = 0;
    for (int64_t ix : index) {
        const int64_t extent = shape_[static_cast<size_t>(i)];
        if (ix < 0 || ix >= extent) throw std::out_of_range("tensor: index out of range");
        flat = flat * extent + ix;
        ++i;
    }
    return data()[static_cast<size_t>(flat)];
}

bool Tensor::all_finite() const {
    for (double v : data())
        if (!std::isfinite(v)) return false;
    return true;
}

Graph::Graph() : id_(g_next_graph_id.fetch_add(1)) { g_active_graphs.push_back(this); }

Graph::~Graph() {
    if (!g_active_graphs.empty() && g_active_graphs.back() == this) g_active_graphs.pop_back();
}

Graph* Graph::active() { return g_active_graphs.empty() ? nullptr : g_active_graphs.back(); }

int Graph::add_node(Shape shape, BackwardFn fn, bool leaf) {
    nodes_.push_back(Node{std::move(shape), std::move(fn), leaf});
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::variable(Shape shape, std::vector<double> data) {
    Tensor t = Tensor::from_data(std::move(shape), std::move(data));
    t.node_ = add_node(t.shape_, nullptr, true);
    t.graph_ = id_;
    return t;
}

std::vector<double>& GradSink::accum(int node_id) {
    auto& slot = buffers_.at(static_cast<size_t>(node_id));
    if (!slot) {
        const int64_t n = shape_numel(graph_.nodes_[static_cast<size_t>(node_id)].shape);
        slot = std::make_unique<std::vector<double>>(static_cast<size_t>(n), 0.0);
    }
    return *slot;
}

GradTable Graph::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("graph: backward already ran on this graph");
    if (loss.graph_ != id_ || loss.node_ < 0)
        throw std::invalid_argument("graph: loss is detached from this graph");
    if (loss.numel() != 1)
        throw std::invalid_argument("graph: loss must be scalar, got " + shape_str(loss.shape()));
    consumed_ = true;

    GradSink sink(*this);
    sink.buffers_.resize(nodes_.size());
    sink.accum(loss.node_)[0] = 1.0;

    GradTable table;
    table.graph_ = id_;

    // reverse creation order; every node is visited at most once
    for (int id = loss.node_; id >= 0; --id) {
        auto& buf = sink.buffers_[static_cast<size_t>(id)];
        if (!buf) continue;
        const Node& node = nodes_[static_cast<size_t>(id)];
        Tensor grad = Tensor::from_data(node.shape, std::move(*buf));
        buf.reset();
        if (node.leaf) {
            table.grads_.emplace(id, std::move(grad));
        } else if (node.backward) {
            node.backward(grad, sink);
        }
    }
    return table;
}

Tensor GradTable::grad_of(const Tensor& leaf) const {
    if (leaf.node_id() < 0)
        throw std::invalid_argument("grad table: tensor does not participate in any graph");
    if (leaf.graph_id() != graph_)
        throw std::invalid_argument("grad table: tensor belongs to a different graph");
    auto it = grads_.find(leaf.node_id());
    if (it == grads_.end()) return Tensor::zeros(leaf.shape());
    return it->second;
}

bool GradTable::contains(const Tensor& leaf) const {
    return leaf.graph_id() == graph_ && grads_.count(leaf.node_id()) > 0;
}

Tensor variable(Shape shape, std::vector<double> data) {
    Graph* g = Graph::active();
    if (!g) throw std::logic_error("tensor: variable() requires an active graph");
    return g->variable(std::move(shape), std::move(data));
}

Tensor variable_like(const Tensor& values) { return variable(values.shape(), values.data_copy()); }

}  // namespace vsd::tensor
