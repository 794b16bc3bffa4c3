#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reaps/error.hpp"
#include "reaps/rng.hpp"

namespace reaps {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// One node of the define-by-run graph. Ops allocate a fresh node per call,
// so the recorded graph is rebuilt on every forward pass.
template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until touched by backward / zero_grad
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    // Pulls this node's grad into the parents' grads. Empty for leaves.
    std::function<void(TensorNode<S>&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }
};

template <typename S>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, S(0));
    }

    static TensorT full(Shape shape, S value, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, value);
    }

    static TensorT from_data(Shape shape, std::vector<S> data, bool requires_grad = false,
                             S fill = S(0)) {
        auto n = std::make_shared<TensorNode<S>>();
        const std::size_t count = shape_numel(shape);
        n->shape = std::move(shape);
        if (data.empty()) {
            n->data.assign(count, fill);
        } else {
            if (data.size() != count)
                throw ShapeError("data size " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(n->shape));
            n->data = std::move(data);
        }
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT scalar(S value) { return from_data({}, {value}); }

    explicit TensorT(std::shared_ptr<TensorNode<S>> node) : node_(std::move(node)) {}

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return node_->data.size(); }

    S* data() { return node_->data.data(); }
    const S* data() const { return node_->data.data(); }
    std::vector<S>& vec() { return node_->data; }
    const std::vector<S>& vec() const { return node_->data; }

    S item() const {
        if (numel() != 1)
            throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    // row-major index
    S at(std::initializer_list<int> idx) const {
        if (idx.size() != node_->shape.size())
            throw ShapeError("index rank mismatch for shape " + shape_str(shape()));
        std::size_t flat = 0, stride = 1;
        const auto& sh = node_->shape;
        auto it = idx.end();
        for (int d = static_cast<int>(sh.size()) - 1; d >= 0; --d) {
            --it;
            flat += static_cast<std::size_t>(*it) * stride;
            stride *= static_cast<std::size_t>(sh[static_cast<std::size_t>(d)]);
        }
        return node_->data[flat];
    }

    bool requires_grad() const { return node_->requires_grad; }

    TensorT& set_requires_grad(bool rg) {
        if (rg && node_->backward)
            throw Error("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }

    const std::vector<S>& grad() const {
        if (!has_grad()) throw Error("tensor has no gradient buffer (run backward first)");
        return node_->grad;
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), S(0)); }

    // New leaf holding a copy of the values; no graph linkage, no grad.
    TensorT detach() const {
        auto n = std::make_shared<TensorNode<S>>();
        n->shape = node_->shape;
        n->data = node_->data;
        n->op = "detach";
        return TensorT(std::move(n));
    }

    void fill_uniform(Rng& rng, S lo, S hi) {
        for (auto& v : node_->data) v = static_cast<S>(rng.uniform(lo, hi));
    }

    std::shared_ptr<TensorNode<S>> node() const { return node_; }

private:
    std::shared_ptr<TensorNode<S>> node_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

// Single construction path for every primitive op. The output requires grad
// iff some input does; constant subgraphs drop their parent links so memory
// is released eagerly.
template <typename S>
TensorT<S> make_op_node(const char* op, Shape shape, std::vector<S> data,
                        std::vector<TensorT<S>> parents,
                        std::function<void(TensorNode<S>&)> backward) {
    auto n = std::make_shared<TensorNode<S>>();
    const std::size_t count = shape_numel(shape);
    if (data.size() != count)
        throw ShapeError("op " + std::string(op) + ": data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return TensorT<S>(std::move(n));
}

// Topologically ordered record of the executed ops reachable from a root:
// every node's parents precede it. Materialized per backward pass from the
// define-by-run graph.
template <typename S>
struct TapeT {
    std::vector<TensorNode<S>*> order;

    static TapeT from_root(const TensorT<S>& root);
};

using Tape = TapeT<float>;

// Reverse-mode sweep. The loss must be a scalar produced through the graph.
// Gradients ACCUMULATE into leaf .grad buffers across calls; the caller
// zeroes them (zero_grad) when starting a fresh step.
template <typename S>
void backward(const TensorT<S>& loss);

template <typename S>
bool all_finite(const TensorT<S>& t) {
    for (const S v : t.vec())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace reaps
