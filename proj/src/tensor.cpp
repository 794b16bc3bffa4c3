#include "reaps/tensor.hpp"

#include <unordered_set>

namespace reaps {

template <typename S>
TapeT<S> TapeT<S>::from_root(const TensorT<S>& root) {
    TapeT<S> tape;
    if (!root.requires_grad()) return tape;

    // iterative post-order DFS over requires_grad parents
    std::unordered_set<const TensorNode<S>*> visited;
    struct Frame {
        TensorNode<S>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node().get(), 0});
    visited.insert(root.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode<S>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            tape.order.push_back(f.node);
            stack.pop_back();
        }
    }
    return tape;
}

template <typename S>
void backward(const TensorT<S>& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw Error("backward: loss does not depend on any tensor that requires grad");

    TapeT<S> tape = TapeT<S>::from_root(loss);

    // intermediates restart from zero every sweep; leaves keep accumulating
    for (TensorNode<S>* n : tape.order) {
        if (n->backward) {
            n->grad.assign(n->data.size(), S(0));
        } else {
            n->ensure_grad();
        }
    }
    loss.node()->grad[0] += S(1);

    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        TensorNode<S>* n = *it;
        if (n->backward) n->backward(*n);
    }
}

template struct TapeT<float>;
template struct TapeT<double>;
template void backward<float>(const TensorT<float>&);
template void backward<double>(const TensorT<double>&);

}  // namespace reaps
