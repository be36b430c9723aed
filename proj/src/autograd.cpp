#include "bivad/autograd.hpp"

#include <unordered_set>

namespace bivad {

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
void Var<T>::set_grad(Tensor<T> g) {
    require(g.shape() == node_->value.shape(), ErrorCode::invalid_argument,
            "gradient shape " + shape_str(g.shape()) + " does not match value " +
                shape_str(node_->value.shape()));
    node_->grad = std::move(g);
}

template <typename T>
Var<T> Var<T>::make(Tensor<T> value, const std::vector<Var>& inputs,
                    std::function<void(const Tensor<T>&)> backward) {
    Var out(std::move(value), false);
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->is_leaf = false;
    out.node_->parents.reserve(inputs.size());
    for (const auto& in : inputs)
        if (in.requires_grad()) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward);
    return out;
}

template <typename T>
void accumulate_grad(const Var<T>& v, const Tensor<T>& g) {
    if (!v.defined() || !v.requires_grad()) return;
    auto& dst = v.node()->ensure_grad();
    T* d = dst.ptr();
    const T* s = g.ptr();
    const std::size_t n = dst.numel();
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void backward(const Var<T>& loss) {
    require(loss.defined(), ErrorCode::invalid_argument, "backward on undefined value");
    require(loss.numel() == 1, ErrorCode::invalid_argument,
            "backward requires a scalar loss, got " + shape_str(loss.shape()));
    auto root = loss.node();
    if (root->consumed)
        fail(ErrorCode::state_error, "backward already ran on this graph");
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    // Owning handles keep interior nodes alive while closures are released.
    std::vector<std::shared_ptr<Node<T>>> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto node = stack.back().first;
        const std::size_t next = stack.back().second;
        if (node->consumed)
            fail(ErrorCode::state_error, "graph contains nodes released by an earlier backward");
        if (next < node->parents.size()) {
            ++stack.back().second;
            auto parent = node->parents[next];
            if (!parent->is_leaf && visited.insert(parent.get()).second)
                stack.emplace_back(std::move(parent), 0);
        } else {
            order.push_back(std::move(node));
            stack.pop_back();
        }
    }

    if (root->is_leaf) {
        accumulate_grad(loss, Tensor<T>::ones(root->value.shape()));
        return;
    }
    root->grad = Tensor<T>::ones(root->value.shape());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = it->get();
        if (!node->grad.empty() && node->backward_fn) node->backward_fn(node->grad);
        node->backward_fn = nullptr;
        node->parents.clear();
        node->grad = Tensor<T>();
        node->consumed = true;
    }
}

template class Var<float>;
template class Var<double>;
template void accumulate_grad(const Var<float>&, const Tensor<float>&);
template void accumulate_grad(const Var<double>&, const Tensor<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

} // namespace bivad
