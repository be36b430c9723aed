#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bivad/tensor.hpp"

namespace bivad {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // empty until a gradient reaches the node
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Tensor<T>&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

/// Handle to a value on the gradient tape. Cheap to copy; copies alias the
/// same node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false);

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    std::size_t numel() const { return node_->value.numel(); }
    bool defined() const noexcept { return static_cast<bool>(node_); }
    bool requires_grad() const { return node_->requires_grad; }

    bool has_grad() const { return !node_->grad.empty(); }
    const Tensor<T>& grad() const { return node_->grad; }
    void set_grad(Tensor<T> g);
    void clear_grad() { node_->grad = Tensor<T>(); }

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }
    bool same_node(const Var& other) const noexcept { return node_ == other.node_; }

    /// Builds a non-leaf result. `backward` receives d(loss)/d(result) and must
    /// accumulate into the inputs' gradients. When grad mode is off or no input
    /// requires a gradient, the closure is dropped.
    static Var make(Tensor<T> value, const std::vector<Var>& inputs,
                    std::function<void(const Tensor<T>&)> backward);

private:
    std::shared_ptr<Node<T>> node_;
};

/// Accumulates `g` into the gradient of `v` (no-op for constants).
template <typename T>
void accumulate_grad(const Var<T>& v, const Tensor<T>& g);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate on leaves;
/// interior nodes are released. A graph can be swept once.
template <typename T>
void backward(const Var<T>& loss);

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

extern template class Var<float>;
extern template class Var<double>;

} // namespace bivad
