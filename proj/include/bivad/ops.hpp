#pragma once

#include <optional>
#include <vector>

#include "bivad/autograd.hpp"

namespace bivad {

enum class Padding { same, valid };

enum class ActivationKind { leaky_relu, sigmoid, tanh };

struct Activation {
    ActivationKind kind = ActivationKind::leaky_relu;
    double slope = 0.2; // leaky_relu only
};

/// Output extent and leading pad for one spatial axis. "same" yields
/// ceil(in / stride) with the total pad split floor/ceil (before/after).
struct AxisGeometry {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t pad_before = 0;
};

AxisGeometry conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

namespace ops {

// Elementwise arithmetic; operands must have identical shapes.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T value);
template <typename T> Var<T> abs(const Var<T>& a);

template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> activation(const Activation& act, const Var<T>& x);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Stacks equally shaped tensors along a new leading axis.
template <typename T> Var<T> stack(const std::vector<Var<T>>& items);
/// Inverse of stack for one index.
template <typename T> Var<T> select(const Var<T>& x, std::size_t index);
template <typename T> std::vector<Var<T>> unstack(const Var<T>& x);

/// op(a) * op(b) for rank-2 operands.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false, bool transpose_b = false);

/// Row-wise softmax of a rank-2 tensor, max-subtracted.
template <typename T> Var<T> softmax_rows(const Var<T>& x);

/// x: [C_in,H,W] or [N,C_in,H,W]; kernel: [C_out,C_in,k,k] with k odd;
/// bias: [C_out]. stride in {1,2}.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias,
              std::size_t stride, Padding padding);

/// Adjoint of conv2d("same", stride) with the same kernel viewed as
/// [C_in,C_out,k,k] (input channels first). Output extent is in * stride.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& kernel,
                        const std::optional<Var<T>>& bias, std::size_t stride);

/// Per sample and channel: (x - spatial mean) / (spatial std + eps), then
/// gamma * . + beta. x: [N,C,H,W]; gamma, beta: [C].
template <typename T>
Var<T> channel_spatial_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                            T eps = T(1e-5));

} // namespace ops

/// Numerically stable softmax of a plain vector.
std::vector<double> softmax_vec(const std::vector<double>& scores);

} // namespace bivad
