#pragma once

#include <vector>

#include "bivad/layers.hpp"

namespace bivad {

template <typename T>
struct LstmState {
    Var<T> h; // [C,H,W]
    Var<T> c;

    static LstmState zeros(std::size_t channels, std::size_t height, std::size_t width);
};

template <typename T>
struct LstmGates {
    Var<T> forget, input, candidate, output;
};

/// ConvLSTM cell whose gates convolve concat[H_prev, inputs...]. The four
/// gate kernels are separate parameters evaluated as one convolution.
template <typename T>
class ConvLstmCell {
public:
    ConvLstmCell(ParameterStore<T>& store, const std::string& prefix, std::size_t channels,
                 std::size_t input_groups, std::size_t kernel);

    LstmGates<T> gates(const LstmState<T>& state, const std::vector<Var<T>>& inputs) const;
    LstmState<T> step(const LstmState<T>& state, const std::vector<Var<T>>& inputs) const;

    std::size_t channels() const noexcept { return channels_; }
    /// W_F, W_I, W_C, W_O, then their biases.
    std::vector<ParamPtr<T>> parameters() const;

private:
    std::size_t channels_;
    std::size_t input_groups_;
    ConvLayer<T> wf_, wi_, wc_, wo_;
};

/// Two-layer bridge: alpha reads the encoder tap, beta reads the decoder
/// mid-layer output and alpha's hidden state of the same step.
template <typename T>
class LiConvLstm {
public:
    LiConvLstm(ParameterStore<T>& store, const std::string& prefix, std::size_t channels,
               std::size_t kernel);

    LstmState<T> alpha_step(const LstmState<T>& state, const Var<T>& x_alpha) const;
    LstmState<T> beta_step(const LstmState<T>& state, const Var<T>& h_alpha,
                           const Var<T>& x_beta) const;

    /// Runs both layers from zero states; returns H^beta per step.
    std::vector<Var<T>> sequence(const std::vector<Var<T>>& taps,
                                 const std::vector<Var<T>>& mids) const;

    const ConvLstmCell<T>& alpha() const noexcept { return alpha_; }
    const ConvLstmCell<T>& beta() const noexcept { return beta_; }

private:
    ConvLstmCell<T> alpha_;
    ConvLstmCell<T> beta_;
};

extern template class ConvLstmCell<float>;
extern template class ConvLstmCell<double>;
extern template class LiConvLstm<float>;
extern template class LiConvLstm<double>;

} // namespace bivad
