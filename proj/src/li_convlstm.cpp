#include "bivad/li_convlstm.hpp"

namespace bivad {

template <typename T>
LstmState<T> LstmState<T>::zeros(std::size_t channels, std::size_t height, std::size_t width) {
    return {Var<T>(Tensor<T>::zeros({channels, height, width})),
            Var<T>(Tensor<T>::zeros({channels, height, width}))};
}

template <typename T>
ConvLstmCell<T>::ConvLstmCell(ParameterStore<T>& store, const std::string& prefix,
                              std::size_t channels, std::size_t input_groups, std::size_t kernel)
    : channels_(channels), input_groups_(input_groups) {
    const std::size_t c_in = (input_groups + 1) * channels;
    wf_ = ConvLayer<T>::make(store, prefix + ".F", channels, c_in, kernel);
    wi_ = ConvLayer<T>::make(store, prefix + ".I", channels, c_in, kernel);
    wc_ = ConvLayer<T>::make(store, prefix + ".C", channels, c_in, kernel);
    wo_ = ConvLayer<T>::make(store, prefix + ".O", channels, c_in, kernel);
}

template <typename T>
LstmGates<T> ConvLstmCell<T>::gates(const LstmState<T>& state,
                                    const std::vector<Var<T>>& inputs) const {
    require(inputs.size() == input_groups_, ErrorCode::invalid_argument,
            "ConvLSTM cell expects " + std::to_string(input_groups_) + " inputs");
    const auto& s = state.h.shape();
    require(s.size() == 3 && s[0] == channels_ && state.c.shape() == s, ErrorCode::invalid_argument,
            "ConvLSTM state must be [" + std::to_string(channels_) + ",H,W], got " + shape_str(s));
    std::vector<Var<T>> parts{state.h};
    for (const auto& x : inputs) {
        require(x.shape() == s, ErrorCode::invalid_argument,
                "ConvLSTM input " + shape_str(x.shape()) + " does not match state " + shape_str(s));
        parts.push_back(x);
    }
    auto z = ops::concat(parts, 0);
    auto kernel = ops::concat<T>({wf_.weight->var(), wi_.weight->var(), wc_.weight->var(),
                                  wo_.weight->var()}, 0);
    auto bias = ops::concat<T>({wf_.bias->var(), wi_.bias->var(), wc_.bias->var(),
                                wo_.bias->var()}, 0);
    auto pre = ops::conv2d<T>(z, kernel, bias, 1, Padding::same);
    const std::size_t c = channels_;
    return {ops::sigmoid(ops::slice(pre, 0, 0, c)), ops::sigmoid(ops::slice(pre, 0, c, 2 * c)),
            ops::tanh(ops::slice(pre, 0, 2 * c, 3 * c)),
            ops::sigmoid(ops::slice(pre, 0, 3 * c, 4 * c))};
}

template <typename T>
LstmState<T> ConvLstmCell<T>::step(const LstmState<T>& state,
                                   const std::vector<Var<T>>& inputs) const {
    const auto g = gates(state, inputs);
    LstmState<T> next;
    next.c = ops::add(ops::mul(g.forget, state.c), ops::mul(g.input, g.candidate));
    next.h = ops::mul(g.output, ops::tanh(next.c));
    return next;
}

template <typename T>
std::vector<ParamPtr<T>> ConvLstmCell<T>::parameters() const {
    return {wf_.weight, wi_.weight, wc_.weight, wo_.weight, wf_.bias, wi_.bias, wc_.bias, wo_.bias};
}

template <typename T>
LiConvLstm<T>::LiConvLstm(ParameterStore<T>& store, const std::string& prefix,
                          std::size_t channels, std::size_t kernel)
    : alpha_(store, prefix + ".alpha", channels, 1, kernel),
      beta_(store, prefix + ".beta", channels, 2, kernel) {}

template <typename T>
LstmState<T> LiConvLstm<T>::alpha_step(const LstmState<T>& state, const Var<T>& x_alpha) const {
    return alpha_.step(state, {x_alpha});
}

template <typename T>
LstmState<T> LiConvLstm<T>::beta_step(const LstmState<T>& state, const Var<T>& h_alpha,
                                      const Var<T>& x_beta) const {
    return beta_.step(state, {h_alpha, x_beta});
}

template <typename T>
std::vector<Var<T>> LiConvLstm<T>::sequence(const std::vector<Var<T>>& taps,
                                            const std::vector<Var<T>>& mids) const {
    require(taps.size() == mids.size(), ErrorCode::invalid_argument,
            "bridge needs one tap per decoder mid-layer output");
    std::vector<Var<T>> out;
    if (taps.empty()) return out;
    const auto& s = taps.front().shape();
    require(s.size() == 3, ErrorCode::invalid_argument, "bridge inputs must be [C,H,W]");
    auto a = LstmState<T>::zeros(s[0], s[1], s[2]);
    auto b = a;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        a = alpha_step(a, taps[i]);
        b = beta_step(b, a.h, mids[i]);
        out.push_back(b.h);
    }
    return out;
}

template struct LstmState<float>;
template struct LstmState<double>;
template class ConvLstmCell<float>;
template class ConvLstmCell<double>;
template class LiConvLstm<float>;
template class LiConvLstm<double>;

} // namespace bivad
