#pragma once

#include <string>

#include "bivad/ops.hpp"
#include "bivad/parameter.hpp"

namespace bivad {

// Convolution with its own kernel and bias parameters.
template <typename T>
struct ConvLayer {
    ParamPtr<T> weight; // [C_out, C_in, k, k]
    ParamPtr<T> bias;   // [C_out]
    std::size_t stride = 1;

    static ConvLayer make(ParameterStore<T>& store, const std::string& name, std::size_t c_out,
                          std::size_t c_in, std::size_t k, std::size_t stride = 1) {
        ConvLayer layer;
        layer.weight = store.uniform(name + ".W", {c_out, c_in, k, k}, c_in * k * k);
        layer.bias = store.constant(name + ".b", {c_out}, T(0));
        layer.stride = stride;
        return layer;
    }

    Var<T> operator()(const Var<T>& x) const {
        return ops::conv2d<T>(x, weight->var(), bias->var(), stride, Padding::same);
    }
};

// Transposed convolution; kernel is [C_in, C_out, k, k].
template <typename T>
struct ConvTransposeLayer {
    ParamPtr<T> weight;
    ParamPtr<T> bias;
    std::size_t stride = 2;

    static ConvTransposeLayer make(ParameterStore<T>& store, const std::string& name,
                                   std::size_t c_out, std::size_t c_in, std::size_t k,
                                   std::size_t stride = 2) {
        ConvTransposeLayer layer;
        layer.weight = store.uniform(name + ".W", {c_in, c_out, k, k}, c_out * k * k);
        layer.bias = store.constant(name + ".b", {c_out}, T(0));
        layer.stride = stride;
        return layer;
    }

    Var<T> operator()(const Var<T>& x) const {
        return ops::conv_transpose2d<T>(x, weight->var(), bias->var(), stride);
    }
};

} // namespace bivad
