#pragma once

#include "bivad/layers.hpp"

namespace bivad {

struct CodecConfig {
    std::size_t image_channels = 1;
    std::size_t ch1 = 16;
    std::size_t ch2 = 32;
    std::size_t ch_feat = 64;
    std::size_t kernel = 3;
    double slope = 0.2;
};

template <typename T>
struct EncodedFrames {
    Var<T> tap;      // block1 output, full resolution
    Var<T> features; // quarter resolution
};

/// Frame encoder and decoder shared by all pipelines. Inputs are a single
/// frame [C,H,W] or a batch [N,C,H,W]; outputs keep the same rank.
template <typename T>
class SpatialCodec {
public:
    SpatialCodec(const CodecConfig& config, ParameterStore<T>& store,
                 const std::string& prefix = "codec");

    const CodecConfig& config() const noexcept { return config_; }

    EncodedFrames<T> encode(const Var<T>& frames) const;

    /// up1 + up2: the full-resolution decoder feature the bridge refines.
    Var<T> decode_mid(const Var<T>& features) const;
    /// Output head applied to the refined feature; values in (-1, 1).
    Var<T> head(const Var<T>& hidden) const;
    /// Checks `features` against `hidden` and emits the frame from `hidden`.
    Var<T> decode(const Var<T>& features, const Var<T>& hidden) const;

    /// Parameters in creation order (enc1..enc3, up1, up2, head).
    std::vector<ParamPtr<T>> parameters() const;

private:
    Var<T> act(const Var<T>& x) const { return ops::leaky_relu(x, T(config_.slope)); }

    CodecConfig config_;
    ConvLayer<T> enc1_, enc2_, enc3_;
    ConvTransposeLayer<T> up1_, up2_;
    ConvLayer<T> head_;
};

extern template class SpatialCodec<float>;
extern template class SpatialCodec<double>;

} // namespace bivad
