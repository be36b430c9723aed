#include "bivad/spatial_codec.hpp"

namespace bivad {

namespace {

void require_frame_extent(const Shape& s, std::size_t channels) {
    require(s.size() == 3 || s.size() == 4, ErrorCode::invalid_argument,
            "frames must be [C,H,W] or [N,C,H,W], got " + shape_str(s));
    const std::size_t r = s.size();
    require(s[r - 3] == channels, ErrorCode::invalid_argument,
            "expected " + std::to_string(channels) + " image channels, got " + shape_str(s));
    require(s[r - 2] % 4 == 0 && s[r - 1] % 4 == 0, ErrorCode::invalid_argument,
            "frame extents must be divisible by 4, got " + shape_str(s));
}

} // namespace

template <typename T>
SpatialCodec<T>::SpatialCodec(const CodecConfig& config, ParameterStore<T>& store,
                              const std::string& prefix)
    : config_(config) {
    const auto k = config.kernel;
    enc1_ = ConvLayer<T>::make(store, prefix + ".enc1", config.ch1, config.image_channels, k, 1);
    enc2_ = ConvLayer<T>::make(store, prefix + ".enc2", config.ch2, config.ch1, k, 2);
    enc3_ = ConvLayer<T>::make(store, prefix + ".enc3", config.ch_feat, config.ch2, k, 2);
    up1_ = ConvTransposeLayer<T>::make(store, prefix + ".up1", config.ch2, config.ch_feat, k, 2);
    up2_ = ConvTransposeLayer<T>::make(store, prefix + ".up2", config.ch1, config.ch2, k, 2);
    head_ = ConvLayer<T>::make(store, prefix + ".head", config.image_channels, config.ch1, k, 1);
}

template <typename T>
EncodedFrames<T> SpatialCodec<T>::encode(const Var<T>& frames) const {
    require_frame_extent(frames.shape(), config_.image_channels);
    EncodedFrames<T> out;
    out.tap = act(enc1_(frames));
    out.features = act(enc3_(act(enc2_(out.tap))));
    return out;
}

template <typename T>
Var<T> SpatialCodec<T>::decode_mid(const Var<T>& features) const {
    const auto& s = features.shape();
    require((s.size() == 3 || s.size() == 4) && s[s.size() - 3] == config_.ch_feat,
            ErrorCode::invalid_argument, "decoder expects " + std::to_string(config_.ch_feat) +
                                             " feature channels, got " + shape_str(s));
    return act(up2_(act(up1_(features))));
}

template <typename T>
Var<T> SpatialCodec<T>::head(const Var<T>& hidden) const {
    const auto& s = hidden.shape();
    require((s.size() == 3 || s.size() == 4) && s[s.size() - 3] == config_.ch1,
            ErrorCode::invalid_argument,
            "head expects " + std::to_string(config_.ch1) + " channels, got " + shape_str(s));
    return ops::tanh(head_(hidden));
}

template <typename T>
Var<T> SpatialCodec<T>::decode(const Var<T>& features, const Var<T>& hidden) const {
    const auto& f = features.shape();
    const auto& h = hidden.shape();
    require(f.size() == h.size() && f.size() >= 3, ErrorCode::invalid_argument,
            "decode rank mismatch " + shape_str(f) + " vs " + shape_str(h));
    const std::size_t r = f.size();
    require(f[r - 3] == config_.ch_feat && h[r - 3] == config_.ch1 && h[r - 2] == 4 * f[r - 2] &&
                h[r - 1] == 4 * f[r - 1] && (r == 3 || f[0] == h[0]),
            ErrorCode::invalid_argument,
            "decode shape mismatch " + shape_str(f) + " vs " + shape_str(h));
    return head(hidden);
}

template <typename T>
std::vector<ParamPtr<T>> SpatialCodec<T>::parameters() const {
    return {enc1_.weight, enc1_.bias, enc2_.weight, enc2_.bias, enc3_.weight, enc3_.bias,
            up1_.weight,  up1_.bias,  up2_.weight,  up2_.bias,  head_.weight, head_.bias};
}

template class SpatialCodec<float>;
template class SpatialCodec<double>;

} // namespace bivad
