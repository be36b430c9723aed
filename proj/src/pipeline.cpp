#include "bivad/pipeline.hpp"

#include <algorithm>

namespace bivad {

std::string to_string(BridgeMode mode) {
    switch (mode) {
    case BridgeMode::convlstm: return "convlstm";
    case BridgeMode::residual: return "residual";
    case BridgeMode::none: return "none";
    }
    return "?";
}

std::string to_string(DirectionMode mode) {
    switch (mode) {
    case DirectionMode::bi: return "bi";
    case DirectionMode::forward_only: return "forward_only";
    case DirectionMode::backward_only: return "backward_only";
    }
    return "?";
}

BridgeMode parse_bridge_mode(const std::string& text) {
    for (auto mode : {BridgeMode::convlstm, BridgeMode::residual, BridgeMode::none})
        if (text == to_string(mode)) return mode;
    fail(ErrorCode::config_error, "unknown bridge mode '" + text + "'");
}

DirectionMode parse_direction_mode(const std::string& text) {
    for (auto mode : {DirectionMode::bi, DirectionMode::forward_only, DirectionMode::backward_only})
        if (text == to_string(mode)) return mode;
    fail(ErrorCode::config_error, "unknown direction mode '" + text + "'");
}

void ModelConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::config_error, msg); };
    check(n > m + 1 && m + 1 > 1, "clip parameters need n > m + 1 > 1");
    check(stride >= 1, "stride must be positive");
    check(eta >= 0.0 && eta <= 1.0, "eta must lie in [0, 1]");
    check(lambda >= 0.0, "lambda must be non-negative");
    check(slope > 0.0 && slope < 1.0, "leaky slope must lie in (0, 1)");
    check(image_channels >= 1 && ch1 >= 1 && ch2 >= 1 && ch_feat >= 1 && ffn_hidden >= 1,
          "channel counts must be positive");
    check(image_height % 4 == 0 && image_width % 4 == 0 && image_height > 0 && image_width > 0,
          "image extents must be positive multiples of 4");
    check(heads >= 1 && ch_feat % heads == 0, "ch_feat must be a multiple of the head count");
    check(blocks >= 1, "at least one transformer block is required");
    for (auto k : {codec_kernel, attention_kernel, bridge_kernel})
        check(k % 2 == 1, "kernel sizes must be odd");
}

CodecConfig ModelConfig::codec() const {
    return {image_channels, ch1, ch2, ch_feat, codec_kernel, slope};
}

TransformerConfig ModelConfig::transformer() const {
    return {ch_feat, heads, blocks, ffn_hidden, attention_kernel, slope, positional_encoding};
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.image_height = c.image_width = 64;
    c.ch1 = 8;
    c.ch2 = 16;
    c.ch_feat = 16;
    c.heads = 2;
    c.blocks = 2;
    c.ffn_hidden = 32;
    c.bridge_kernel = 3;
    return c;
}

ModelConfig ModelConfig::micro() {
    ModelConfig c;
    c.image_height = c.image_width = 8;
    c.ch1 = 2;
    c.ch2 = 4;
    c.ch_feat = 8;
    c.heads = 2;
    c.blocks = 2;
    c.ffn_hidden = 8;
    c.bridge_kernel = 3;
    return c;
}

namespace {

std::vector<std::size_t> range(std::size_t first, std::size_t last) {
    std::vector<std::size_t> out;
    for (std::size_t i = first; i <= last; ++i) out.push_back(i);
    return out;
}

} // namespace

template <typename T>
std::vector<std::size_t> ClipSample<T>::context_pre() const { return range(0, n - m - 1); }
template <typename T>
std::vector<std::size_t> ClipSample<T>::context_post() const { return range(n + m + 1, 2 * n); }
template <typename T>
std::vector<std::size_t> ClipSample<T>::forward_target() const { return range(n - m - 1, n + m - 1); }
template <typename T>
std::vector<std::size_t> ClipSample<T>::backward_target() const {
    auto r = range(n - m + 1, n + m + 1);
    std::reverse(r.begin(), r.end());
    return r;
}
template <typename T>
std::vector<std::size_t> ClipSample<T>::predicted() const { return range(n - m, n + m); }

std::vector<std::size_t> clip_centers(std::size_t length, std::size_t stride, std::size_t n) {
    std::vector<std::size_t> out;
    const std::size_t margin = n * stride;
    if (length < 2 * margin + 1) return out;
    for (std::size_t t = margin; t + margin < length; ++t) out.push_back(t);
    return out;
}

template <typename T>
ClipSample<T> make_clip(const std::vector<Tensor<T>>& video, std::size_t center,
                        std::size_t stride, std::size_t n, std::size_t m) {
    require(center >= n * stride && center + n * stride < video.size(),
            ErrorCode::invalid_argument,
            "clip around frame " + std::to_string(center) + " leaves the video");
    ClipSample<T> clip;
    clip.n = n;
    clip.m = m;
    for (std::size_t k = 0; k <= 2 * n; ++k) {
        const std::size_t idx = center - n * stride + k * stride;
        clip.source_indices.push_back(idx);
        clip.frames.push_back(video[idx]);
    }
    return clip;
}

template <typename T>
std::vector<ClipSample<T>> slice_clips(const std::vector<Tensor<T>>& video, std::size_t stride,
                                       std::size_t n, std::size_t m) {
    std::vector<ClipSample<T>> out;
    for (auto t : clip_centers(video.size(), stride, n))
        out.push_back(make_clip(video, t, stride, n, m));
    return out;
}

template <typename T>
std::vector<Var<T>> fuse(const std::vector<Var<T>>& forward, const std::vector<Var<T>>& backward,
                         double eta) {
    require(forward.size() == backward.size(), ErrorCode::invalid_argument,
            "fusion needs equally many forward and backward predictions");
    require(eta >= 0.0 && eta <= 1.0, ErrorCode::invalid_argument, "eta must lie in [0, 1]");
    std::vector<Var<T>> out;
    for (std::size_t i = 0; i < forward.size(); ++i) {
        require(forward[i].shape() == backward[i].shape(), ErrorCode::invalid_argument,
                "misaligned predictions at position " + std::to_string(i));
        out.push_back(ops::add(ops::scale(forward[i], static_cast<T>(eta)),
                               ops::scale(backward[i], static_cast<T>(1.0 - eta))));
    }
    return out;
}

template <typename T>
DecodingPipeline<T>::DecodingPipeline(ParameterStore<T>& store, const std::string& prefix,
                                      const ModelConfig& cfg, const SpatialCodec<T>& codec,
                                      Direction direction)
    : prefix_(prefix),
      bridge_mode_(cfg.bridge_mode),
      direction_(direction),
      codec_(&codec),
      decoder_(store, prefix + ".decoder", cfg.transformer()) {
    if (cfg.bridge_mode == BridgeMode::convlstm)
        bridge_.emplace(store, prefix + ".bridge", cfg.ch1, cfg.bridge_kernel);
}

template <typename T>
std::vector<Var<T>> DecodingPipeline<T>::run(const EncodedFrames<T>& targets,
                                             const ContextKnowledge<T>& ctx) const {
    const auto o = decoder_.forward(targets.features, ctx);
    const auto mids = codec_->decode_mid(o);
    require(mids.shape() == targets.tap.shape(), ErrorCode::invalid_argument,
            "decoder mid-layer " + shape_str(mids.shape()) + " does not match encoder tap " +
                shape_str(targets.tap.shape()));
    Var<T> hidden;
    switch (bridge_mode_) {
    case BridgeMode::convlstm:
        hidden = ops::stack(bridge_->sequence(ops::unstack(targets.tap), ops::unstack(mids)));
        break;
    case BridgeMode::residual: hidden = ops::add(mids, targets.tap); break;
    case BridgeMode::none: hidden = mids; break;
    }
    return ops::unstack(codec_->decode(o, hidden));
}

template <typename T>
BiVadModel<T>::BiVadModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg_.validate();
    codec_ = std::make_unique<SpatialCodec<T>>(cfg_.codec(), store_, "codec");
    encoder_ = std::make_unique<TransformerEncoder<T>>(store_, "encoder", cfg_.transformer());
    forward_ = std::make_unique<DecodingPipeline<T>>(store_, "forward", cfg_, *codec_,
                                                     Direction::forward);
    backward_ = std::make_unique<DecodingPipeline<T>>(store_, "backward", cfg_, *codec_,
                                                      Direction::backward);
}

template <typename T>
void BiVadModel<T>::set_eta(double eta) {
    require(eta >= 0.0 && eta <= 1.0, ErrorCode::config_error, "eta must lie in [0, 1]");
    cfg_.eta = eta;
}

template <typename T>
std::vector<Parameter<T>*> BiVadModel<T>::parameters_with_prefix(const std::string& prefix) const {
    std::vector<Parameter<T>*> out;
    for (const auto& p : store_.all())
        if (p->name().rfind(prefix, 0) == 0) out.push_back(p.get());
    return out;
}

template <typename T>
std::vector<Parameter<T>*> BiVadModel<T>::trainable_parameters() const {
    std::vector<Parameter<T>*> out;
    const bool fwd = cfg_.direction_mode != DirectionMode::backward_only;
    const bool bwd = cfg_.direction_mode != DirectionMode::forward_only;
    for (const auto& p : store_.all()) {
        const auto& name = p->name();
        if (name.rfind("forward.", 0) == 0 && !fwd) continue;
        if (name.rfind("backward.", 0) == 0 && !bwd) continue;
        out.push_back(p.get());
    }
    return out;
}

template <typename T>
void BiVadModel<T>::check_clip(const ClipSample<T>& clip) const {
    require(clip.n == cfg_.n && clip.m == cfg_.m && clip.frames.size() == cfg_.clip_length(),
            ErrorCode::invalid_argument, "clip layout does not match the model configuration");
    const Shape expected{cfg_.image_channels, cfg_.image_height, cfg_.image_width};
    for (const auto& f : clip.frames)
        require(f.shape() == expected, ErrorCode::invalid_argument,
                "clip frame " + shape_str(f.shape()) + " does not match model input " +
                    shape_str(expected));
}

namespace {

template <typename T>
Var<T> stack_frames(const ClipSample<T>& clip, const std::vector<std::size_t>& positions) {
    std::vector<Var<T>> items;
    for (auto p : positions) items.emplace_back(clip.frames[p]);
    return ops::stack(items);
}

template <typename T>
Var<T> pick(const Var<T>& batch, const std::vector<std::size_t>& positions) {
    std::vector<Var<T>> items;
    for (auto p : positions) items.push_back(ops::select(batch, p));
    return ops::stack(items);
}

template <typename T>
std::vector<std::size_t> concat_positions(const ClipSample<T>& clip) {
    auto pre = clip.context_pre();
    const auto post = clip.context_post();
    pre.insert(pre.end(), post.begin(), post.end());
    return pre;
}

} // namespace

template <typename T>
ContextKnowledge<T> BiVadModel<T>::encode_context(const ClipSample<T>& clip) const {
    check_clip(clip);
    return encoder_->forward(codec_->encode(stack_frames(clip, concat_positions(clip))).features);
}

template <typename T>
std::vector<Var<T>> BiVadModel<T>::run_pipeline(Direction d, const ClipSample<T>& clip,
                                                const ContextKnowledge<T>& ctx) const {
    check_clip(clip);
    const auto positions = d == Direction::forward ? clip.forward_target() : clip.backward_target();
    return pipeline(d).run(codec_->encode(stack_frames(clip, positions)), ctx);
}

template <typename T>
PredictionBundle<T> BiVadModel<T>::forward(const ClipSample<T>& clip) const {
    check_clip(clip);
    std::vector<std::size_t> all(clip.frames.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto enc = codec_->encode(stack_frames(clip, all));
    const auto ctx = encoder_->forward(pick(enc.features, concat_positions(clip)));

    auto targets = [&](const std::vector<std::size_t>& pos) {
        return EncodedFrames<T>{pick(enc.tap, pos), pick(enc.features, pos)};
    };
    PredictionBundle<T> bundle;
    if (cfg_.direction_mode != DirectionMode::backward_only)
        bundle.forward = forward_->run(targets(clip.forward_target()), ctx);
    if (cfg_.direction_mode != DirectionMode::forward_only) {
        auto b = backward_->run(targets(clip.backward_target()), ctx);
        bundle.backward.assign(b.rbegin(), b.rend());
    }
    switch (cfg_.direction_mode) {
    case DirectionMode::bi: bundle.fused = fuse(bundle.forward, bundle.backward, cfg_.eta); break;
    case DirectionMode::forward_only: bundle.fused = bundle.forward; break;
    case DirectionMode::backward_only: bundle.fused = bundle.backward; break;
    }
    return bundle;
}

#define BIVAD_INSTANTIATE(T)                                                                       \
    template struct ClipSample<T>;                                                                 \
    template ClipSample<T> make_clip(const std::vector<Tensor<T>>&, std::size_t, std::size_t,      \
                                     std::size_t, std::size_t);                                    \
    template std::vector<ClipSample<T>> slice_clips(const std::vector<Tensor<T>>&, std::size_t,    \
                                                    std::size_t, std::size_t);                     \
    template std::vector<Var<T>> fuse(const std::vector<Var<T>>&, const std::vector<Var<T>>&,      \
                                      double);                                                     \
    template class DecodingPipeline<T>;                                                            \
    template class BiVadModel<T>;

BIVAD_INSTANTIATE(float)
BIVAD_INSTANTIATE(double)

} // namespace bivad
