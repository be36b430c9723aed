#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bivad/convttrans.hpp"
#include "bivad/li_convlstm.hpp"
#include "bivad/spatial_codec.hpp"

namespace bivad {

enum class BridgeMode { convlstm, residual, none };
enum class DirectionMode { bi, forward_only, backward_only };
enum class Direction { forward, backward };

std::string to_string(BridgeMode mode);
std::string to_string(DirectionMode mode);
BridgeMode parse_bridge_mode(const std::string& text);
DirectionMode parse_direction_mode(const std::string& text);

struct ModelConfig {
    std::size_t image_height = 256;
    std::size_t image_width = 256;
    std::size_t image_channels = 1;
    std::size_t ch1 = 16;
    std::size_t ch2 = 32;
    std::size_t ch_feat = 64;
    std::size_t heads = 8;
    std::size_t blocks = 5;
    std::size_t ffn_hidden = 384;
    std::size_t codec_kernel = 3;
    std::size_t attention_kernel = 3;
    std::size_t bridge_kernel = 5;
    std::size_t n = 4;
    std::size_t m = 1;
    std::size_t stride = 3;
    double eta = 0.75;
    double lambda = 1.0;
    double slope = 0.2;
    BridgeMode bridge_mode = BridgeMode::convlstm;
    DirectionMode direction_mode = DirectionMode::bi;
    bool positional_encoding = false;
    std::uint64_t seed = 1;

    /// Throws config-error on inconsistent values.
    void validate() const;

    CodecConfig codec() const;
    TransformerConfig transformer() const;
    std::size_t clip_length() const { return 2 * n + 1; }
    std::size_t predictions() const { return 2 * m + 1; }
    /// Frames without a full clip on either side of a video.
    std::size_t margin() const { return n * stride; }

    static ModelConfig full();
    static ModelConfig desk();
    static ModelConfig micro();
};

/// 2n+1 frames sampled at `stride` around a center. Positions index
/// `frames`; the role helpers return positions.
template <typename T>
struct ClipSample {
    std::vector<Tensor<T>> frames; // each [C,H,W]
    std::vector<std::size_t> source_indices;
    std::size_t n = 4;
    std::size_t m = 1;

    std::size_t center() const { return source_indices.at(n); }
    std::vector<std::size_t> context_pre() const;
    std::vector<std::size_t> context_post() const;
    std::vector<std::size_t> forward_target() const;
    /// Descending temporal order.
    std::vector<std::size_t> backward_target() const;
    /// Frames that receive a prediction, ascending.
    std::vector<std::size_t> predicted() const;
};

/// Centers t with t - n*stride >= 0 and t + n*stride < length.
std::vector<std::size_t> clip_centers(std::size_t length, std::size_t stride, std::size_t n);

template <typename T>
ClipSample<T> make_clip(const std::vector<Tensor<T>>& video, std::size_t center,
                        std::size_t stride, std::size_t n, std::size_t m);

template <typename T>
std::vector<ClipSample<T>> slice_clips(const std::vector<Tensor<T>>& video, std::size_t stride,
                                       std::size_t n, std::size_t m);

/// Every set is ascending in time and aligned to ClipSample::predicted().
/// Sets of pipelines that did not run are empty.
template <typename T>
struct PredictionBundle {
    std::vector<Var<T>> forward;
    std::vector<Var<T>> backward;
    std::vector<Var<T>> fused;
};

template <typename T>
std::vector<Var<T>> fuse(const std::vector<Var<T>>& forward, const std::vector<Var<T>>& backward,
                         double eta);

/// Transformer decoder plus bridge feeding the shared spatial decoder.
template <typename T>
class DecodingPipeline {
public:
    DecodingPipeline(ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                     const SpatialCodec<T>& codec, Direction direction);

    /// targets hold taps [T,ch1,H,W] and features [T,ch_feat,h,w] in the
    /// pipeline's temporal order; returns one prediction per target, same
    /// order.
    std::vector<Var<T>> run(const EncodedFrames<T>& targets, const ContextKnowledge<T>& ctx) const;

    const SpatialCodec<T>& codec() const noexcept { return *codec_; }
    Direction direction() const noexcept { return direction_; }
    const std::string& prefix() const noexcept { return prefix_; }
    const TransformerDecoder<T>& decoder() const noexcept { return decoder_; }
    const std::optional<LiConvLstm<T>>& bridge() const noexcept { return bridge_; }

private:
    std::string prefix_;
    BridgeMode bridge_mode_;
    Direction direction_;
    const SpatialCodec<T>* codec_;
    TransformerDecoder<T> decoder_;
    std::optional<LiConvLstm<T>> bridge_;
};

template <typename T>
class BiVadModel {
public:
    explicit BiVadModel(const ModelConfig& cfg);
    BiVadModel(const BiVadModel&) = delete;
    BiVadModel& operator=(const BiVadModel&) = delete;

    const ModelConfig& config() const noexcept { return cfg_; }
    /// Inference-time knobs; the architecture is fixed at construction.
    void set_eta(double eta);
    void set_direction_mode(DirectionMode mode) { cfg_.direction_mode = mode; }

    ParameterStore<T>& store() noexcept { return store_; }
    const ParameterStore<T>& store() const noexcept { return store_; }
    const SpatialCodec<T>& codec() const noexcept { return *codec_; }
    const TransformerEncoder<T>& encoder() const noexcept { return *encoder_; }
    const DecodingPipeline<T>& pipeline(Direction d) const {
        return d == Direction::forward ? *forward_ : *backward_;
    }

    /// Parameters updated by training under the current direction mode.
    std::vector<Parameter<T>*> trainable_parameters() const;
    /// Parameters whose names start with `prefix`.
    std::vector<Parameter<T>*> parameters_with_prefix(const std::string& prefix) const;

    ContextKnowledge<T> encode_context(const ClipSample<T>& clip) const;
    /// One pipeline from raw frames; predictions in the pipeline's order.
    std::vector<Var<T>> run_pipeline(Direction d, const ClipSample<T>& clip,
                                     const ContextKnowledge<T>& ctx) const;
    /// Single shared encoder pass, then the decoding pipelines enabled by
    /// the direction mode, then fusion.
    PredictionBundle<T> forward(const ClipSample<T>& clip) const;

private:
    void check_clip(const ClipSample<T>& clip) const;

    ModelConfig cfg_;
    ParameterStore<T> store_;
    std::unique_ptr<SpatialCodec<T>> codec_;
    std::unique_ptr<TransformerEncoder<T>> encoder_;
    std::unique_ptr<DecodingPipeline<T>> forward_;
    std::unique_ptr<DecodingPipeline<T>> backward_;
};

template <typename T>
std::vector<Var<T>> run_forward_pipeline(const BiVadModel<T>& model, const ClipSample<T>& clip,
                                         const ContextKnowledge<T>& ctx) {
    return model.run_pipeline(Direction::forward, clip, ctx);
}

/// Predictions are returned ascending (re-aligned).
template <typename T>
std::vector<Var<T>> run_backward_pipeline(const BiVadModel<T>& model, const ClipSample<T>& clip,
                                          const ContextKnowledge<T>& ctx) {
    auto preds = model.run_pipeline(Direction::backward, clip, ctx);
    return {preds.rbegin(), preds.rend()};
}

template <typename T>
PredictionBundle<T> model_forward(const BiVadModel<T>& model, const ClipSample<T>& clip) {
    return model.forward(clip);
}

extern template class DecodingPipeline<float>;
extern template class DecodingPipeline<double>;
extern template class BiVadModel<float>;
extern template class BiVadModel<double>;

} // namespace bivad
