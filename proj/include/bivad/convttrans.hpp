#pragma once

#include <vector>

#include "bivad/layers.hpp"

namespace bivad {

struct TransformerConfig {
    std::size_t channels = 64; // ch_feat
    std::size_t heads = 8;
    std::size_t blocks = 5;
    std::size_t ffn_hidden = 384;
    std::size_t kernel = 3;
    double slope = 0.2;
    bool positional_encoding = false;

    std::size_t head_channels() const { return channels / heads; }
};

/// Which (query, key) pairs may interact. Row i is a query position.
struct AttentionMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<char> allowed;

    static AttentionMask causal(std::size_t n);
    static AttentionMask full(std::size_t rows, std::size_t cols);
    bool operator()(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
};

inline constexpr double kMaskedScore = -1e9;

/// Dot product of the flattened maps divided by sqrt of their element count.
template <typename T>
double tsa_score(const Tensor<T>& q, const Tensor<T>& k);

/// Weighted sum of equally shaped value maps.
template <typename T>
Tensor<T> attend(const std::vector<double>& weights, const std::vector<Tensor<T>>& values);

template <typename T>
struct AttentionOutput {
    Var<T> output;  // [Tq, ...] shaped like v per frame
    Var<T> weights; // [Tq, Tk], row-stochastic
};

/// q: [Tq, ...], k and v: [Tk, ...]; each frame is flattened into one token.
template <typename T>
AttentionOutput<T> scaled_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                    const AttentionMask* mask = nullptr);

/// Per-head query/key/value maps, each [T, d_head, h, w].
template <typename T>
struct HeadKnowledge {
    Var<T> q, k, v;
};

/// Final encoder block knowledge for every context frame, per head. Frame
/// order follows the encoder input.
template <typename T>
struct ContextKnowledge {
    std::vector<HeadKnowledge<T>> heads;
    std::size_t frames() const { return heads.empty() ? 0 : heads.front().k.dim(0); }
};

template <typename T>
class MultiHeadTsa {
public:
    struct Head {
        ConvLayer<T> wq, wk, wv;
    };
    struct Result {
        Var<T> output; // heads concatenated along channels
        std::vector<Var<T>> weights;
    };

    MultiHeadTsa(ParameterStore<T>& store, const std::string& prefix, const TransformerConfig& cfg);

    std::vector<HeadKnowledge<T>> project(const Var<T>& x) const;
    Result forward(const Var<T>& x, const AttentionMask* mask) const;
    const std::vector<Head>& heads() const noexcept { return heads_; }

private:
    std::size_t d_head_;
    std::vector<Head> heads_;
};

/// Queries from the target frames, keys and values from the context.
template <typename T>
class ContextQueryTsa {
public:
    struct Result {
        Var<T> output;
        std::vector<Var<T>> weights;
    };

    ContextQueryTsa(ParameterStore<T>& store, const std::string& prefix,
                    const TransformerConfig& cfg);

    Result forward(const Var<T>& x, const ContextKnowledge<T>& ctx) const;

private:
    std::size_t d_head_;
    std::vector<ConvLayer<T>> wq_;
};

template <typename T>
class ConvFfn {
public:
    ConvFfn(ParameterStore<T>& store, const std::string& prefix, const TransformerConfig& cfg);
    Var<T> forward(const Var<T>& x) const;

private:
    ConvLayer<T> expand_, project_;
    double slope_;
};

/// Learnable per-channel scale and shift around channel_spatial_norm.
template <typename T>
struct NormLayer {
    ParamPtr<T> gamma, beta;
    static NormLayer make(ParameterStore<T>& store, const std::string& name, std::size_t channels);
    Var<T> operator()(const Var<T>& x) const {
        return ops::channel_spatial_norm(x, gamma->var(), beta->var());
    }
};

template <typename T>
class EncoderBlock {
public:
    EncoderBlock(ParameterStore<T>& store, const std::string& prefix, const TransformerConfig& cfg);
    Var<T> forward(const Var<T>& x) const;
    const MultiHeadTsa<T>& attention() const noexcept { return tsa_; }

private:
    MultiHeadTsa<T> tsa_;
    NormLayer<T> norm1_;
    ConvFfn<T> ffn_;
    NormLayer<T> norm2_;
};

template <typename T>
class DecoderBlock {
public:
    DecoderBlock(ParameterStore<T>& store, const std::string& prefix, const TransformerConfig& cfg);
    Var<T> forward(const Var<T>& x, const ContextKnowledge<T>& ctx, const AttentionMask& mask) const;

private:
    MultiHeadTsa<T> self_;
    NormLayer<T> norm1_;
    ContextQueryTsa<T> cross_;
    NormLayer<T> norm2_;
    ConvFfn<T> ffn_;
    NormLayer<T> norm3_;
};

template <typename T>
class TransformerEncoder {
public:
    TransformerEncoder(ParameterStore<T>& store, const std::string& prefix,
                       const TransformerConfig& cfg);

    /// context: [T, C, h, w] with both context clips in temporal order.
    ContextKnowledge<T> forward(const Var<T>& context) const;
    const std::vector<EncoderBlock<T>>& blocks() const noexcept { return blocks_; }

private:
    TransformerConfig cfg_;
    std::vector<EncoderBlock<T>> blocks_;
};

template <typename T>
class TransformerDecoder {
public:
    TransformerDecoder(ParameterStore<T>& store, const std::string& prefix,
                       const TransformerConfig& cfg);

    /// targets: [T, C, h, w] in the pipeline's temporal order. Position p of
    /// the result sees targets 0..p and the whole context.
    Var<T> forward(const Var<T>& targets, const ContextKnowledge<T>& ctx) const;

private:
    TransformerConfig cfg_;
    std::vector<DecoderBlock<T>> blocks_;
};

/// Channel-wise sinusoid per sequence position, broadcast over space.
template <typename T>
Tensor<T> positional_encoding(const Shape& shape);

} // namespace bivad
