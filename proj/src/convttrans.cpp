#include "bivad/convttrans.hpp"

#include <cmath>

namespace bivad {

AttentionMask AttentionMask::causal(std::size_t n) {
    AttentionMask m{n, n, std::vector<char>(n * n, 0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
    return m;
}

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
    return AttentionMask{rows, cols, std::vector<char>(rows * cols, 1)};
}

template <typename T>
double tsa_score(const Tensor<T>& q, const Tensor<T>& k) {
    require(q.shape() == k.shape(), ErrorCode::invalid_argument,
            "tsa_score shape mismatch " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    double dot = 0.0;
    for (std::size_t i = 0; i < q.numel(); ++i)
        dot += static_cast<double>(q[i]) * static_cast<double>(k[i]);
    return dot / std::sqrt(static_cast<double>(q.numel()));
}

template <typename T>
Tensor<T> attend(const std::vector<double>& weights, const std::vector<Tensor<T>>& values) {
    require(!values.empty() && weights.size() == values.size(), ErrorCode::invalid_argument,
            "attend needs one weight per value map");
    std::vector<double> acc(values.front().numel(), 0.0);
    for (std::size_t j = 0; j < values.size(); ++j) {
        require(values[j].shape() == values.front().shape(), ErrorCode::invalid_argument,
                "attend value maps differ in shape");
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += weights[j] * static_cast<double>(values[j][i]);
    }
    Tensor<T> out(values.front().shape());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
    return out;
}

template <typename T>
AttentionOutput<T> scaled_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                                    const AttentionMask* mask) {
    require(q.shape().size() >= 2 && q.shape().size() == k.shape().size(),
            ErrorCode::invalid_argument, "attention operands need a leading frame axis");
    const std::size_t tq = q.dim(0), tk = k.dim(0);
    require(v.dim(0) == tk, ErrorCode::invalid_argument, "keys and values differ in frame count");
    const std::size_t dq = q.numel() / tq;
    require(k.numel() / tk == dq, ErrorCode::invalid_argument,
            "query and key maps differ in size: " + shape_str(q.shape()) + " vs " +
                shape_str(k.shape()));
    const std::size_t dv = v.numel() / tk;

    auto scores = ops::scale(ops::matmul(ops::reshape(q, {tq, dq}), ops::reshape(k, {tk, dq}),
                                         false, true),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(dq))));
    if (mask) {
        require(mask->rows == tq && mask->cols == tk, ErrorCode::invalid_argument,
                "mask does not match the score matrix");
        Tensor<T> bias({tq, tk});
        for (std::size_t i = 0; i < tq * tk; ++i)
            bias[i] = mask->allowed[i] ? T(0) : static_cast<T>(kMaskedScore);
        scores = ops::add(scores, Var<T>(std::move(bias)));
    }
    AttentionOutput<T> out;
    out.weights = ops::softmax_rows(scores);
    Shape shape = v.shape();
    shape[0] = tq;
    out.output = ops::reshape(ops::matmul(out.weights, ops::reshape(v, {tk, dv})), shape);
    return out;
}

template <typename T>
Tensor<T> positional_encoding(const Shape& shape) {
    require(shape.size() == 4, ErrorCode::invalid_argument, "positional encoding needs [T,C,H,W]");
    Tensor<T> pe(shape);
    const std::size_t c = shape[1], plane = shape[2] * shape[3];
    for (std::size_t t = 0; t < shape[0]; ++t)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double rate = std::pow(10000.0, static_cast<double>(ch - ch % 2) / c);
            const double angle = static_cast<double>(t) / rate;
            const T value = static_cast<T>(ch % 2 == 0 ? std::sin(angle) : std::cos(angle));
            T* dst = pe.ptr() + (t * c + ch) * plane;
            std::fill(dst, dst + plane, value);
        }
    return pe;
}

namespace {

template <typename T>
Var<T> concat_heads(const std::vector<Var<T>>& parts) {
    return parts.size() == 1 ? parts.front() : ops::concat(parts, 1);
}

} // namespace

template <typename T>
MultiHeadTsa<T>::MultiHeadTsa(ParameterStore<T>& store, const std::string& prefix,
                              const TransformerConfig& cfg)
    : d_head_(cfg.head_channels()) {
    require(cfg.heads >= 1 && cfg.channels % cfg.heads == 0, ErrorCode::config_error,
            "channels must be a multiple of the head count");
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto name = prefix + ".head" + std::to_string(h);
        heads_.push_back({ConvLayer<T>::make(store, name + ".Wq", d_head_, cfg.channels, cfg.kernel),
                          ConvLayer<T>::make(store, name + ".Wk", d_head_, cfg.channels, cfg.kernel),
                          ConvLayer<T>::make(store, name + ".Wv", d_head_, cfg.channels, cfg.kernel)});
    }
}

template <typename T>
std::vector<HeadKnowledge<T>> MultiHeadTsa<T>::project(const Var<T>& x) const {
    // One convolution for every projection of every head.
    std::vector<Var<T>> kernels, biases;
    using Member = ConvLayer<T> Head::*;
    for (Member member : {&Head::wq, &Head::wk, &Head::wv})
        for (const auto& h : heads_) {
            kernels.push_back((h.*member).weight->var());
            biases.push_back((h.*member).bias->var());
        }
    auto all = ops::conv2d<T>(x, ops::concat(kernels, 0), ops::concat(biases, 0), 1, Padding::same);
    const std::size_t c = heads_.size(), d = d_head_;
    std::vector<HeadKnowledge<T>> out(c);
    for (std::size_t h = 0; h < c; ++h) {
        out[h].q = ops::slice(all, 1, h * d, (h + 1) * d);
        out[h].k = ops::slice(all, 1, (c + h) * d, (c + h + 1) * d);
        out[h].v = ops::slice(all, 1, (2 * c + h) * d, (2 * c + h + 1) * d);
    }
    return out;
}

template <typename T>
typename MultiHeadTsa<T>::Result MultiHeadTsa<T>::forward(const Var<T>& x,
                                                          const AttentionMask* mask) const {
    const auto qkv = project(x);
    Result r;
    std::vector<Var<T>> outputs;
    for (const auto& h : qkv) {
        auto a = scaled_attention(h.q, h.k, h.v, mask);
        outputs.push_back(a.output);
        r.weights.push_back(a.weights);
    }
    r.output = concat_heads(outputs);
    return r;
}

template <typename T>
ContextQueryTsa<T>::ContextQueryTsa(ParameterStore<T>& store, const std::string& prefix,
                                    const TransformerConfig& cfg)
    : d_head_(cfg.head_channels()) {
    for (std::size_t h = 0; h < cfg.heads; ++h)
        wq_.push_back(ConvLayer<T>::make(store, prefix + ".head" + std::to_string(h) + ".Wq",
                                         d_head_, cfg.channels, cfg.kernel));
}

template <typename T>
typename ContextQueryTsa<T>::Result ContextQueryTsa<T>::forward(const Var<T>& x,
                                                                const ContextKnowledge<T>& ctx) const {
    require(ctx.frames() > 0, ErrorCode::invalid_argument, "context query needs context frames");
    require(ctx.heads.size() == wq_.size(), ErrorCode::invalid_argument,
            "context knowledge has the wrong head count");
    std::vector<Var<T>> kernels, biases;
    for (const auto& w : wq_) {
        kernels.push_back(w.weight->var());
        biases.push_back(w.bias->var());
    }
    auto q = ops::conv2d<T>(x, ops::concat(kernels, 0), ops::concat(biases, 0), 1, Padding::same);
    Result r;
    std::vector<Var<T>> outputs;
    for (std::size_t h = 0; h < wq_.size(); ++h) {
        auto qh = wq_.size() == 1 ? q : ops::slice(q, 1, h * d_head_, (h + 1) * d_head_);
        auto a = scaled_attention(qh, ctx.heads[h].k, ctx.heads[h].v);
        outputs.push_back(a.output);
        r.weights.push_back(a.weights);
    }
    r.output = concat_heads(outputs);
    return r;
}

template <typename T>
ConvFfn<T>::ConvFfn(ParameterStore<T>& store, const std::string& prefix, const TransformerConfig& cfg)
    : expand_(ConvLayer<T>::make(store, prefix + ".expand", cfg.ffn_hidden, cfg.channels, cfg.kernel)),
      project_(ConvLayer<T>::make(store, prefix + ".project", cfg.channels, cfg.ffn_hidden, cfg.kernel)),
      slope_(cfg.slope) {}

template <typename T>
Var<T> ConvFfn<T>::forward(const Var<T>& x) const {
    return project_(ops::leaky_relu(expand_(x), static_cast<T>(slope_)));
}

template <typename T>
NormLayer<T> NormLayer<T>::make(ParameterStore<T>& store, const std::string& name,
                                std::size_t channels) {
    return {store.constant(name + ".gamma", {channels}, T(1)),
            store.constant(name + ".beta", {channels}, T(0))};
}

template <typename T>
EncoderBlock<T>::EncoderBlock(ParameterStore<T>& store, const std::string& prefix,
                              const TransformerConfig& cfg)
    : tsa_(store, prefix + ".tsa", cfg),
      norm1_(NormLayer<T>::make(store, prefix + ".norm1", cfg.channels)),
      ffn_(store, prefix + ".ffn", cfg),
      norm2_(NormLayer<T>::make(store, prefix + ".norm2", cfg.channels)) {}

template <typename T>
Var<T> EncoderBlock<T>::forward(const Var<T>& x) const {
    auto y = norm1_(ops::add(x, tsa_.forward(x, nullptr).output));
    return norm2_(ops::add(y, ffn_.forward(y)));
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParameterStore<T>& store, const std::string& prefix,
                              const TransformerConfig& cfg)
    : self_(store, prefix + ".self", cfg),
      norm1_(NormLayer<T>::make(store, prefix + ".norm1", cfg.channels)),
      cross_(store, prefix + ".cross", cfg),
      norm2_(NormLayer<T>::make(store, prefix + ".norm2", cfg.channels)),
      ffn_(store, prefix + ".ffn", cfg),
      norm3_(NormLayer<T>::make(store, prefix + ".norm3", cfg.channels)) {}

template <typename T>
Var<T> DecoderBlock<T>::forward(const Var<T>& x, const ContextKnowledge<T>& ctx,
                                const AttentionMask& mask) const {
    auto y1 = norm1_(ops::add(x, self_.forward(x, &mask).output));
    auto y2 = norm2_(ops::add(y1, cross_.forward(y1, ctx).output));
    return norm3_(ops::add(y2, ffn_.forward(y2)));
}

namespace {

template <typename T>
Var<T> with_position(const Var<T>& x, bool enabled) {
    return enabled ? ops::add(x, Var<T>(positional_encoding<T>(x.shape()))) : x;
}

void require_sequence(const Shape& s, std::size_t channels, const char* what) {
    require(s.size() == 4 && s[0] > 0 && s[1] == channels, ErrorCode::invalid_argument,
            std::string(what) + " must be [T," + std::to_string(channels) + ",h,w], got " +
                shape_str(s));
}

} // namespace

template <typename T>
TransformerEncoder<T>::TransformerEncoder(ParameterStore<T>& store, const std::string& prefix,
                                          const TransformerConfig& cfg)
    : cfg_(cfg) {
    require(cfg.blocks >= 1, ErrorCode::config_error, "transformer needs at least one block");
    for (std::size_t b = 0; b < cfg.blocks; ++b)
        blocks_.emplace_back(store, prefix + ".block" + std::to_string(b), cfg);
}

template <typename T>
ContextKnowledge<T> TransformerEncoder<T>::forward(const Var<T>& context) const {
    require_sequence(context.shape(), cfg_.channels, "encoder input");
    auto x = with_position(context, cfg_.positional_encoding);
    for (const auto& block : blocks_) x = block.forward(x);
    // The knowledge is the final block's projections of its own output.
    return ContextKnowledge<T>{blocks_.back().attention().project(x)};
}

template <typename T>
TransformerDecoder<T>::TransformerDecoder(ParameterStore<T>& store, const std::string& prefix,
                                          const TransformerConfig& cfg)
    : cfg_(cfg) {
    require(cfg.blocks >= 1, ErrorCode::config_error, "transformer needs at least one block");
    for (std::size_t b = 0; b < cfg.blocks; ++b)
        blocks_.emplace_back(store, prefix + ".block" + std::to_string(b), cfg);
}

template <typename T>
Var<T> TransformerDecoder<T>::forward(const Var<T>& targets, const ContextKnowledge<T>& ctx) const {
    require_sequence(targets.shape(), cfg_.channels, "decoder input");
    const auto mask = AttentionMask::causal(targets.dim(0));
    auto x = with_position(targets, cfg_.positional_encoding);
    for (const auto& block : blocks_) x = block.forward(x, ctx, mask);
    return x;
}

#define BIVAD_INSTANTIATE(T)                                                                       \
    template double tsa_score(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> attend(const std::vector<double>&, const std::vector<Tensor<T>>&);          \
    template AttentionOutput<T> scaled_attention(const Var<T>&, const Var<T>&, const Var<T>&,      \
                                                 const AttentionMask*);                            \
    template Tensor<T> positional_encoding<T>(const Shape&);                                       \
    template class MultiHeadTsa<T>;                                                                \
    template class ContextQueryTsa<T>;                                                             \
    template class ConvFfn<T>;                                                                     \
    template struct NormLayer<T>;                                                                  \
    template class EncoderBlock<T>;                                                                \
    template class DecoderBlock<T>;                                                                \
    template class TransformerEncoder<T>;                                                          \
    template class TransformerDecoder<T>;

BIVAD_INSTANTIATE(float)
BIVAD_INSTANTIATE(double)

} // namespace bivad
