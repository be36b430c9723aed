#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "bivad/convttrans.hpp"
#include "checks.hpp"
#include "gradcheck.hpp"

using namespace bivad;
using bivad::testing::random_tensor;

namespace {

TransformerConfig small_config(std::size_t channels, std::size_t heads) {
    TransformerConfig cfg;
    cfg.channels = channels;
    cfg.heads = heads;
    cfg.blocks = 2;
    cfg.ffn_hidden = 6;
    cfg.kernel = 3;
    return cfg;
}

Var<double> rand_var(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    return Var<double>(random_tensor(std::move(shape), rng, lo, hi));
}

void zero_all(ParameterStore<double>& store) {
    for (const auto& p : store.all())
        if (!p->name().ends_with(".gamma")) p->mutable_value().fill(0.0);
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Identity at the kernel centre, zero elsewhere: [c,c,k,k].
void set_identity(Parameter<double>& w) {
    auto& t = w.mutable_value();
    t.fill(0.0);
    const std::size_t c = t.dim(0), k = t.dim(2);
    for (std::size_t i = 0; i < c; ++i) t.at({i, i, k / 2, k / 2}) = 1.0;
}

} // namespace

TEST_CASE("tsa_score") {
    Tensor<double> zeros({8, 4, 4}, 0.0), ones({8, 4, 4}, 1.0);
    std::mt19937_64 rng(1);
    const auto k = random_tensor({8, 4, 4}, rng);
    CHECK(tsa_score(zeros, k) == 0.0);

    Tensor<float> q1({8, 64, 64}, 1.0f);
    CHECK(tsa_score(q1, q1) == doctest::Approx(std::sqrt(32768.0)).epsilon(1e-9));
    CHECK(tsa_score(q1, q1) == doctest::Approx(181.019).epsilon(1e-5));

    const auto q = random_tensor({8, 4, 4}, rng);
    auto neg = k;
    for (auto& v : neg.data()) v = -v;
    CHECK(tsa_score(q, neg) == doctest::Approx(-tsa_score(q, k)).epsilon(1e-12));
}

TEST_CASE("attend") {
    std::mt19937_64 rng(2);
    const auto v0 = random_tensor({2, 3, 3}, rng);
    CHECK(max_diff(attend<double>({1.0}, {v0}), v0) == 0.0);
    CHECK(max_diff(attend<double>({1.0 / 3, 1.0 / 3, 1.0 / 3}, {v0, v0, v0}), v0) < 1e-12);
    const auto out = attend<double>({0.25, 0.75}, {Tensor<double>({2, 2}, 1.0), Tensor<double>({2, 2}, 3.0)});
    for (double x : out.data()) CHECK(x == doctest::Approx(2.5));
}

TEST_CASE("scaled_attention agrees with tsa_score and softmax_vec") {
    std::mt19937_64 rng(3);
    const auto q = random_tensor({3, 2, 3, 3}, rng), k = random_tensor({4, 2, 3, 3}, rng),
               v = random_tensor({4, 2, 3, 3}, rng);
    const auto out = scaled_attention(Var<double>(q), Var<double>(k), Var<double>(v));
    const std::size_t per = 18;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> scores;
        std::vector<Tensor<double>> values;
        Tensor<double> qi({per}, std::vector<double>(q.ptr() + i * per, q.ptr() + (i + 1) * per));
        for (std::size_t j = 0; j < 4; ++j) {
            Tensor<double> kj({per}, std::vector<double>(k.ptr() + j * per, k.ptr() + (j + 1) * per));
            scores.push_back(tsa_score(qi, kj));
            values.emplace_back(Shape{per}, std::vector<double>(v.ptr() + j * per, v.ptr() + (j + 1) * per));
        }
        const auto weights = softmax_vec(scores);
        for (std::size_t j = 0; j < 4; ++j) CHECK(out.weights.value()[i * 4 + j] == doctest::Approx(weights[j]).epsilon(1e-12));
        const auto expected = attend(weights, values);
        for (std::size_t e = 0; e < per; ++e) CHECK(out.output.value()[i * per + e] == doctest::Approx(expected[e]).epsilon(1e-12));
    }
}

TEST_CASE("multi-head temporal self-attention") {
    std::mt19937_64 rng(4);
    SUBCASE("c=8, d_head=8 concatenates to 64 channels") {
        ParameterStore<float> store(1);
        MultiHeadTsa<float> tsa(store, "tsa", small_config(64, 8));
        const auto out = tsa.forward(Var<float>(Tensor<float>({3, 64, 4, 4}, 0.5f)), nullptr);
        CHECK(out.output.shape() == Shape{3, 64, 4, 4});
        CHECK(out.weights.size() == 8);
    }
    SUBCASE("one head equals plain attention over its projections") {
        ParameterStore<double> store(2);
        MultiHeadTsa<double> tsa(store, "tsa", small_config(3, 1));
        const auto x = rand_var({4, 3, 3, 3}, rng);
        const auto heads = tsa.project(x);
        REQUIRE(heads.size() == 1);
        const auto& h = tsa.heads()[0];
        CHECK(max_diff(heads[0].q.value(), h.wq(x).value()) < 1e-12);
        const auto direct = scaled_attention(heads[0].q, heads[0].k, heads[0].v);
        CHECK(max_diff(tsa.forward(x, nullptr).output.value(), direct.output.value()) < 1e-12);
    }
    SUBCASE("permuting heads permutes channel groups only") {
        ParameterStore<double> store(3);
        MultiHeadTsa<double> tsa(store, "tsa", small_config(4, 2));
        for (const auto& p : store.all()) p->mutable_value() = random_tensor(p->shape(), rng);
        const auto x = rand_var({3, 4, 3, 3}, rng);
        const auto before = tsa.forward(x, nullptr).output.value();
        const auto& hs = tsa.heads();
        for (auto member : {&MultiHeadTsa<double>::Head::wq, &MultiHeadTsa<double>::Head::wk,
                            &MultiHeadTsa<double>::Head::wv}) {
            std::swap((hs[0].*member).weight->mutable_value(), (hs[1].*member).weight->mutable_value());
            std::swap((hs[0].*member).bias->mutable_value(), (hs[1].*member).bias->mutable_value());
        }
        const auto after = tsa.forward(x, nullptr).output.value();
        // Head outputs are 2 channels each: groups swap, values unchanged.
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t c = 0; c < 4; ++c)
                for (std::size_t i = 0; i < 9; ++i)
                    CHECK(after.at({t, c, i / 3, i % 3}) == before.at({t, (c + 2) % 4, i / 3, i % 3}));
    }
}

TEST_CASE("context-query attention") {
    std::mt19937_64 rng(5);
    ParameterStore<double> store(6);
    ContextQueryTsa<double> cross(store, "cross", small_config(4, 2));
    const auto x = rand_var({3, 4, 2, 2}, rng);

    SUBCASE("a single context frame is copied to every target") {
        ContextKnowledge<double> ctx;
        for (int h = 0; h < 2; ++h)
            ctx.heads.push_back({rand_var({1, 2, 2, 2}, rng), rand_var({1, 2, 2, 2}, rng), rand_var({1, 2, 2, 2}, rng)});
        const auto out = cross.forward(x, ctx).output.value();
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t h = 0; h < 2; ++h)
                for (std::size_t i = 0; i < 8; ++i)
                    CHECK(out[t * 16 + h * 8 + i] == doctest::Approx(ctx.heads[h].v.value()[i]).epsilon(1e-12));
    }
    SUBCASE("swapping identical context frames changes nothing") {
        ContextKnowledge<double> ctx, swapped;
        for (int h = 0; h < 2; ++h) {
            const auto k = random_tensor({1, 2, 2, 2}, rng), v = random_tensor({1, 2, 2, 2}, rng),
                       k2 = random_tensor({1, 2, 2, 2}, rng), v2 = random_tensor({1, 2, 2, 2}, rng);
            auto two = [](const Tensor<double>& a, const Tensor<double>& b) {
                return ops::concat<double>({Var<double>(a), Var<double>(b)}, 0);
            };
            ctx.heads.push_back({two(k, k2), two(k, k), two(v, v)});
            swapped.heads.push_back({two(k2, k), two(k, k), two(v, v)});
        }
        CHECK(max_diff(cross.forward(x, ctx).output.value(), cross.forward(x, swapped).output.value()) == 0.0);
    }
    SUBCASE("orthogonal keys give the two-entry softmax") {
        ParameterStore<double> one_head(7);
        ContextQueryTsa<double> id(one_head, "cross", small_config(2, 1));
        for (const auto& p : one_head.all())
            if (p->name().ends_with(".W")) set_identity(*p);
        const Tensor<double> q({1, 2, 1, 2}, {1.0, 2.0, 0.5, -1.0});
        const Tensor<double> keys({2, 2, 1, 2}, {1.0, 0.0, 0.0, 0.0,   // e0
                                                 0.0, 1.0, 0.0, 0.0}); // e1, orthogonal to e0
        ContextKnowledge<double> ctx;
        ctx.heads.push_back({Var<double>(keys), Var<double>(keys), Var<double>(random_tensor({2, 2, 1, 2}, rng))});
        const auto weights = id.forward(Var<double>(q), ctx).weights[0].value();
        const auto expected = softmax_vec({1.0 / 2.0, 2.0 / 2.0}); // dot products over sqrt(4)
        CHECK(weights[0] == doctest::Approx(expected[0]).epsilon(1e-12));
        CHECK(weights[1] == doctest::Approx(expected[1]).epsilon(1e-12));
    }
}

TEST_CASE("conv FFN") {
    SUBCASE("zero weights give zero output") {
        ParameterStore<double> store(1);
        ConvFfn<double> ffn(store, "ffn", small_config(4, 2));
        zero_all(store);
        std::mt19937_64 rng(1);
        const auto out = ffn.forward(rand_var({2, 4, 4, 4}, rng));
        for (double v : out.value().data()) CHECK(v == 0.0);
    }
    SUBCASE("full-scale shape is preserved") {
        ParameterStore<float> store(1);
        TransformerConfig cfg;
        ConvFfn<float> ffn(store, "ffn", cfg);
        NoGradGuard guard;
        CHECK(ffn.forward(Var<float>(Tensor<float>({1, 64, 64, 64}, 0.1f))).shape() == Shape{1, 64, 64, 64});
    }
}

TEST_CASE("channel-spatial normalization") {
    std::mt19937_64 rng(8);
    ParameterStore<double> store(1);
    const auto norm = NormLayer<double>::make(store, "norm", 3);
    SUBCASE("constant channel maps to beta") {
        Tensor<double> x({1, 3, 4, 4}, 0.0);
        for (std::size_t i = 16; i < 32; ++i) x[i] = 5.0; // channel 1 constant
        for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
        const auto out = norm(Var<double>(x)).value();
        for (std::size_t i = 16; i < 32; ++i) CHECK(out[i] == 0.0);
    }
    SUBCASE("zero mean, unit deviation at init") {
        const auto out = norm(rand_var({2, 3, 5, 5}, rng, -4, 9)).value();
        for (std::size_t plane = 0; plane < 6; ++plane) {
            double mean = 0, sq = 0;
            for (std::size_t i = 0; i < 25; ++i) mean += out[plane * 25 + i];
            mean /= 25;
            for (std::size_t i = 0; i < 25; ++i) sq += std::pow(out[plane * 25 + i] - mean, 2);
            CHECK(std::abs(mean) <= 1e-5);
            CHECK(std::sqrt(sq / 25) == doctest::Approx(1.0).epsilon(1e-3));
        }
    }
    SUBCASE("affine invariance per channel") {
        // eps sits next to the deviation, so invariance holds to O(eps / std).
        const auto x = random_tensor({1, 3, 4, 4}, rng, -5, 5);
        auto y = x;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 16; ++i) y[c * 16 + i] = (1.5 + c) * x[c * 16 + i] - 2.0 + c;
        CHECK(max_diff(norm(Var<double>(x)).value(), norm(Var<double>(y)).value()) <= 1e-5);
    }
}

TEST_CASE("encoder") {
    std::mt19937_64 rng(9);
    ParameterStore<double> store(2);
    TransformerEncoder<double> enc(store, "enc", small_config(4, 2));
    const auto six = rand_var({6, 4, 3, 3}, rng);
    const auto ctx = enc.forward(six);
    CHECK(ctx.frames() == 6);
    CHECK(ctx.heads.size() == 2);
    CHECK(ctx.heads[0].k.shape() == Shape{6, 2, 3, 3});
    const auto again = enc.forward(six);
    CHECK(max_diff(ctx.heads[1].v.value(), again.heads[1].v.value()) == 0.0);
    const auto single = enc.forward(rand_var({1, 4, 3, 3}, rng));
    CHECK(single.frames() == 1);
    CHECK(single.heads[0].v.value().all_finite());
}

TEST_CASE("residual identity: zero sub-layers reduce a block to normalization") {
    std::mt19937_64 rng(10);
    ParameterStore<double> store(3);
    EncoderBlock<double> block(store, "block", small_config(4, 2));
    zero_all(store);
    const auto x = rand_var({3, 4, 4, 4}, rng);
    const auto gamma = Var<double>(Tensor<double>::ones({4})), beta = Var<double>(Tensor<double>::zeros({4}));
    CHECK(max_diff(block.forward(x).value(), ops::channel_spatial_norm(x, gamma, beta).value()) <= 1e-4);
}

TEST_CASE("decoder") {
    std::mt19937_64 rng(11);
    ParameterStore<float> store(4);
    TransformerEncoder<float> enc(store, "enc", small_config(4, 2));
    TransformerDecoder<float> dec(store, "dec", small_config(4, 2));
    const auto ctx = enc.forward(Var<float>(random_tensor({6, 4, 3, 3}, rng).cast<float>()));
    auto targets = random_tensor({3, 4, 3, 3}, rng).cast<float>();
    const auto out = dec.forward(Var<float>(targets), ctx).value();
    CHECK(out.shape() == Shape{3, 4, 3, 3});
    for (std::size_t i = 72; i < 108; ++i) targets[i] += 1.0f; // position 2
    const auto moved = dec.forward(Var<float>(targets), ctx).value();
    CHECK(std::memcmp(out.ptr(), moved.ptr(), 72 * sizeof(float)) == 0);
    CHECK(std::memcmp(out.ptr() + 72, moved.ptr() + 72, 36 * sizeof(float)) != 0);
}

TEST_CASE("attention invariants (property)") {
    for (const auto& v : {checks::attention_row_stochastic(40, 101), checks::attention_shift_invariance(40, 102),
                          checks::attention_causality(40, 103)}) {
        INFO(v.detail);
        CHECK(v.pass);
    }
}

TEST_CASE("incremental decoding equals the masked pass") {
    double err = 1.0;
    const auto v = checks::teacher_forcing(20, 104, &err);
    INFO(v.detail);
    CHECK(v.pass);
    CHECK(err <= 1e-5);
}

TEST_CASE("positional encoding is off by default and bounded when on") {
    CHECK_FALSE(TransformerConfig{}.positional_encoding);
    const auto pe = positional_encoding<float>({5, 4, 2, 2});
    CHECK(pe.shape() == Shape{5, 4, 2, 2});
    for (float v : pe.data()) CHECK(std::abs(v) <= 1.0f);
}
