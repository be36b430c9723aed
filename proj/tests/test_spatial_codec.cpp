#include <doctest.h>

#include <random>

#include "bivad/pipeline.hpp"
#include "checks.hpp"
#include "gradcheck.hpp"

using namespace bivad;
using bivad::testing::random_tensor;

namespace {

CodecConfig codec_config(std::size_t ch1, std::size_t ch2, std::size_t feat) {
    CodecConfig c;
    c.ch1 = ch1;
    c.ch2 = ch2;
    c.ch_feat = feat;
    return c;
}

bool all_zero(const Var<float>& v) {
    for (float x : v.value().data())
        if (x != 0.0f) return false;
    return true;
}

} // namespace

TEST_CASE("full-scale shapes") {
    ParameterStore<float> store(1);
    SpatialCodec<float> codec(codec_config(16, 32, 64), store);
    NoGradGuard guard;
    const auto enc = codec.encode(Var<float>(Tensor<float>({1, 1, 256, 256}, 0.3f)));
    CHECK(enc.tap.shape() == Shape{1, 16, 256, 256});
    CHECK(enc.features.shape() == Shape{1, 64, 64, 64});
    const auto mid = codec.decode_mid(enc.features);
    CHECK(mid.shape() == Shape{1, 16, 256, 256});
    CHECK(codec.decode(enc.features, mid).shape() == Shape{1, 1, 256, 256});
}

TEST_CASE("desk-scale shapes") {
    ParameterStore<float> store(1);
    SpatialCodec<float> codec(codec_config(8, 16, 16), store);
    const auto enc = codec.encode(Var<float>(Tensor<float>({2, 1, 64, 64}, 0.3f)));
    CHECK(enc.tap.shape() == Shape{2, 8, 64, 64});
    CHECK(enc.features.shape() == Shape{2, 16, 16, 16});
}

TEST_CASE("zero inputs with zero biases give zeros") {
    ParameterStore<float> store(1);
    SpatialCodec<float> codec(codec_config(4, 6, 8), store);
    const auto enc = codec.encode(Var<float>(Tensor<float>({1, 1, 16, 16}, 0.0f)));
    CHECK(all_zero(enc.tap));
    CHECK(all_zero(enc.features));
    const auto frame = codec.decode(Var<float>(Tensor<float>({1, 8, 4, 4}, 0.0f)),
                                    Var<float>(Tensor<float>({1, 4, 16, 16}, 0.0f)));
    CHECK(all_zero(frame));
}

TEST_CASE("shape round trip over random valid configurations") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 12; ++trial) {
        std::uniform_int_distribution<std::size_t> ch(1, 5), quarter(1, 4);
        auto cfg = codec_config(ch(rng), ch(rng), ch(rng));
        cfg.image_channels = trial % 2 ? 3 : 1;
        cfg.kernel = trial % 3 ? 3 : 5;
        ParameterStore<float> store(trial);
        SpatialCodec<float> codec(cfg, store);
        const Shape shape{2, cfg.image_channels, 4 * quarter(rng), 4 * quarter(rng)};
        const auto x = Var<float>(random_tensor(shape, rng).cast<float>());
        const auto enc = codec.encode(x);
        const auto out = codec.decode(enc.features, codec.decode_mid(enc.features));
        CHECK(out.shape() == shape);
        for (float v : out.value().data()) CHECK((v > -1.0f && v < 1.0f));
    }
}

TEST_CASE("stateless across frames") {
    std::mt19937_64 rng(4);
    ParameterStore<float> store(2);
    SpatialCodec<float> codec(codec_config(3, 4, 5), store);
    const auto a = random_tensor({1, 1, 8, 8}, rng).cast<float>(), b = random_tensor({1, 1, 8, 8}, rng).cast<float>();
    const auto joint = codec.encode(ops::concat<float>({Var<float>(a), Var<float>(b)}, 0));
    const auto solo = codec.encode(Var<float>(b));
    for (std::size_t i = 0; i < solo.features.numel(); ++i)
        CHECK(joint.features.value()[solo.features.numel() + i] == doctest::Approx(solo.features.value()[i]).epsilon(1e-6));
}

TEST_CASE("invalid inputs") {
    ParameterStore<float> store(1);
    SpatialCodec<float> codec(codec_config(2, 2, 2), store);
    CHECK_THROWS_AS(codec.encode(Var<float>(Tensor<float>({1, 1, 6, 8}))), Error);
    CHECK_THROWS_AS(codec.encode(Var<float>(Tensor<float>({1, 2, 8, 8}))), Error);
}

TEST_CASE("full-scale parameter budget and tensor sizes") {
    std::size_t count = 0;
    const auto v = checks::full_scale_audit(false, &count);
    INFO(v.detail);
    CHECK(v.pass);
    CHECK(count == doctest::Approx(8.5e6).epsilon(0.2));
}
