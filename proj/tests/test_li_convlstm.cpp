#include <doctest.h>

#include <cmath>
#include <random>

#include "bivad/li_convlstm.hpp"
#include "checks.hpp"
#include "gradcheck.hpp"

using namespace bivad;
using bivad::testing::random_tensor;

namespace {

Var<double> rand_var(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    return Var<double>(random_tensor(std::move(shape), rng, lo, hi));
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void randomize(ParameterStore<double>& store, std::mt19937_64& rng) {
    for (const auto& p : store.all()) p->mutable_value() = random_tensor(p->shape(), rng, -0.5, 0.5);
}

} // namespace

TEST_CASE("alpha and beta fixed points, ranges and the half-gate case") {
    for (const auto& v : {checks::lstm_fixed_points(), checks::lstm_half_gate(), checks::lstm_gate_ranges(50, 5)}) {
        INFO(v.detail);
        CHECK(v.pass);
    }
}

TEST_CASE("parameter layout") {
    ParameterStore<double> store(1);
    LiConvLstm<double> bridge(store, "bridge", 3, 5);
    const auto alpha = bridge.alpha().parameters();
    const auto beta = bridge.beta().parameters();
    REQUIRE(alpha.size() == 8);
    CHECK(alpha[0]->name() == "bridge.alpha.F.W");
    CHECK(alpha[0]->shape() == Shape{3, 6, 5, 5});  // [H, X_alpha]
    CHECK(beta[3]->name() == "bridge.beta.O.W");
    CHECK(beta[0]->shape() == Shape{3, 9, 5, 5});   // [H, H_alpha, X_beta]
    CHECK(alpha[4]->shape() == Shape{3});
}

TEST_CASE("zeroing the h_alpha slice reduces beta to a plain ConvLSTM step on [H, X_beta]") {
    std::mt19937_64 rng(2);
    ParameterStore<double> store(2);
    LiConvLstm<double> bridge(store, "bridge", 2, 3);
    randomize(store, rng);
    ParameterStore<double> plain_store(3);
    ConvLstmCell<double> plain(plain_store, "plain", 2, 1, 3);
    const auto beta = bridge.beta().parameters();
    const auto ref = plain.parameters();
    for (std::size_t g = 0; g < 4; ++g) {
        auto& w = beta[g]->mutable_value();
        auto& r = ref[g]->mutable_value();
        for (std::size_t o = 0; o < 2; ++o)
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t k = 0; k < 9; ++k) {
                    double& src = w.at({o, i, k / 3, k % 3});
                    if (i >= 2 && i < 4) src = 0.0;  // h_alpha slice
                    else r.at({o, i < 2 ? i : i - 2, k / 3, k % 3}) = src;
                }
        ref[g + 4]->mutable_value() = beta[g + 4]->value();
    }
    const LstmState<double> s{rand_var({2, 3, 3}, rng), rand_var({2, 3, 3}, rng)};
    const auto x = rand_var({2, 3, 3}, rng);
    const auto got = bridge.beta_step(s, rand_var({2, 3, 3}, rng), x);
    const auto want = plain.step(s, {x});
    CHECK(max_diff(got.h.value(), want.h.value()) < 1e-12);
    CHECK(max_diff(got.c.value(), want.c.value()) < 1e-12);
}

TEST_CASE("beta is sensitive to h_alpha") {
    std::mt19937_64 rng(4);
    ParameterStore<double> store(4);
    LiConvLstm<double> bridge(store, "bridge", 2, 3);
    randomize(store, rng);
    const LstmState<double> s{rand_var({2, 3, 3}, rng), rand_var({2, 3, 3}, rng)};
    const auto ha = random_tensor({2, 3, 3}, rng), dir = random_tensor({2, 3, 3}, rng);
    const auto x = rand_var({2, 3, 3}, rng);
    const double h = 1e-4;
    auto shifted = [&](double t) {
        auto v = ha;
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] += t * dir[i];
        return bridge.beta_step(s, Var<double>(v), x).h.value();
    };
    const auto up = shifted(h), down = shifted(-h);
    double norm = 0;
    for (std::size_t i = 0; i < up.numel(); ++i) norm += std::pow((up[i] - down[i]) / (2 * h), 2);
    CHECK(std::sqrt(norm) > 1e-3);
}

TEST_CASE("sequences") {
    std::mt19937_64 rng(5);
    ParameterStore<double> store(5);
    LiConvLstm<double> bridge(store, "bridge", 2, 3);
    randomize(store, rng);
    SUBCASE("length one is one alpha step then one beta step from zero") {
        const auto tap = rand_var({2, 4, 4}, rng), mid = rand_var({2, 4, 4}, rng);
        const auto zero = LstmState<double>::zeros(2, 4, 4);
        const auto a = bridge.alpha_step(zero, tap);
        const auto b = bridge.beta_step(zero, a.h, mid);
        const auto seq = bridge.sequence({tap}, {mid});
        REQUIRE(seq.size() == 1);
        CHECK(max_diff(seq[0].value(), b.h.value()) == 0.0);
    }
    SUBCASE("states carry across steps") {
        const auto tap = rand_var({2, 4, 4}, rng), mid = rand_var({2, 4, 4}, rng);
        const auto seq = bridge.sequence({tap, tap}, {mid, mid});
        CHECK(max_diff(seq[0].value(), seq[1].value()) > 1e-6);
    }
    SUBCASE("mismatched lengths are rejected") {
        CHECK_THROWS_AS(bridge.sequence({rand_var({2, 4, 4}, rng)}, {}), Error);
    }
    SUBCASE("recurrence causality") {
        const auto v = checks::lstm_causality(30, 6);
        INFO(v.detail);
        CHECK(v.pass);
    }
}

TEST_CASE("full-scale bridge shapes") {
    ParameterStore<float> store(1);
    LiConvLstm<float> bridge(store, "bridge", 16, 5);
    NoGradGuard guard;
    const Var<float> tap(Tensor<float>({16, 256, 256}, 0.1f)), mid(Tensor<float>({16, 256, 256}, -0.1f));
    const auto out = bridge.sequence({tap}, {mid});
    CHECK(out[0].shape() == Shape{16, 256, 256});
}
