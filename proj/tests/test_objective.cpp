#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bivad/objective.hpp"
#include "checks.hpp"
#include "gradcheck.hpp"

using namespace bivad;
using bivad::testing::random_tensor;

namespace {

double scalar(const Var<double>& v) { return v.value()[0]; }

Var<double> frame(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    return Var<double>(random_tensor(shape, rng, lo, hi));
}

Var<double> constant(Shape shape, double v) { return Var<double>(Tensor<double>(shape, v)); }

// Smooth frame with structure so that SSIM reacts to added noise.
Tensor<float> gradient_frame(std::size_t h, std::size_t w) {
    Tensor<float> t({1, h, w});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            t.at({0, r, c}) = std::sin(0.3f * static_cast<float>(r)) * std::cos(0.2f * static_cast<float>(c));
    return t;
}

} // namespace

TEST_CASE("gaussian window") {
    const auto w = GaussianWindow::make(11, 1.5);
    CHECK(std::accumulate(w.weights.begin(), w.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w(0, 3) == doctest::Approx(w(3, 0)));
    CHECK(w(5, 5) > w(5, 4));
    CHECK_THROWS_AS(GaussianWindow::make(10, 1.5), Error);
}

TEST_CASE("identical frames cost nothing") {
    const auto w = checks::micro_window();
    const auto x = frame({2, 9, 9}, 3);
    const auto loss = combined_loss(x, x, w, 1.0);
    CHECK(std::abs(scalar(loss.total)) < 1e-12);
    CHECK(std::abs(scalar(local_mae(x, x, w))) < 1e-15);
}

TEST_CASE("constant frames") {
    const auto w = checks::micro_window();
    const auto a = constant({1, 8, 8}, 0.3), b = constant({1, 8, 8}, -0.2);
    CHECK(scalar(local_mae(a, b, w)) == doctest::Approx(0.5).epsilon(1e-12));
    // Flat frames leave only the luminance term: 1 - C1 / (0.2^2 + C1) with C1 = 0.0004.
    const auto zero = constant({1, 8, 8}, 0.0), fifth = constant({1, 8, 8}, 0.2);
    CHECK(scalar(ssim_loss(zero, fifth, w)) == doctest::Approx(0.990099).epsilon(1e-6));
    CHECK(scalar(combined_loss(zero, fifth, w, 1.0).total) == doctest::Approx(1.190099).epsilon(1e-6));
    CHECK(scalar(ssim_loss(a, b, w)) == doctest::Approx(1.0 - checks::constant_ssim(0.3, -0.2)).epsilon(1e-12));
}

TEST_CASE("ssim properties") {
    const auto w = checks::micro_window();
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto x = frame({2, 10, 10}, 100 + s), y = frame({2, 10, 10}, 200 + s);
        CHECK(std::abs(scalar(ssim_loss(x, y, w)) - scalar(ssim_loss(y, x, w))) <= 1e-7);
        const auto map = ssim_map(x, y, w).value();
        for (std::size_t i = 0; i < map.numel(); ++i) {
            CHECK(map[i] >= -1.0 - 1e-12);
            CHECK(map[i] <= 1.0 + 1e-12);
        }
        const double l = scalar(ssim_loss(x, y, w));
        CHECK(l >= 0.0);
        CHECK(l <= 2.0);
    }
}

TEST_CASE("lambda weighting") {
    const auto w = checks::micro_window();
    const auto x = frame({1, 9, 9}, 5), y = frame({1, 9, 9}, 6);
    const auto zero = combined_loss(x, y, w, 0.0);
    CHECK(scalar(zero.total) == doctest::Approx(scalar(zero.ssim_term)).epsilon(1e-14));
    const auto two = combined_loss(x, y, w, 2.0);
    CHECK(scalar(two.total) ==
          doctest::Approx(scalar(two.ssim_term) + 2.0 * scalar(two.mae_term)).epsilon(1e-12));
}

TEST_CASE("loss gradients") {
    const auto w = checks::micro_window();
    auto x = frame({2, 8, 8}, 11);
    x = Var<double>(x.value(), true);
    const auto y = frame({2, 8, 8}, 12);
    const auto r = testing::grad_check({x}, [&] { return combined_loss(x, y, w, 1.0).total; });
    CHECK(r.max_error < 1e-3);
}

TEST_CASE("anomaly score") {
    const auto w = GaussianWindow::make(11, 1.5);
    const auto f = gradient_frame(24, 24);
    CHECK(anomaly_score(f, f, w, 1.0) == doctest::Approx(0.0).epsilon(1e-6));
    std::mt19937_64 rng(4);
    const auto noise = random_tensor({1, 24, 24}, rng, -1.0, 1.0).cast<float>();
    double previous = 0.0;
    for (float amp : {0.1f, 0.2f, 0.4f}) {
        auto p = f;
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] += amp * noise[i];
        const double s = anomaly_score(f, p, w, 1.0);
        CHECK(s > previous);
        previous = s;
    }
    const Tensor<float> hi({1, 24, 24}, 1.0f), lo({1, 24, 24}, -1.0f);
    CHECK(std::isfinite(anomaly_score(hi, lo, w, 1.0)));
    CHECK(std::isfinite(anomaly_score(hi, hi, w, 1.0)));
}

TEST_CASE("error map") {
    const auto w = GaussianWindow::make(5, 1.5);
    const auto f = gradient_frame(16, 12);
    const auto zero = error_map(f, f, w);
    CHECK(zero.shape() == Shape{16, 12});
    for (std::size_t i = 0; i < zero.numel(); ++i) CHECK(zero[i] == 0.0f);
    auto p = f;
    p.at({0, 8, 6}) += 1.0f;
    const auto m = error_map(f, p, w);
    CHECK(m.at({8, 6}) > m.at({0, 0}));
    CHECK(m.at({8, 6}) > 0.0f);
}

TEST_CASE("min-max normalization") {
    CHECK(minmax_normalize({2, 4, 6}) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(minmax_normalize({5, 5}) == std::vector<double>{0.0, 0.0});
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-3.0, 7.0);
    std::vector<double> s(40);
    for (auto& v : s) v = u(rng);
    const auto n = minmax_normalize(s);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[i] < s[j]) CHECK(n[i] < n[j]);
    const auto again = minmax_normalize(n);
    for (std::size_t i = 0; i < n.size(); ++i) CHECK(again[i] == doctest::Approx(n[i]).epsilon(1e-15));
}

TEST_CASE("objective oracles") {
    const auto v = checks::objective_oracles(20, 17);
    INFO(v.detail);
    CHECK(v.pass);
}
