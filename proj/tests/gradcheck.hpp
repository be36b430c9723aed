#pragma once

// Central finite-difference oracle shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "bivad/autograd.hpp"

namespace bivad::testing {

struct GradCheckResult {
    double max_error = 0.0; // |analytic - numeric| / max(1, |numeric|)
    std::size_t checked = 0;
    std::size_t refined = 0; // probes re-taken at the refine step
    std::string worst;
};

/// Leaves must be requires_grad Vars; `loss` rebuilds the graph from their
/// current values each call. At most `max_entries_per_leaf` entries per leaf
/// are probed (chosen at random when the leaf is larger).
///
/// A difference interval can straddle a breakpoint of leaky_relu or abs, where
/// the central difference is not an estimate of the derivative. A probe whose
/// error exceeds `tolerance` is therefore re-taken once with `refine_h` and
/// must agree there.
inline GradCheckResult grad_check(const std::vector<Var<double>>& leaves,
                                  const std::function<Var<double>()>& loss, double h = 1e-3,
                                  std::size_t max_entries_per_leaf = 0, std::uint64_t seed = 7,
                                  double tolerance = 1e-3, double refine_h = 1e-5) {
    for (const auto& leaf : leaves) leaf.node()->grad = Tensor<double>();
    {
        auto l = loss();
        backward(l);
    }
    std::vector<Tensor<double>> analytic;
    for (const auto& leaf : leaves)
        analytic.push_back(leaf.has_grad() ? leaf.grad() : Tensor<double>::zeros(leaf.shape()));

    auto eval = [&]() {
        NoGradGuard guard;
        return loss().value()[0];
    };

    std::mt19937_64 rng(seed);
    GradCheckResult result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Var<double> leaf = leaves[li];
        const std::size_t n = leaf.numel();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (max_entries_per_leaf && n > max_entries_per_leaf) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries_per_leaf);
        }
        for (auto i : idx) {
            auto central = [&](double step) {
                double& x = leaf.mutable_value()[i];
                const double saved = x;
                x = saved + step;
                const double up = eval();
                x = saved - step;
                const double down = eval();
                x = saved;
                return (up - down) / (2.0 * step);
            };
            auto error_of = [&](double numeric) {
                return std::abs(analytic[li][i] - numeric) / std::max(1.0, std::abs(numeric));
            };
            double numeric = central(h);
            double err = error_of(numeric);
            if (err > tolerance && refine_h > 0.0) {
                numeric = central(refine_h);
                err = error_of(numeric);
                ++result.refined;
            }
            ++result.checked;
            if (err > result.max_error) {
                result.max_error = err;
                result.worst = "leaf " + std::to_string(li) + " entry " + std::to_string(i) +
                               ": analytic " + std::to_string(analytic[li][i]) + " numeric " +
                               std::to_string(numeric);
            }
        }
    }
    for (const auto& leaf : leaves) leaf.node()->grad = Tensor<double>();
    return result;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

} // namespace bivad::testing
