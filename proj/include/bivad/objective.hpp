#pragma once

#include <vector>

#include "bivad/ops.hpp"

namespace bivad {

/// Normalized 2-D Gaussian, size x size, summing to 1.
struct GaussianWindow {
    std::size_t size = 11;
    double sigma = 1.5;
    std::vector<double> weights; // row-major

    static GaussianWindow make(std::size_t size = 11, double sigma = 1.5);
    double operator()(std::size_t r, std::size_t c) const { return weights[r * size + c]; }
    template <typename T>
    Tensor<T> kernel() const; // [1,1,size,size]
};

template <typename T>
struct LossBreakdown {
    Var<T> ssim_term;
    Var<T> mae_term;
    Var<T> total;
    double lambda = 1.0;
};

// Frames are [C,H,W] (or [H,W]); windows slide over valid positions only
// and every channel is scored separately, then averaged.

/// Mean over window positions of the Gaussian-weighted |x - y|.
template <typename T>
Var<T> local_mae(const Var<T>& x, const Var<T>& y, const GaussianWindow& w);

/// Per-position SSIM, [C,1,H',W'], for dynamic range `range`.
template <typename T>
Var<T> ssim_map(const Var<T>& x, const Var<T>& y, const GaussianWindow& w, double range = 2.0);

/// 1 - mean SSIM.
template <typename T>
Var<T> ssim_loss(const Var<T>& x, const Var<T>& y, const GaussianWindow& w, double range = 2.0);

template <typename T>
LossBreakdown<T> combined_loss(const Var<T>& x, const Var<T>& y, const GaussianWindow& w,
                               double lambda);

/// combined_loss total between the midmost frame and its fused prediction.
double anomaly_score(const Tensor<float>& frame, const Tensor<float>& prediction,
                     const GaussianWindow& w, double lambda);

/// Per-pixel |frame - prediction| averaged over channels and smoothed with
/// the window (zero-padded, same size): [H,W].
Tensor<float> error_map(const Tensor<float>& frame, const Tensor<float>& prediction,
                        const GaussianWindow& w);

/// (s - min) / (max - min); a constant series maps to zeros.
std::vector<double> minmax_normalize(const std::vector<double>& scores);

} // namespace bivad
