#include "bivad/objective.hpp"

#include <algorithm>
#include <cmath>

namespace bivad {

GaussianWindow GaussianWindow::make(std::size_t size, double sigma) {
    require(size % 2 == 1, ErrorCode::invalid_argument, "Gaussian window size must be odd");
    require(sigma > 0.0, ErrorCode::invalid_argument, "Gaussian sigma must be positive");
    GaussianWindow w;
    w.size = size;
    w.sigma = sigma;
    std::vector<double> g(size);
    const double mid = static_cast<double>(size / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - mid;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (auto& v : g) v /= total;
    w.weights.resize(size * size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) w.weights[r * size + c] = g[r] * g[c];
    return w;
}

template <typename T>
Tensor<T> GaussianWindow::kernel() const {
    Tensor<T> k({1, 1, size, size});
    for (std::size_t i = 0; i < weights.size(); ++i) k[i] = static_cast<T>(weights[i]);
    return k;
}

namespace {

// [C,H,W] or [H,W] -> [C,1,H,W] so channels are filtered independently.
template <typename T>
Var<T> as_planes(const Var<T>& x) {
    const auto& s = x.shape();
    require(s.size() == 2 || s.size() == 3, ErrorCode::invalid_argument,
            "frames must be [C,H,W] or [H,W], got " + shape_str(s));
    if (s.size() == 2) return ops::reshape(x, {1, 1, s[0], s[1]});
    return ops::reshape(x, {s[0], 1, s[1], s[2]});
}

template <typename T>
void require_pair(const Var<T>& x, const Var<T>& y, const char* what) {
    require(x.shape() == y.shape(), ErrorCode::invalid_argument,
            std::string(what) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                shape_str(y.shape()));
}

template <typename T>
Var<T> filter(const Var<T>& planes, const GaussianWindow& w) {
    return ops::conv2d<T>(planes, Var<T>(w.kernel<T>()), std::nullopt, 1, Padding::valid);
}

} // namespace

template <typename T>
Var<T> local_mae(const Var<T>& x, const Var<T>& y, const GaussianWindow& w) {
    require_pair(x, y, "local_mae");
    return ops::mean(filter(as_planes(ops::abs(ops::sub(x, y))), w));
}

template <typename T>
Var<T> ssim_map(const Var<T>& x, const Var<T>& y, const GaussianWindow& w, double range) {
    require_pair(x, y, "ssim");
    const T c1 = static_cast<T>((0.01 * range) * (0.01 * range));
    const T c2 = static_cast<T>((0.03 * range) * (0.03 * range));
    const auto px = as_planes(x), py = as_planes(y);
    const std::size_t c = px.dim(0);
    // All five local moments in one filtering pass.
    const auto moments =
        filter(ops::concat<T>({px, py, ops::mul(px, px), ops::mul(py, py), ops::mul(px, py)}, 0), w);
    auto part = [&](std::size_t i) { return ops::slice(moments, 0, i * c, (i + 1) * c); };
    const auto mx = part(0), my = part(1);
    const auto mxx = ops::mul(mx, mx), myy = ops::mul(my, my), mxy = ops::mul(mx, my);
    const auto vx = ops::sub(part(2), mxx), vy = ops::sub(part(3), myy), cov = ops::sub(part(4), mxy);
    const auto num = ops::mul(ops::add_scalar(ops::scale(mxy, T(2)), c1),
                              ops::add_scalar(ops::scale(cov, T(2)), c2));
    const auto den = ops::mul(ops::add_scalar(ops::add(mxx, myy), c1),
                              ops::add_scalar(ops::add(vx, vy), c2));
    return ops::div(num, den);
}

template <typename T>
Var<T> ssim_loss(const Var<T>& x, const Var<T>& y, const GaussianWindow& w, double range) {
    return ops::add_scalar(ops::scale(ops::mean(ssim_map(x, y, w, range)), T(-1)), T(1));
}

template <typename T>
LossBreakdown<T> combined_loss(const Var<T>& x, const Var<T>& y, const GaussianWindow& w,
                               double lambda) {
    require(lambda >= 0.0, ErrorCode::invalid_argument, "lambda must be non-negative");
    LossBreakdown<T> out;
    out.lambda = lambda;
    out.ssim_term = ssim_loss(x, y, w);
    out.mae_term = local_mae(x, y, w);
    out.total = lambda == 0.0 ? out.ssim_term
                              : ops::add(out.ssim_term, ops::scale(out.mae_term, static_cast<T>(lambda)));
    return out;
}

double anomaly_score(const Tensor<float>& frame, const Tensor<float>& prediction,
                     const GaussianWindow& w, double lambda) {
    NoGradGuard guard;
    const auto x = Var<double>(frame.cast<double>());
    const auto y = Var<double>(prediction.cast<double>());
    return combined_loss(x, y, w, lambda).total.value()[0];
}

Tensor<float> error_map(const Tensor<float>& frame, const Tensor<float>& prediction,
                        const GaussianWindow& w) {
    require(frame.shape() == prediction.shape() && frame.rank() == 3, ErrorCode::invalid_argument,
            "error_map needs matching [C,H,W] frames");
    const std::size_t c = frame.dim(0), h = frame.dim(1), wd = frame.dim(2);
    Tensor<float> diff({1, 1, h, wd});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * wd; ++i)
            diff[i] += std::abs(frame[ch * h * wd + i] - prediction[ch * h * wd + i]) /
                       static_cast<float>(c);
    NoGradGuard guard;
    auto out = ops::conv2d<float>(Var<float>(std::move(diff)), Var<float>(w.kernel<float>()),
                                  std::nullopt, 1, Padding::same);
    return out.value().reshaped({h, wd});
}

std::vector<double> minmax_normalize(const std::vector<double>& scores) {
    require(!scores.empty(), ErrorCode::invalid_argument, "cannot normalize an empty series");
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double min = *lo, span = *hi - *lo;
    std::vector<double> out(scores.size(), 0.0);
    if (span > 0.0)
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - min) / span;
    return out;
}

#define BIVAD_INSTANTIATE(T)                                                                       \
    template Tensor<T> GaussianWindow::kernel<T>() const;                                          \
    template Var<T> local_mae(const Var<T>&, const Var<T>&, const GaussianWindow&);                \
    template Var<T> ssim_map(const Var<T>&, const Var<T>&, const GaussianWindow&, double);         \
    template Var<T> ssim_loss(const Var<T>&, const Var<T>&, const GaussianWindow&, double);        \
    template LossBreakdown<T> combined_loss(const Var<T>&, const Var<T>&, const GaussianWindow&,   \
                                            double);

BIVAD_INSTANTIATE(float)
BIVAD_INSTANTIATE(double)

} // namespace bivad
