#include "bivad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blas.hpp"

namespace bivad {

AxisGeometry conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
    AxisGeometry g;
    g.in = in;
    if (padding == Padding::valid) {
        require(in >= kernel, ErrorCode::invalid_argument,
                "valid convolution needs extent >= kernel (" + std::to_string(in) + " < " +
                    std::to_string(kernel) + ")");
        g.out = (in - kernel) / stride + 1;
        g.pad_before = 0;
    } else {
        g.out = (in + stride - 1) / stride;
        const std::ptrdiff_t total =
            static_cast<std::ptrdiff_t>((g.out - 1) * stride + kernel) - static_cast<std::ptrdiff_t>(in);
        g.pad_before = static_cast<std::size_t>(std::max<std::ptrdiff_t>(total, 0) / 2);
    }
    return g;
}

std::vector<double> softmax_vec(const std::vector<double>& scores) {
    require(!scores.empty(), ErrorCode::invalid_argument, "softmax of an empty vector");
    for (double s : scores)
        require(std::isfinite(s), ErrorCode::numeric_error, "softmax input is not finite");
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

namespace ops {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    require(a.shape() == b.shape(), ErrorCode::invalid_argument,
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
    require(t.all_finite(), ErrorCode::numeric_error, std::string(op) + ": non-finite input");
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
    Tensor<T> out(x.shape());
    const T* src = x.ptr();
    T* dst = out.ptr();
    for (std::size_t i = 0, n = x.numel(); i < n; ++i) dst[i] = f(src[i]);
    return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
    Tensor<T> out(a.shape());
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* dst = out.ptr();
    for (std::size_t i = 0, n = a.numel(); i < n; ++i) dst[i] = f(pa[i], pb[i]);
    return out;
}

struct Dims4 {
    std::size_t n, c, h, w;
};

template <typename T>
Dims4 image_dims(const Tensor<T>& x, const char* op) {
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
    require(x.rank() == 4, ErrorCode::invalid_argument,
            std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
    return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

// Column buffer layout: row (c*k + ki)*k + kj, column oy*out_w + ox.
template <typename T>
void im2col(const T* src, std::size_t channels, const AxisGeometry& gh, const AxisGeometry& gw,
            std::size_t k, std::size_t stride, T* col) {
    const auto in_h = static_cast<std::ptrdiff_t>(gh.in);
    const auto in_w = static_cast<std::ptrdiff_t>(gw.in);
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const std::size_t cols = gh.out * gw.out;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = src + c * gh.in * gw.in;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                T* row = col + ((c * k + ki) * k + kj) * cols;
                const auto off_x = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(gw.pad_before);
                // Valid ox range: 0 <= ox*s + off_x < in_w.
                std::ptrdiff_t lo = off_x >= 0 ? 0 : (-off_x + s - 1) / s;
                std::ptrdiff_t hi = (in_w - 1 - off_x) >= 0 ? (in_w - 1 - off_x) / s + 1 : 0;
                lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(gw.out));
                hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(gw.out));
                for (std::size_t oy = 0; oy < gh.out; ++oy) {
                    T* dst = row + oy * gw.out;
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s +
                                              static_cast<std::ptrdiff_t>(ki) -
                                              static_cast<std::ptrdiff_t>(gh.pad_before);
                    if (iy < 0 || iy >= in_h) {
                        std::fill(dst, dst + gw.out, T{0});
                        continue;
                    }
                    const T* line = plane + iy * in_w;
                    std::fill(dst, dst + lo, T{0});
                    if (s == 1) {
                        std::copy(line + lo + off_x, line + hi + off_x, dst + lo);
                    } else {
                        for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox] = line[ox * s + off_x];
                    }
                    std::fill(dst + hi, dst + gw.out, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, std::size_t channels, const AxisGeometry& gh, const AxisGeometry& gw,
            std::size_t k, std::size_t stride, T* dst_image) {
    const auto in_h = static_cast<std::ptrdiff_t>(gh.in);
    const auto in_w = static_cast<std::ptrdiff_t>(gw.in);
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const std::size_t cols = gh.out * gw.out;
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = dst_image + c * gh.in * gw.in;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const T* row = col + ((c * k + ki) * k + kj) * cols;
                const auto off_x = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(gw.pad_before);
                std::ptrdiff_t lo = off_x >= 0 ? 0 : (-off_x + s - 1) / s;
                std::ptrdiff_t hi = (in_w - 1 - off_x) >= 0 ? (in_w - 1 - off_x) / s + 1 : 0;
                lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(gw.out));
                hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(gw.out));
                for (std::size_t oy = 0; oy < gh.out; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s +
                                              static_cast<std::ptrdiff_t>(ki) -
                                              static_cast<std::ptrdiff_t>(gh.pad_before);
                    if (iy < 0 || iy >= in_h) continue;
                    const T* src = row + oy * gw.out;
                    T* line = plane + iy * in_w;
                    for (std::ptrdiff_t ox = lo; ox < hi; ++ox) line[ox * s + off_x] += src[ox];
                }
            }
        }
    }
}

template <typename T>
Shape with_batch(const Dims4& d, bool batched, std::size_t c, std::size_t h, std::size_t w) {
    if (batched) return {d.n, c, h, w};
    return {c, h, w};
}

} // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "add");
    auto out = zip(a.value(), b.value(), [](T x, T y) { return x + y; });
    return Var<T>::make(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        accumulate_grad(a, g);
        accumulate_grad(b, g);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "sub");
    auto out = zip(a.value(), b.value(), [](T x, T y) { return x - y; });
    return Var<T>::make(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        accumulate_grad(a, g);
        if (b.requires_grad()) accumulate_grad(b, map(g, [](T v) { return -v; }));
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "mul");
    auto out = zip(a.value(), b.value(), [](T x, T y) { return x * y; });
    return Var<T>::make(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a.requires_grad()) accumulate_grad(a, zip(g, b.value(), [](T u, T v) { return u * v; }));
        if (b.requires_grad()) accumulate_grad(b, zip(g, a.value(), [](T u, T v) { return u * v; }));
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "div");
    auto out = zip(a.value(), b.value(), [](T x, T y) { return x / y; });
    return Var<T>::make(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a.requires_grad()) accumulate_grad(a, zip(g, b.value(), [](T u, T v) { return u / v; }));
        if (b.requires_grad()) {
            Tensor<T> gb(g.shape());
            const T* pa = a.value().ptr();
            const T* pb = b.value().ptr();
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] = -g[i] * pa[i] / (pb[i] * pb[i]);
            accumulate_grad(b, gb);
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    auto out = map(a.value(), [factor](T x) { return x * factor; });
    return Var<T>::make(std::move(out), {a}, [a, factor](const Tensor<T>& g) {
        accumulate_grad(a, map(g, [factor](T v) { return v * factor; }));
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T value) {
    auto out = map(a.value(), [value](T x) { return x + value; });
    return Var<T>::make(std::move(out), {a}, [a](const Tensor<T>& g) { accumulate_grad(a, g); });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
    auto out = map(a.value(), [](T x) { return std::abs(x); });
    return Var<T>::make(std::move(out), {a}, [a](const Tensor<T>& g) {
        accumulate_grad(a, zip(g, a.value(), [](T u, T x) {
                            return x > T{0} ? u : (x < T{0} ? -u : T{0});
                        }));
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    auto out = map(x.value(), [slope](T v) { return v > T{0} ? v : slope * v; });
    return Var<T>::make(std::move(out), {x}, [x, slope](const Tensor<T>& g) {
        accumulate_grad(x, zip(g, x.value(), [slope](T u, T v) { return v > T{0} ? u : slope * u; }));
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    auto out = map(x.value(), [](T v) { return T{1} / (T{1} + std::exp(-v)); });
    Tensor<T> y = out;
    return Var<T>::make(std::move(out), {x}, [x, y](const Tensor<T>& g) {
        accumulate_grad(x, zip(g, y, [](T u, T s) { return u * s * (T{1} - s); }));
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    auto out = map(x.value(), [](T v) { return std::tanh(v); });
    Tensor<T> y = out;
    return Var<T>::make(std::move(out), {x}, [x, y](const Tensor<T>& g) {
        accumulate_grad(x, zip(g, y, [](T u, T t) { return u * (T{1} - t * t); }));
    });
}

template <typename T>
Var<T> activation(const Activation& act, const Var<T>& x) {
    switch (act.kind) {
    case ActivationKind::leaky_relu:
        require(act.slope > 0.0 && act.slope < 1.0, ErrorCode::invalid_argument,
                "leaky_relu slope must lie in (0,1)");
        return leaky_relu(x, static_cast<T>(act.slope));
    case ActivationKind::sigmoid: return sigmoid(x);
    case ActivationKind::tanh: return tanh(x);
    }
    fail(ErrorCode::invalid_argument, "unknown activation");
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    T total{0};
    for (T v : x.value().data()) total += v;
    return Var<T>::make(Tensor<T>({1}, total), {x}, [x](const Tensor<T>& g) {
        accumulate_grad(x, Tensor<T>::full(x.shape(), g[0]));
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    const auto n = static_cast<T>(x.numel());
    return scale(sum(x), T{1} / n);
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    auto out = x.value().reshaped(std::move(shape));
    return Var<T>::make(std::move(out), {x}, [x](const Tensor<T>& g) {
        accumulate_grad(x, g.reshaped(x.shape()));
    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
    require(!parts.empty(), ErrorCode::invalid_argument, "concat of zero tensors");
    const Shape& ref = parts.front().shape();
    require(axis < ref.size(), ErrorCode::invalid_argument, "concat axis out of range");
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i)
            if (i != axis && s[i] != ref[i]) ok = false;
        require(ok, ErrorCode::invalid_argument,
                "concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(s));
        total_axis += s[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = total_axis;
    Tensor<T> out(out_shape);
    const std::size_t out_row = total_axis * inner;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t row = p.shape()[axis] * inner;
        const T* src = p.value().ptr();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(src + o * row, src + (o + 1) * row, out.ptr() + o * out_row + offset);
        offset += row;
    }
    return Var<T>::make(std::move(out), parts, [parts, outer, out_row](const Tensor<T>& g) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t row = p.numel() / outer;
            if (p.requires_grad()) {
                Tensor<T> gp(p.shape());
                for (std::size_t o = 0; o < outer; ++o)
                    std::copy(g.ptr() + o * out_row + off, g.ptr() + o * out_row + off + row,
                              gp.ptr() + o * row);
                accumulate_grad(p, gp);
            }
            off += row;
        }
    });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    require(axis < s.size() && begin < end && end <= s[axis], ErrorCode::invalid_argument,
            "slice bounds out of range for " + shape_str(s));
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const std::size_t in_row = s[axis] * inner;
    const std::size_t out_row = (end - begin) * inner;
    const std::size_t off = begin * inner;
    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(x.value().ptr() + o * in_row + off, x.value().ptr() + o * in_row + off + out_row,
                  out.ptr() + o * out_row);
    return Var<T>::make(std::move(out), {x}, [x, outer, in_row, out_row, off](const Tensor<T>& g) {
        Tensor<T> gx(x.shape());
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(g.ptr() + o * out_row, g.ptr() + (o + 1) * out_row, gx.ptr() + o * in_row + off);
        accumulate_grad(x, gx);
    });
}

template <typename T>
Var<T> stack(const std::vector<Var<T>>& items) {
    require(!items.empty(), ErrorCode::invalid_argument, "stack of zero tensors");
    std::vector<Var<T>> lifted;
    lifted.reserve(items.size());
    for (const auto& it : items) {
        Shape s = it.shape();
        s.insert(s.begin(), 1);
        lifted.push_back(reshape(it, s));
    }
    return concat(lifted, 0);
}

template <typename T>
Var<T> select(const Var<T>& x, std::size_t index) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    return reshape(slice(x, 0, index, index + 1), s);
}

template <typename T>
std::vector<Var<T>> unstack(const Var<T>& x) {
    std::vector<Var<T>> out;
    out.reserve(x.dim(0));
    for (std::size_t i = 0; i < x.dim(0); ++i) out.push_back(select(x, i));
    return out;
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
    require(a.value().rank() == 2 && b.value().rank() == 2, ErrorCode::invalid_argument,
            "matmul expects rank-2 operands");
    const int ra = static_cast<int>(a.dim(0)), ca = static_cast<int>(a.dim(1));
    const int rb = static_cast<int>(b.dim(0)), cb = static_cast<int>(b.dim(1));
    const int m = ta ? ca : ra;
    const int k = ta ? ra : ca;
    const int kb = tb ? cb : rb;
    const int n = tb ? rb : cb;
    require(k == kb, ErrorCode::invalid_argument,
            "matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor<T> out({static_cast<std::size_t>(m), static_cast<std::size_t>(n)});
    detail::gemm(ta, tb, m, n, k, T{1}, a.value().ptr(), ca, b.value().ptr(), cb, T{0}, out.ptr(), n);
    return Var<T>::make(std::move(out), {a, b}, [=](const Tensor<T>& g) {
        if (a.requires_grad()) {
            Tensor<T> ga(a.shape());
            if (!ta)
                detail::gemm(false, !tb, m, k, n, T{1}, g.ptr(), n, b.value().ptr(), cb, T{0},
                             ga.ptr(), ca);
            else
                detail::gemm(tb, true, k, m, n, T{1}, b.value().ptr(), cb, g.ptr(), n, T{0},
                             ga.ptr(), ca);
            accumulate_grad(a, ga);
        }
        if (b.requires_grad()) {
            Tensor<T> gb(b.shape());
            if (!tb)
                detail::gemm(!ta, false, k, n, m, T{1}, a.value().ptr(), ca, g.ptr(), n, T{0},
                             gb.ptr(), cb);
            else
                detail::gemm(true, ta, n, k, m, T{1}, g.ptr(), n, a.value().ptr(), ca, T{0},
                             gb.ptr(), cb);
            accumulate_grad(b, gb);
        }
    });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    require(x.value().rank() == 2, ErrorCode::invalid_argument, "softmax_rows expects rank 2");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.value().ptr() + r * cols;
        T* dst = y.ptr() + r * cols;
        const T mx = *std::max_element(src, src + cols);
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(src[c] - mx);
            total += dst[c];
        }
        for (std::size_t c = 0; c < cols; ++c) dst[c] /= total;
    }
    Tensor<T> saved = y;
    return Var<T>::make(std::move(y), {x}, [x, saved, rows, cols](const Tensor<T>& g) {
        Tensor<T> gx(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = saved.ptr() + r * cols;
            const T* gr = g.ptr() + r * cols;
            T dot{0};
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] = yr[c] * (gr[c] - dot);
        }
        accumulate_grad(x, gx);
    });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias,
              std::size_t stride, Padding padding) {
    const Dims4 d = image_dims(x.value(), "conv2d");
    const bool batched = x.value().rank() == 4;
    require(kernel.value().rank() == 4, ErrorCode::invalid_argument, "conv2d kernel must be rank 4");
    const std::size_t cout = kernel.dim(0), cin = kernel.dim(1), k = kernel.dim(2);
    require(kernel.dim(3) == k, ErrorCode::invalid_argument, "conv2d kernel must be square");
    require(k % 2 == 1, ErrorCode::invalid_argument, "conv2d kernel size must be odd");
    require(stride == 1 || stride == 2, ErrorCode::invalid_argument, "conv2d stride must be 1 or 2");
    require(cin == d.c, ErrorCode::invalid_argument,
            "conv2d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                shape_str(kernel.shape()));
    if (bias)
        require(bias->shape() == Shape{cout}, ErrorCode::invalid_argument, "conv2d bias must be [C_out]");
    require_finite(x.value(), "conv2d");
    require_finite(kernel.value(), "conv2d");

    const AxisGeometry gh = conv_axis(d.h, k, stride, padding);
    const AxisGeometry gw = conv_axis(d.w, k, stride, padding);
    const std::size_t ckk = cin * k * k;
    const std::size_t pix = gh.out * gw.out;
    Tensor<T> out(with_batch<T>(d, batched, cout, gh.out, gw.out));
    std::vector<T> col(ckk * pix);
    for (std::size_t n = 0; n < d.n; ++n) {
        im2col(x.value().ptr() + n * d.c * d.h * d.w, cin, gh, gw, k, stride, col.data());
        T* dst = out.ptr() + n * cout * pix;
        detail::gemm(false, false, static_cast<int>(cout), static_cast<int>(pix), static_cast<int>(ckk),
                     T{1}, kernel.value().ptr(), static_cast<int>(ckk), col.data(),
                     static_cast<int>(pix), T{0}, dst, static_cast<int>(pix));
        if (bias) {
            const T* b = bias->value().ptr();
            for (std::size_t c = 0; c < cout; ++c)
                for (std::size_t p = 0; p < pix; ++p) dst[c * pix + p] += b[c];
        }
    }

    std::vector<Var<T>> inputs{x, kernel};
    if (bias) inputs.push_back(*bias);
    return Var<T>::make(std::move(out), inputs, [=](const Tensor<T>& g) {
        std::vector<T> buf(ckk * pix);
        Tensor<T> gx;
        if (x.requires_grad()) gx = Tensor<T>(x.shape());
        Tensor<T> gk;
        if (kernel.requires_grad()) gk = Tensor<T>(kernel.shape());
        for (std::size_t n = 0; n < d.n; ++n) {
            const T* gn = g.ptr() + n * cout * pix;
            if (kernel.requires_grad()) {
                im2col(x.value().ptr() + n * d.c * d.h * d.w, cin, gh, gw, k, stride, buf.data());
                detail::gemm(false, true, static_cast<int>(cout), static_cast<int>(ckk),
                             static_cast<int>(pix), T{1}, gn, static_cast<int>(pix), buf.data(),
                             static_cast<int>(pix), T{1}, gk.ptr(), static_cast<int>(ckk));
            }
            if (x.requires_grad()) {
                detail::gemm(true, false, static_cast<int>(ckk), static_cast<int>(pix),
                             static_cast<int>(cout), T{1}, kernel.value().ptr(), static_cast<int>(ckk),
                             gn, static_cast<int>(pix), T{0}, buf.data(), static_cast<int>(pix));
                col2im(buf.data(), cin, gh, gw, k, stride, gx.ptr() + n * d.c * d.h * d.w);
            }
        }
        if (x.requires_grad()) accumulate_grad(x, gx);
        if (kernel.requires_grad()) accumulate_grad(kernel, gk);
        if (bias && bias->requires_grad()) {
            Tensor<T> gb({cout});
            for (std::size_t n = 0; n < d.n; ++n)
                for (std::size_t c = 0; c < cout; ++c) {
                    const T* gp = g.ptr() + (n * cout + c) * pix;
                    T acc{0};
                    for (std::size_t p = 0; p < pix; ++p) acc += gp[p];
                    gb[c] += acc;
                }
            accumulate_grad(*bias, gb);
        }
    });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias,
                        std::size_t stride) {
    const Dims4 d = image_dims(x.value(), "conv_transpose2d");
    const bool batched = x.value().rank() == 4;
    require(kernel.value().rank() == 4, ErrorCode::invalid_argument,
            "conv_transpose2d kernel must be rank 4");
    const std::size_t cin = kernel.dim(0), cout = kernel.dim(1), k = kernel.dim(2);
    require(kernel.dim(3) == k, ErrorCode::invalid_argument, "conv_transpose2d kernel must be square");
    require(stride == 1 || stride == 2, ErrorCode::invalid_argument,
            "conv_transpose2d stride must be 1 or 2");
    require(cin == d.c, ErrorCode::invalid_argument,
            "conv_transpose2d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                shape_str(kernel.shape()));
    if (bias)
        require(bias->shape() == Shape{cout}, ErrorCode::invalid_argument,
                "conv_transpose2d bias must be [C_out]");
    require_finite(x.value(), "conv_transpose2d");
    require_finite(kernel.value(), "conv_transpose2d");

    const std::size_t out_h = d.h * stride, out_w = d.w * stride;
    const AxisGeometry gh = conv_axis(out_h, k, stride, Padding::same);
    const AxisGeometry gw = conv_axis(out_w, k, stride, Padding::same);
    const std::size_t ckk = cout * k * k;
    const std::size_t pix = d.h * d.w; // == gh.out * gw.out
    const std::size_t out_pix = out_h * out_w;
    Tensor<T> out(with_batch<T>(d, batched, cout, out_h, out_w));
    std::vector<T> col(ckk * pix);
    for (std::size_t n = 0; n < d.n; ++n) {
        detail::gemm(true, false, static_cast<int>(ckk), static_cast<int>(pix), static_cast<int>(cin),
                     T{1}, kernel.value().ptr(), static_cast<int>(ckk),
                     x.value().ptr() + n * cin * pix, static_cast<int>(pix), T{0}, col.data(),
                     static_cast<int>(pix));
        T* dst = out.ptr() + n * cout * out_pix;
        col2im(col.data(), cout, gh, gw, k, stride, dst);
        if (bias) {
            const T* b = bias->value().ptr();
            for (std::size_t c = 0; c < cout; ++c)
                for (std::size_t p = 0; p < out_pix; ++p) dst[c * out_pix + p] += b[c];
        }
    }

    std::vector<Var<T>> inputs{x, kernel};
    if (bias) inputs.push_back(*bias);
    return Var<T>::make(std::move(out), inputs, [=](const Tensor<T>& g) {
        std::vector<T> buf(ckk * pix);
        Tensor<T> gx;
        if (x.requires_grad()) gx = Tensor<T>(x.shape());
        Tensor<T> gk;
        if (kernel.requires_grad()) gk = Tensor<T>(kernel.shape());
        for (std::size_t n = 0; n < d.n; ++n) {
            im2col(g.ptr() + n * cout * out_pix, cout, gh, gw, k, stride, buf.data());
            if (x.requires_grad())
                detail::gemm(false, false, static_cast<int>(cin), static_cast<int>(pix),
                             static_cast<int>(ckk), T{1}, kernel.value().ptr(), static_cast<int>(ckk),
                             buf.data(), static_cast<int>(pix), T{0}, gx.ptr() + n * cin * pix,
                             static_cast<int>(pix));
            if (kernel.requires_grad())
                detail::gemm(false, true, static_cast<int>(cin), static_cast<int>(ckk),
                             static_cast<int>(pix), T{1}, x.value().ptr() + n * cin * pix,
                             static_cast<int>(pix), buf.data(), static_cast<int>(pix), T{1}, gk.ptr(),
                             static_cast<int>(ckk));
        }
        if (x.requires_grad()) accumulate_grad(x, gx);
        if (kernel.requires_grad()) accumulate_grad(kernel, gk);
        if (bias && bias->requires_grad()) {
            Tensor<T> gb({cout});
            for (std::size_t n = 0; n < d.n; ++n)
                for (std::size_t c = 0; c < cout; ++c) {
                    const T* gp = g.ptr() + (n * cout + c) * out_pix;
                    T acc{0};
                    for (std::size_t p = 0; p < out_pix; ++p) acc += gp[p];
                    gb[c] += acc;
                }
            accumulate_grad(*bias, gb);
        }
    });
}

template <typename T>
Var<T> channel_spatial_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    const Dims4 d = image_dims(x.value(), "channel_spatial_norm");
    require(gamma.shape() == Shape{d.c} && beta.shape() == Shape{d.c}, ErrorCode::invalid_argument,
            "channel_spatial_norm: gamma/beta must be [C]");
    const std::size_t m = d.h * d.w;
    require(m >= 2, ErrorCode::invalid_argument, "channel_spatial_norm needs H*W >= 2");
    Tensor<T> xhat(x.shape());
    Tensor<T> out(x.shape());
    std::vector<T> sigma(d.n * d.c), denom(d.n * d.c);
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
            const std::size_t base = (n * d.c + c) * m;
            const T* src = x.value().ptr() + base;
            T mu{0};
            for (std::size_t i = 0; i < m; ++i) mu += src[i];
            mu /= static_cast<T>(m);
            T var{0};
            for (std::size_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
            var /= static_cast<T>(m);
            const T sd = std::sqrt(var);
            const T s = sd + eps;
            sigma[n * d.c + c] = sd;
            denom[n * d.c + c] = s;
            const T gm = gamma.value()[c], bt = beta.value()[c];
            for (std::size_t i = 0; i < m; ++i) {
                const T h = (src[i] - mu) / s;
                xhat[base + i] = h;
                out[base + i] = gm * h + bt;
            }
        }
    }
    return Var<T>::make(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat, sigma, denom, d, m](const Tensor<T>& g) {
        Tensor<T> gx;
        if (x.requires_grad()) gx = Tensor<T>(x.shape());
        Tensor<T> gg({d.c}), gb({d.c});
        for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t c = 0; c < d.c; ++c) {
                const std::size_t base = (n * d.c + c) * m;
                const T gm = gamma.value()[c];
                T sum_g{0}, sum_gx{0};
                for (std::size_t i = 0; i < m; ++i) {
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * xhat[base + i];
                }
                gb[c] += sum_g;
                gg[c] += sum_gx;
                if (!x.requires_grad()) continue;
                const T s = denom[n * d.c + c];
                const T sd = sigma[n * d.c + c];
                // d/dx of (x - mu) / (sd + eps); the sd term vanishes for constant channels.
                const T mean_gh = gm * sum_g / static_cast<T>(m);
                const T coupling = sd > T{0} ? gm * sum_gx / (static_cast<T>(m) * sd) : T{0};
                for (std::size_t i = 0; i < m; ++i)
                    gx[base + i] = (gm * g[base + i] - mean_gh) / s - xhat[base + i] * coupling;
            }
        }
        if (x.requires_grad()) accumulate_grad(x, gx);
        accumulate_grad(gamma, gg);
        accumulate_grad(beta, gb);
    });
}

#define BIVAD_INSTANTIATE_OPS(T)                                                                  \
    template Var<T> add(const Var<T>&, const Var<T>&);                                            \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
    template Var<T> div(const Var<T>&, const Var<T>&);                                            \
    template Var<T> scale(const Var<T>&, T);                                                      \
    template Var<T> add_scalar(const Var<T>&, T);                                                 \
    template Var<T> abs(const Var<T>&);                                                           \
    template Var<T> leaky_relu(const Var<T>&, T);                                                 \
    template Var<T> sigmoid(const Var<T>&);                                                       \
    template Var<T> tanh(const Var<T>&);                                                          \
    template Var<T> activation(const Activation&, const Var<T>&);                                 \
    template Var<T> sum(const Var<T>&);                                                           \
    template Var<T> mean(const Var<T>&);                                                          \
    template Var<T> reshape(const Var<T>&, Shape);                                                \
    template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                              \
    template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                  \
    template Var<T> stack(const std::vector<Var<T>>&);                                            \
    template Var<T> select(const Var<T>&, std::size_t);                                           \
    template std::vector<Var<T>> unstack(const Var<T>&);                                          \
    template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                             \
    template Var<T> softmax_rows(const Var<T>&);                                                  \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,            \
                           std::size_t, Padding);                                                 \
    template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,  \
                                     std::size_t);                                                \
    template Var<T> channel_spatial_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);

BIVAD_INSTANTIATE_OPS(float)
BIVAD_INSTANTIATE_OPS(double)

#undef BIVAD_INSTANTIATE_OPS

} // namespace ops
} // namespace bivad
