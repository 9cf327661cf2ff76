// SPDX-License-Identifier: Apache-2.0
#include "slotdet/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include <Eigen/Core>

namespace slotdet::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// Eigen picks its summation order from operand alignment, and heap blocks
// from std::vector are only 16-byte aligned. Copying into Eigen-owned storage
// makes every product bit-reproducible from run to run.
template <typename T>
MatR<T> owned(const T* p, std::size_t rows, std::size_t cols) {
    return CMapR<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
void store(const MatR<T>& m, T* dst) {
    std::copy(m.data(), m.data() + m.size(), dst);
}

template <typename T>
void accumulate(const MatR<T>& m, T* dst) {
    const T* src = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename T, typename Fwd, typename Deriv>
TensorPtr<T> unary(const TensorPtr<T>& a, Fwd fwd, Deriv deriv) {
    std::vector<T> out(a->numel());
    auto x = a->data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
    Tensor<T>* pa = a.get();
    return Tensor<T>::make_result(a->shape(), std::move(out), {a}, [pa, deriv](Tensor<T>& self) {
        auto g = self.grad();
        auto y = self.data();
        auto xs = pa->data();
        auto gx = pa->grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xs[i], y[i]);
    });
}

struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(*a, *b, "add");
    std::vector<T> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data()[i] + b->data()[i];
    Tensor<T>* pa = a.get();
    Tensor<T>* pb = b.get();
    return Tensor<T>::make_result(a->shape(), std::move(out), {a, b}, [pa, pb](Tensor<T>& self) {
        auto g = self.grad();
        for (Tensor<T>* p : {pa, pb}) {
            if (!p->requires_grad()) continue;
            auto gp = p->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
    });
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(*a, *b, "sub");
    std::vector<T> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data()[i] - b->data()[i];
    Tensor<T>* pa = a.get();
    Tensor<T>* pb = b.get();
    return Tensor<T>::make_result(a->shape(), std::move(out), {a, b}, [pa, pb](Tensor<T>& self) {
        auto g = self.grad();
        if (pa->requires_grad()) {
            auto ga = pa->grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (pb->requires_grad()) {
            auto gb = pb->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(*a, *b, "mul");
    std::vector<T> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data()[i] * b->data()[i];
    Tensor<T>* pa = a.get();
    Tensor<T>* pb = b.get();
    return Tensor<T>::make_result(a->shape(), std::move(out), {a, b}, [pa, pb](Tensor<T>& self) {
        auto g = self.grad();
        if (pa->requires_grad()) {
            auto ga = pa->grad();
            auto xb = pb->data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
        }
        if (pb->requires_grad()) {
            auto gb = pb->grad();
            auto xa = pa->data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
        }
    });
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& a, T factor) {
    return unary<T>(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
TensorPtr<T> add_scalar(const TensorPtr<T>& a, T offset) {
    return unary<T>(a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
TensorPtr<T> square(const TensorPtr<T>& a) {
    return unary<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
TensorPtr<T> log_clamped(const TensorPtr<T>& a, T floor) {
    return unary<T>(
        a, [floor](T x) { return std::log(std::max(x, floor)); },
        [floor](T x, T) { return x > floor ? T(1) / x : T(0); });
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& a) {
    T total = 0;
    for (T v : a->data()) total += v;
    Tensor<T>* pa = a.get();
    return Tensor<T>::make_result(Shape{1}, {total}, {a}, [pa](Tensor<T>& self) {
        T g = self.grad()[0];
        for (T& v : pa->grad()) v += g;
    });
}

template <typename T>
TensorPtr<T> weighted_sum(const std::vector<TensorPtr<T>>& terms, const std::vector<T>& weights) {
    if (terms.size() != weights.size()) throw ShapeError("weighted_sum: term/weight count mismatch");
    T total = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i]->numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
        total += weights[i] * terms[i]->data()[0];
    }
    std::vector<Tensor<T>*> raw;
    for (const auto& t : terms) raw.push_back(t.get());
    return Tensor<T>::make_result(Shape{1}, {total}, terms, [raw, weights](Tensor<T>& self) {
        T g = self.grad()[0];
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (raw[i]->requires_grad()) raw[i]->grad()[0] += g * weights[i];
    });
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& a) {
    return unary<T>(a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& a) {
    return unary<T>(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorPtr<T> tanh(const TensorPtr<T>& a) {
    return unary<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& a, std::size_t axis) {
    const AxisSplit s = split_axis(a->shape(), axis);
    std::vector<T> out(a->numel());
    auto x = a->data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T mx = x[base];
            for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, x[base + k * s.inner]);
            T z = 0;
            for (std::size_t k = 0; k < s.n; ++k) {
                T e = std::exp(x[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= z;
        }
    }
    Tensor<T>* pa = a.get();
    return Tensor<T>::make_result(a->shape(), std::move(out), {a}, [pa, s](Tensor<T>& self) {
        auto g = self.grad();
        auto y = self.data();
        auto gx = pa->grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                T dot = 0;
                for (std::size_t k = 0; k < s.n; ++k) dot += y[base + k * s.inner] * g[base + k * s.inner];
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t i = base + k * s.inner;
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

template <typename T>
TensorPtr<T> maxpool2(const TensorPtr<T>& x) {
    if (x->rank() != 3) throw ShapeError("maxpool2 expects [C,H,W], got " + shape_str(x->shape()));
    const std::size_t c = x->dim(0), h = x->dim(1), w = x->dim(2);
    if (h % 2 || w % 2) throw ShapeError("maxpool2 needs even spatial size, got " + shape_str(x->shape()));
    const std::size_t ho = h / 2, wo = w / 2;
    std::vector<T> out(c * ho * wo);
    std::vector<std::uint32_t> argmax(out.size());
    auto in = x->data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = in.data() + ch * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t best = (2 * oy) * w + 2 * ox;
                for (std::size_t cand : {best + 1, best + w, best + w + 1})
                    if (plane[cand] > plane[best]) best = cand;
                const std::size_t o = (ch * ho + oy) * wo + ox;
                out[o] = plane[best];
                argmax[o] = static_cast<std::uint32_t>(ch * h * w + best);
            }
        }
    }
    Tensor<T>* px = x.get();
    return Tensor<T>::make_result(Shape{c, ho, wo}, std::move(out), {x},
                                  [px, argmax = std::move(argmax)](Tensor<T>& self) {
                                      auto g = self.grad();
                                      auto gx = px->grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
                                  });
}

namespace {

struct ConvGeom {
    std::size_t c, h, w, kh, kw, stride, pad, ho, wo;
};

// Output columns [lo, hi) read in-bounds input for kernel column j.
inline void valid_cols(const ConvGeom& g, std::size_t j, std::size_t& lo, std::size_t& hi) {
    // ix = ox * stride + j - pad must satisfy 0 <= ix < w.
    lo = j >= g.pad ? 0 : (g.pad - j + g.stride - 1) / g.stride;
    const long last = static_cast<long>(g.w) - 1 + static_cast<long>(g.pad) - static_cast<long>(j);
    hi = last < 0 ? 0 : std::min(g.wo, static_cast<std::size_t>(last) / g.stride + 1);
    if (lo > hi) lo = hi;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = cols + ((ch * g.kh + i) * g.kw + j) * plane;
                std::size_t lo = 0, hi = 0;
                valid_cols(g, j, lo, hi);
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    T* dst = row + oy * g.wo;
                    const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h) || lo >= hi) {
                        std::fill(dst, dst + g.wo, T(0));
                        continue;
                    }
                    const T* src = x + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
                    std::fill(dst, dst + lo, T(0));
                    std::fill(dst + hi, dst + g.wo, T(0));
                    const std::size_t x0 = lo * g.stride + j - g.pad;
                    if (g.stride == 1) {
                        std::copy(src + x0, src + x0 + (hi - lo), dst + lo);
                    } else {
                        for (std::size_t ox = lo, ix = x0; ox < hi; ++ox, ix += g.stride) dst[ox] = src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* x) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = cols + ((ch * g.kh + i) * g.kw + j) * plane;
                std::size_t lo = 0, hi = 0;
                valid_cols(g, j, lo, hi);
                if (lo >= hi) continue;
                const std::size_t x0 = lo * g.stride + j - g.pad;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    const T* src = row + oy * g.wo;
                    T* dst = x + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = lo, ix = x0; ox < hi; ++ox, ix += g.stride) dst[ix] += src[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    std::size_t stride, std::size_t pad) {
    if (x->rank() != 3) throw ShapeError("conv2d input must be [C,H,W], got " + shape_str(x->shape()));
    if (w->rank() != 4) throw ShapeError("conv2d weights must be [O,C,KH,KW], got " + shape_str(w->shape()));
    if (w->dim(1) != x->dim(0))
        throw ShapeError("conv2d channel mismatch: input " + shape_str(x->shape()) + ", weights " +
                         shape_str(w->shape()));
    if (b->numel() != w->dim(0)) throw ShapeError("conv2d bias length does not match output channels");
    if (stride == 0) throw ShapeError("conv2d stride must be positive");

    ConvGeom g{x->dim(0), x->dim(1), x->dim(2), w->dim(2), w->dim(3), stride, pad, 0, 0};
    if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) throw ShapeError("conv2d kernel larger than padded input");
    g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
    const std::size_t o = w->dim(0);
    const std::size_t k = g.c * g.kh * g.kw;
    const std::size_t p = g.ho * g.wo;

    MatR<T> cols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
    im2col(x->data().data(), g, cols.data());

    std::vector<T> out(o * p);
    {
        const MatR<T> prod = owned(w->data().data(), o, k) * cols;
        store(prod, out.data());
    }
    for (std::size_t r = 0; r < o; ++r)
        for (std::size_t i = 0; i < p; ++i) out[r * p + i] += b->data()[r];

    Tensor<T>* px = x.get();
    Tensor<T>* pw = w.get();
    Tensor<T>* pb = b.get();
    return Tensor<T>::make_result(
        Shape{o, g.ho, g.wo}, std::move(out), {x, w, b},
        [px, pw, pb, g, o, k, p, cols = std::move(cols)](Tensor<T>& self) {
            const MatR<T> dout = owned(self.grad().data(), o, p);
            if (pw->requires_grad()) accumulate<T>(dout * cols.transpose(), pw->grad().data());
            if (pb->requires_grad()) {
                auto gb = pb->grad();
                for (std::size_t r = 0; r < o; ++r) {
                    T acc = 0;
                    for (std::size_t i = 0; i < p; ++i) acc += dout.data()[r * p + i];
                    gb[r] += acc;
                }
            }
            if (px->requires_grad()) {
                const MatR<T> dcols = owned(pw->data().data(), o, k).transpose() * dout;
                col2im(dcols.data(), g, px->grad().data());
            }
        });
}

template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
    if (x->rank() != 2 || w->rank() != 2 || x->dim(1) != w->dim(1) || b->numel() != w->dim(0))
        throw ShapeError("linear shape mismatch: x " + shape_str(x->shape()) + ", w " + shape_str(w->shape()) +
                         ", b " + shape_str(b->shape()));
    const std::size_t n = x->dim(0), in = x->dim(1), out_dim = w->dim(0);
    std::vector<T> out(n * out_dim);
    if (n > 0) {
        const MatR<T> y = owned(x->data().data(), n, in) * owned(w->data().data(), out_dim, in).transpose();
        store(y, out.data());
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += b->data()[c];
    }
    Tensor<T>* px = x.get();
    Tensor<T>* pw = w.get();
    Tensor<T>* pb = b.get();
    return Tensor<T>::make_result(
        Shape{n, out_dim}, std::move(out), {x, w, b}, [px, pw, pb, n, in, out_dim](Tensor<T>& self) {
            if (n == 0) return;
            const MatR<T> dy = owned(self.grad().data(), n, out_dim);
            if (px->requires_grad()) accumulate<T>(dy * owned(pw->data().data(), out_dim, in), px->grad().data());
            if (pw->requires_grad())
                accumulate<T>(dy.transpose() * owned(px->data().data(), n, in), pw->grad().data());
            if (pb->requires_grad()) {
                auto gb = pb->grad();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < out_dim; ++c) gb[c] += dy(r, c);
            }
        });
}

template <typename T>
TensorPtr<T> narrow(const TensorPtr<T>& a, std::size_t axis, std::size_t begin, std::size_t length) {
    const AxisSplit s = split_axis(a->shape(), axis);
    if (begin + length > s.n)
        throw ShapeError("narrow [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                         ") exceeds axis of size " + std::to_string(s.n));
    Shape shape = a->shape();
    shape[axis] = length;
    std::vector<T> out(s.outer * length * s.inner);
    auto x = a->data();
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(x.data() + (o * s.n + begin) * s.inner, length * s.inner,
                    out.data() + o * length * s.inner);
    Tensor<T>* pa = a.get();
    return Tensor<T>::make_result(std::move(shape), std::move(out), {a},
                                  [pa, s, begin, length](Tensor<T>& self) {
                                      auto g = self.grad();
                                      auto gx = pa->grad();
                                      for (std::size_t o = 0; o < s.outer; ++o) {
                                          const T* src = g.data() + o * length * s.inner;
                                          T* dst = gx.data() + (o * s.n + begin) * s.inner;
                                          for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
                                      }
                                  });
}

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& a, Shape shape) {
    if (numel_of(shape) != a->numel())
        throw ShapeError("reshape " + shape_str(a->shape()) + " -> " + shape_str(shape));
    std::vector<T> out(a->data().begin(), a->data().end());
    Tensor<T>* pa = a.get();
    return Tensor<T>::make_result(std::move(shape), std::move(out), {a}, [pa](Tensor<T>& self) {
        auto g = self.grad();
        auto gx = pa->grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

template <typename T>
TensorPtr<T> gather_patches(const TensorPtr<T>& map, const std::vector<std::pair<int, int>>& cells,
                            std::size_t size) {
    if (map->rank() != 3) throw ShapeError("gather_patches expects [C,H,W], got " + shape_str(map->shape()));
    if (size % 2 == 0) throw ShapeError("gather_patches needs an odd neighbourhood size");
    const std::size_t c = map->dim(0), h = map->dim(1), w = map->dim(2);
    const int half = static_cast<int>(size / 2);
    const std::size_t row_len = c * size * size;

    // Source index per output element, or -1 for padding.
    std::vector<long> src(cells.size() * row_len, -1);
    for (std::size_t n = 0; n < cells.size(); ++n) {
        const auto [r0, c0] = cells[n];
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx) {
                    const int r = r0 + dy, col = c0 + dx;
                    const std::size_t o = n * row_len + (ch * size + static_cast<std::size_t>(dy + half)) * size +
                                          static_cast<std::size_t>(dx + half);
                    if (r >= 0 && col >= 0 && r < static_cast<int>(h) && col < static_cast<int>(w))
                        src[o] = static_cast<long>((ch * h + static_cast<std::size_t>(r)) * w +
                                                   static_cast<std::size_t>(col));
                }
            }
        }
    }
    std::vector<T> out(src.size(), T(0));
    auto x = map->data();
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i] >= 0) out[i] = x[static_cast<std::size_t>(src[i])];

    Tensor<T>* pm = map.get();
    return Tensor<T>::make_result(Shape{cells.size(), row_len}, std::move(out), {map},
                                  [pm, src = std::move(src)](Tensor<T>& self) {
                                      auto g = self.grad();
                                      auto gx = pm->grad();
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                          if (src[i] >= 0) gx[static_cast<std::size_t>(src[i])] += g[i];
                                  });
}

#define SLOTDET_INSTANTIATE_OPS(T)                                                                     \
    template TensorPtr<T> add(const TensorPtr<T>&, const TensorPtr<T>&);                               \
    template TensorPtr<T> sub(const TensorPtr<T>&, const TensorPtr<T>&);                               \
    template TensorPtr<T> mul(const TensorPtr<T>&, const TensorPtr<T>&);                               \
    template TensorPtr<T> scale(const TensorPtr<T>&, T);                                               \
    template TensorPtr<T> add_scalar(const TensorPtr<T>&, T);                                          \
    template TensorPtr<T> square(const TensorPtr<T>&);                                                 \
    template TensorPtr<T> log_clamped(const TensorPtr<T>&, T);                                         \
    template TensorPtr<T> sum(const TensorPtr<T>&);                                                    \
    template TensorPtr<T> weighted_sum(const std::vector<TensorPtr<T>>&, const std::vector<T>&);       \
    template TensorPtr<T> relu(const TensorPtr<T>&);                                                   \
    template TensorPtr<T> sigmoid(const TensorPtr<T>&);                                                \
    template TensorPtr<T> tanh(const TensorPtr<T>&);                                                   \
    template TensorPtr<T> softmax(const TensorPtr<T>&, std::size_t);                                   \
    template TensorPtr<T> maxpool2(const TensorPtr<T>&);                                               \
    template TensorPtr<T> conv2d(const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,        \
                                 std::size_t, std::size_t);                                            \
    template TensorPtr<T> linear(const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&);       \
    template TensorPtr<T> narrow(const TensorPtr<T>&, std::size_t, std::size_t, std::size_t);          \
    template TensorPtr<T> reshape(const TensorPtr<T>&, Shape);                                         \
    template TensorPtr<T> gather_patches(const TensorPtr<T>&, const std::vector<std::pair<int, int>>&, \
                                         std::size_t);

SLOTDET_INSTANTIATE_OPS(float)
SLOTDET_INSTANTIATE_OPS(double)

}  // namespace slotdet::nn
