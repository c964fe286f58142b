#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "oslr/tape.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

enum class Padding { same, valid };

// Weights are kh x kw x in_ch x out_ch, bias is out_ch. "same" padding keeps
// the spatial size at stride 1; even kernels pad on the right/bottom only.
template <typename T>
struct ConvParams {
    Tensor<T> weights;
    Tensor<T> bias;
    int stride = 1;
    Padding padding = Padding::same;

    int kh() const { return weights.dim(0); }
    int kw() const { return weights.dim(1); }
    int in_channels() const { return weights.dim(2); }
    int out_channels() const { return weights.dim(3); }
};

namespace detail {

// C (MxN) += A (MxK) * B (KxN), all row-major. i-k-j order so the inner loop
// is a vectorizable axpy.
template <typename T>
inline void gemm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (KxN) += A^T (MxK)^T * B (MxN): accumulation for weight gradients.
template <typename T>
inline void gemm_at_b_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            T av = arow[p];
            if (av == T(0)) continue;
            T* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct ConvDims {
    int in_h, in_w, in_c;
    int kh, kw, out_c;
    int stride;
    int pad_top, pad_left;
    int out_h, out_w;
};

template <typename T>
inline ConvDims conv_dims(const Tensor<T>& x, const ConvParams<T>& p, const char* op) {
    if (x.ndim() != 3) throw ShapeError(std::string(op) + ": input must be HxWxC");
    ConvDims d{};
    d.in_h = x.dim(0);
    d.in_w = x.dim(1);
    d.in_c = x.dim(2);
    d.kh = p.kh();
    d.kw = p.kw();
    d.out_c = p.out_channels();
    d.stride = p.stride;
    if (d.kh < 1 || d.kh > 3 || d.kw < 1 || d.kw > 3)
        throw ShapeError(std::string(op) + ": unsupported kernel size " + std::to_string(d.kh) +
                         "x" + std::to_string(d.kw));
    if (p.in_channels() != d.in_c)
        throw ShapeError(std::string(op) + ": channel mismatch, input has " +
                         std::to_string(d.in_c) + ", kernel expects " +
                         std::to_string(p.in_channels()));
    if (p.bias.defined() && p.bias.numel() != d.out_c)
        throw ShapeError(std::string(op) + ": bias size mismatch");
    if (d.stride < 1) throw ShapeError(std::string(op) + ": stride must be positive");
    int pad_h = 0, pad_w = 0;
    if (p.padding == Padding::same) {
        pad_h = d.kh - 1;
        pad_w = d.kw - 1;
        d.pad_top = pad_h / 2;  // even kernels pad bottom/right only
        d.pad_left = pad_w / 2;
    } else {
        d.pad_top = 0;
        d.pad_left = 0;
        if (d.in_h < d.kh || d.in_w < d.kw)
            throw ShapeError(std::string(op) + ": input smaller than kernel under valid padding");
    }
    d.out_h = (d.in_h + pad_h - d.kh) / d.stride + 1;
    d.out_w = (d.in_w + pad_w - d.kw) / d.stride + 1;
    return d;
}

// Patch matrix: row r = output position, column (dy*kw + dx)*in_c + c.
template <typename T>
inline void im2col(const T* x, const ConvDims& d, T* col) {
    const int64_t patch = static_cast<int64_t>(d.kh) * d.kw * d.in_c;
    for (int oy = 0; oy < d.out_h; ++oy) {
        for (int ox = 0; ox < d.out_w; ++ox) {
            T* row = col + (static_cast<int64_t>(oy) * d.out_w + ox) * patch;
            int iy0 = oy * d.stride - d.pad_top;
            int ix0 = ox * d.stride - d.pad_left;
            for (int dy = 0; dy < d.kh; ++dy) {
                int iy = iy0 + dy;
                for (int dx = 0; dx < d.kw; ++dx) {
                    int ix = ix0 + dx;
                    T* dst = row + (static_cast<int64_t>(dy) * d.kw + dx) * d.in_c;
                    if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) {
                        std::fill(dst, dst + d.in_c, T(0));
                    } else {
                        const T* src = x + (static_cast<int64_t>(iy) * d.in_w + ix) * d.in_c;
                        std::copy(src, src + d.in_c, dst);
                    }
                }
            }
        }
    }
}

// Scatter-add of patch-matrix gradients back onto the input image.
template <typename T>
inline void col2im_acc(const T* col, const ConvDims& d, T* gx) {
    const int64_t patch = static_cast<int64_t>(d.kh) * d.kw * d.in_c;
    for (int oy = 0; oy < d.out_h; ++oy) {
        for (int ox = 0; ox < d.out_w; ++ox) {
            const T* row = col + (static_cast<int64_t>(oy) * d.out_w + ox) * patch;
            int iy0 = oy * d.stride - d.pad_top;
            int ix0 = ox * d.stride - d.pad_left;
            for (int dy = 0; dy < d.kh; ++dy) {
                int iy = iy0 + dy;
                if (iy < 0 || iy >= d.in_h) continue;
                for (int dx = 0; dx < d.kw; ++dx) {
                    int ix = ix0 + dx;
                    if (ix < 0 || ix >= d.in_w) continue;
                    const T* src = row + (static_cast<int64_t>(dy) * d.kw + dx) * d.in_c;
                    T* dst = gx + (static_cast<int64_t>(iy) * d.in_w + ix) * d.in_c;
                    for (int c = 0; c < d.in_c; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

} // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p, Tape<T>* tape = nullptr) {
    detail::ConvDims d = detail::conv_dims(x, p, "conv2d");
    const int64_t rows = static_cast<int64_t>(d.out_h) * d.out_w;
    const int64_t patch = static_cast<int64_t>(d.kh) * d.kw * d.in_c;

    auto col = std::make_shared<std::vector<T>>(static_cast<size_t>(rows * patch));
    detail::im2col(x.data(), d, col->data());

    Tensor<T> out = Tensor<T>::zeros({d.out_h, d.out_w, d.out_c});
    if (p.bias.defined()) {
        T* o = out.data();
        for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < d.out_c; ++c) o[r * d.out_c + c] = p.bias.at(c);
    }
    detail::gemm_acc(col->data(), p.weights.data(), out.data(), rows, patch, d.out_c);
    check_finite(out, "conv2d");

    if (detail::want_grad(tape, x, p.weights, p.bias)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x, w = p.weights, b = p.bias;
        std::vector<typename Tensor<T>::Storage> ins{x.storage(), w.storage()};
        if (b.defined()) ins.push_back(b.storage());
        tape->record("conv2d", out, std::move(ins),
                     [xi, w, b, out, col, d, rows, patch]() {
                         const T* go = out.grad();
                         if (b.requires_grad()) {
                             T* gb = b.storage()->g.data();
                             for (int64_t r = 0; r < rows; ++r)
                                 for (int c = 0; c < d.out_c; ++c) gb[c] += go[r * d.out_c + c];
                         }
                         if (w.requires_grad()) {
                             detail::gemm_at_b_acc(col->data(), go, w.storage()->g.data(), rows,
                                                   patch, d.out_c);
                         }
                         if (xi.requires_grad()) {
                             // dCol = dOut * W^T via a transposed weight copy.
                             std::vector<T> wt(static_cast<size_t>(patch * d.out_c));
                             const T* wd = w.data();
                             for (int64_t k = 0; k < patch; ++k)
                                 for (int c = 0; c < d.out_c; ++c)
                                     wt[static_cast<size_t>(c * patch + k)] = wd[k * d.out_c + c];
                             std::vector<T> gcol(static_cast<size_t>(rows * patch), T(0));
                             detail::gemm_acc(go, wt.data(), gcol.data(), rows, d.out_c, patch);
                             detail::col2im_acc(gcol.data(), d, xi.storage()->g.data());
                         }
                     });
    }
    return out;
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    if (x.ndim() != 3) throw ShapeError("maxpool2x2: input must be HxWxC");
    int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("maxpool2x2: odd spatial dims " + shape_str(x.shape()));
    int oh = h / 2, ow = w / 2;
    Tensor<T> out = Tensor<T>::zeros({oh, ow, c});
    // Ties go to the first element in row-major scan order of the 2x2 block.
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
    const T* xd = x.data();
    T* od = out.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ch = 0; ch < c; ++ch) {
                int64_t best_idx = -1;
                T best = T(0);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        int64_t idx =
                            (static_cast<int64_t>(2 * oy + dy) * w + (2 * ox + dx)) * c + ch;
                        if (best_idx < 0 || xd[idx] > best) {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                int64_t oidx = (static_cast<int64_t>(oy) * ow + ox) * c + ch;
                od[oidx] = best;
                (*argmax)[static_cast<size_t>(oidx)] = best_idx;
            }
        }
    }
    check_finite(out, "maxpool2x2");
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("maxpool2x2", out, {x.storage()}, [xi, out, argmax]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            const T* go = out.grad();
            for (int64_t i = 0; i < out.numel(); ++i)
                gx[(*argmax)[static_cast<size_t>(i)]] += go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    if (x.ndim() != 3) throw ShapeError("upsample_nearest2x: input must be HxWxC");
    int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor<T> out = Tensor<T>::zeros({2 * h, 2 * w, c});
    const T* xd = x.data();
    T* od = out.data();
    for (int y = 0; y < 2 * h; ++y) {
        for (int xo = 0; xo < 2 * w; ++xo) {
            const T* src = xd + (static_cast<int64_t>(y / 2) * w + xo / 2) * c;
            T* dst = od + (static_cast<int64_t>(y) * 2 * w + xo) * c;
            std::copy(src, src + c, dst);
        }
    }
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("upsample_nearest2x", out, {x.storage()}, [xi, out, h, w, c]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            const T* go = out.grad();
            for (int y = 0; y < 2 * h; ++y)
                for (int xo = 0; xo < 2 * w; ++xo) {
                    const T* src = go + (static_cast<int64_t>(y) * 2 * w + xo) * c;
                    T* dst = gx + (static_cast<int64_t>(y / 2) * w + xo / 2) * c;
                    for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
        });
    }
    return out;
}

// Replicates a 1x1xD code across a spatial grid.
template <typename T>
Tensor<T> tile_spatial(const Tensor<T>& z, int out_h, int out_w, Tape<T>* tape = nullptr) {
    if (z.ndim() != 3 || z.dim(0) != 1 || z.dim(1) != 1)
        throw ShapeError("tile_spatial: input must be 1x1xD, got " + shape_str(z.shape()));
    int dch = z.dim(2);
    Tensor<T> out = Tensor<T>::zeros({out_h, out_w, dch});
    const T* zd = z.data();
    T* od = out.data();
    int64_t cells = static_cast<int64_t>(out_h) * out_w;
    for (int64_t i = 0; i < cells; ++i) std::copy(zd, zd + dch, od + i * dch);
    if (detail::want_grad(tape, z)) {
        out.set_requires_grad(true);
        Tensor<T> zi = z;
        tape->record("tile_spatial", out, {z.storage()}, [zi, out, cells, dch]() {
            if (!zi.requires_grad()) return;
            T* gz = zi.storage()->g.data();
            const T* go = out.grad();
            for (int64_t i = 0; i < cells; ++i)
                for (int c = 0; c < dch; ++c) gz[c] += go[i * dch + c];
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
        throw ShapeError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
    Tensor<T> out = Tensor<T>::zeros({h, w, ca + cb});
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    int64_t cells = static_cast<int64_t>(h) * w;
    for (int64_t i = 0; i < cells; ++i) {
        std::copy(ad + i * ca, ad + (i + 1) * ca, od + i * (ca + cb));
        std::copy(bd + i * cb, bd + (i + 1) * cb, od + i * (ca + cb) + ca);
    }
    if (detail::want_grad(tape, a, b)) {
        out.set_requires_grad(true);
        Tensor<T> ai = a, bi = b;
        tape->record("concat_channels", out, {a.storage(), b.storage()},
                     [ai, bi, out, cells, ca, cb]() {
                         const T* go = out.grad();
                         if (ai.requires_grad()) {
                             T* ga = ai.storage()->g.data();
                             for (int64_t i = 0; i < cells; ++i)
                                 for (int c = 0; c < ca; ++c)
                                     ga[i * ca + c] += go[i * (ca + cb) + c];
                         }
                         if (bi.requires_grad()) {
                             T* gb = bi.storage()->g.data();
                             for (int64_t i = 0; i < cells; ++i)
                                 for (int c = 0; c < cb; ++c)
                                     gb[i * cb + c] += go[i * (ca + cb) + ca + c];
                         }
                     });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
    check_finite(out, "relu");
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("relu", out, {x.storage()}, [xi, out]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            const T* go = out.grad();
            const T* xd = xi.data();
            for (int64_t i = 0; i < xi.numel(); ++i)
                if (xd[i] > T(0)) gx[i] += go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) od[i] = T(1) / (T(1) + std::exp(-xd[i]));
    check_finite(out, "sigmoid");
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("sigmoid", out, {x.storage()}, [xi, out]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            const T* go = out.grad();
            const T* od = out.data();
            for (int64_t i = 0; i < xi.numel(); ++i) gx[i] += go[i] * od[i] * (T(1) - od[i]);
        });
    }
    return out;
}

// Mean two-term binary cross entropy over all pixels. Probabilities are
// clamped to [eps, 1-eps] before the logs; the clamp is treated as identity
// in backward so saturated pixels keep a learning signal.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target, Tape<T>* tape = nullptr) {
    if (pred.shape() != target.shape())
        throw ShapeError("bce_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const T eps = static_cast<T>(1e-7);
    const T* pd = pred.data();
    const T* td = target.data();
    const int64_t n = pred.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        T t = td[i];
        if (t != T(0) && t != T(1)) throw ShapeError("bce_loss: target not binary");
        T p = std::min(std::max(pd[i], eps), T(1) - eps);
        acc -= static_cast<double>(t) * std::log(static_cast<double>(p)) +
               (1.0 - static_cast<double>(t)) * std::log(1.0 - static_cast<double>(p));
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    check_finite(out, "bce_loss");
    if (detail::want_grad(tape, pred)) {
        out.set_requires_grad(true);
        Tensor<T> pi = pred, ti = target;
        tape->record("bce_loss", out, {pred.storage()}, [pi, ti, out, n, eps]() {
            if (!pi.requires_grad()) return;
            T* gp = pi.storage()->g.data();
            const T* pd = pi.data();
            const T* td = ti.data();
            T go = out.grad()[0];
            T inv_n = T(1) / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                T p = std::min(std::max(pd[i], eps), T(1) - eps);
                gp[i] += go * inv_n * (-(td[i] / p) + (T(1) - td[i]) / (T(1) - p));
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    double acc = 0.0;
    const T* xd = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(xd[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    check_finite(out, "sum");
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("sum", out, {x.storage()}, [xi, out]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            T go = out.grad()[0];
            for (int64_t i = 0; i < xi.numel(); ++i) gx[i] += go;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) od[i] = ad[i] * bd[i];
    check_finite(out, "mul");
    if (detail::want_grad(tape, a, b)) {
        out.set_requires_grad(true);
        Tensor<T> ai = a, bi = b;
        tape->record("mul", out, {a.storage(), b.storage()}, [ai, bi, out]() {
            const T* go = out.grad();
            if (ai.requires_grad()) {
                T* ga = ai.storage()->g.data();
                const T* bd = bi.data();
                for (int64_t i = 0; i < ai.numel(); ++i) ga[i] += go[i] * bd[i];
            }
            if (bi.requires_grad()) {
                T* gb = bi.storage()->g.data();
                const T* ad = ai.data();
                for (int64_t i = 0; i < bi.numel(); ++i) gb[i] += go[i] * ad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor, Tape<T>* tape = nullptr) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) od[i] = xd[i] * factor;
    check_finite(out, "scale");
    if (detail::want_grad(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xi = x;
        tape->record("scale", out, {x.storage()}, [xi, out, factor]() {
            if (!xi.requires_grad()) return;
            T* gx = xi.storage()->g.data();
            const T* go = out.grad();
            for (int64_t i = 0; i < xi.numel(); ++i) gx[i] += go[i] * factor;
        });
    }
    return out;
}

// Per-position cosine similarity of the feature vector against a single code,
// squashed by tanh, broadcast-multiplied onto the feature map. Zero-norm
// vectors get similarity 0.
template <typename T>
Tensor<T> cosine_match(const Tensor<T>& f, const Tensor<T>& code, Tape<T>* tape = nullptr) {
    if (f.ndim() != 3) throw ShapeError("cosine_match: feature must be HxWxC");
    if (code.ndim() != 3 || code.dim(0) != 1 || code.dim(1) != 1 || code.dim(2) != f.dim(2))
        throw ShapeError("cosine_match: code must be 1x1x" + std::to_string(f.dim(2)));
    int h = f.dim(0), w = f.dim(1), c = f.dim(2);
    int64_t cells = static_cast<int64_t>(h) * w;
    Tensor<T> out = Tensor<T>::zeros(f.shape());
    const T* fd = f.data();
    const T* pd = code.data();
    T* od = out.data();
    double pn2 = 0.0;
    for (int ch = 0; ch < c; ++ch) pn2 += static_cast<double>(pd[ch]) * pd[ch];
    double pn = std::sqrt(pn2);
    auto sims = std::make_shared<std::vector<T>>(static_cast<size_t>(cells));
    for (int64_t i = 0; i < cells; ++i) {
        const T* fv = fd + i * c;
        double fn2 = 0.0, dot = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            fn2 += static_cast<double>(fv[ch]) * fv[ch];
            dot += static_cast<double>(fv[ch]) * pd[ch];
        }
        double fn = std::sqrt(fn2);
        double cos = (fn > 0.0 && pn > 0.0) ? dot / (fn * pn) : 0.0;
        T s = static_cast<T>(std::tanh(cos));
        (*sims)[static_cast<size_t>(i)] = s;
        for (int ch = 0; ch < c; ++ch) od[i * c + ch] = fv[ch] * s;
    }
    check_finite(out, "cosine_match");
    if (detail::want_grad(tape, f, code)) {
        out.set_requires_grad(true);
        Tensor<T> fi = f, pi = code;
        tape->record("cosine_match", out, {f.storage(), code.storage()},
                     [fi, pi, out, sims, cells, c, pn]() {
                         const T* go = out.grad();
                         const T* fd = fi.data();
                         const T* pd = pi.data();
                         T* gf = fi.requires_grad() ? fi.storage()->g.data() : nullptr;
                         T* gp = pi.requires_grad() ? pi.storage()->g.data() : nullptr;
                         for (int64_t i = 0; i < cells; ++i) {
                             const T* fv = fd + i * c;
                             const T* gv = go + i * c;
                             double s = static_cast<double>((*sims)[static_cast<size_t>(i)]);
                             // dL/ds summed over channels at this position
                             double gsum = 0.0;
                             for (int ch = 0; ch < c; ++ch)
                                 gsum += static_cast<double>(gv[ch]) * fv[ch];
                             if (gf)
                                 for (int ch = 0; ch < c; ++ch)
                                     gf[i * c + ch] += static_cast<T>(gv[ch] * s);
                             double fn2 = 0.0, dot = 0.0;
                             for (int ch = 0; ch < c; ++ch) {
                                 fn2 += static_cast<double>(fv[ch]) * fv[ch];
                                 dot += static_cast<double>(fv[ch]) * pd[ch];
                             }
                             double fn = std::sqrt(fn2);
                             if (fn == 0.0 || pn == 0.0) continue;
                             double cos = dot / (fn * pn);
                             double dtanh = 1.0 - s * s;
                             double k = gsum * dtanh;
                             if (gf)
                                 for (int ch = 0; ch < c; ++ch)
                                     gf[i * c + ch] += static_cast<T>(
                                         k * (pd[ch] / (fn * pn) - cos * fv[ch] / fn2));
                             if (gp)
                                 for (int ch = 0; ch < c; ++ch)
                                     gp[ch] += static_cast<T>(
                                         k * (fv[ch] / (fn * pn) - cos * pd[ch] / (pn * pn)));
                         }
                     });
    }
    return out;
}

} // namespace oslr
