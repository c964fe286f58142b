#pragma once

#include <vector>

#include "oslr/rng.hpp"
#include "oslr/tensor.hpp"

namespace testutil {

template <typename T>
oslr::Tensor<T> random_tensor(oslr::Shape shape, oslr::Pcg32& rng, double lo = -1.0,
                              double hi = 1.0) {
    oslr::Tensor<T> t = oslr::Tensor<T>::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Brute-force convolution: walks every output element and sums the window
// directly. Independent of the im2col path under test.
template <typename T>
oslr::Tensor<T> conv2d_reference(const oslr::Tensor<T>& x, const oslr::Tensor<T>& w,
                                 const oslr::Tensor<T>& b, int stride, bool same_padding) {
    int in_h = x.dim(0), in_w = x.dim(1), in_c = x.dim(2);
    int kh = w.dim(0), kw = w.dim(1), out_c = w.dim(3);
    int pad_top = same_padding ? (kh - 1) / 2 : 0;
    int pad_left = same_padding ? (kw - 1) / 2 : 0;
    int pad_h = same_padding ? kh - 1 : 0;
    int pad_w = same_padding ? kw - 1 : 0;
    int out_h = (in_h + pad_h - kh) / stride + 1;
    int out_w = (in_w + pad_w - kw) / stride + 1;
    oslr::Tensor<T> out = oslr::Tensor<T>::zeros({out_h, out_w, out_c});
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox)
            for (int oc = 0; oc < out_c; ++oc) {
                double acc = static_cast<double>(b.at(oc));
                for (int dy = 0; dy < kh; ++dy)
                    for (int dx = 0; dx < kw; ++dx) {
                        int iy = oy * stride - pad_top + dy;
                        int ix = ox * stride - pad_left + dx;
                        if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
                        for (int ic = 0; ic < in_c; ++ic)
                            acc += static_cast<double>(x.at(iy, ix, ic)) *
                                   static_cast<double>(
                                       w.at((((dy * kw) + dx) * in_c + ic) * out_c + oc));
                    }
                out.at(oy, ox, oc) = static_cast<T>(acc);
            }
    return out;
}

} // namespace testutil
