#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "oslr/ops.hpp"
#include "oslr/tape.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

// Central-difference gradient verification, meant to run at double precision.
// The op under test maps the input list to a tensor; the checker reduces the
// output with a plain sum, compares analytic gradients from the tape against
// (f(x+eps) - f(x-eps)) / 2eps, and reports the max relative error
//   |a - n| / max(|a|, |n|, 1e-8)
// over every element of every input.
template <typename T>
double grad_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&, Tape<T>*)>& op,
                  std::vector<Tensor<T>> inputs, double eps = 1e-4) {
    int64_t total = 0;
    for (Tensor<T>& in : inputs) {
        in.set_requires_grad(true);
        total += in.numel();
    }
    if (total > 10000) throw ShapeError("grad_check: too many input elements");

    Tape<T> tape;
    Tensor<T> out = op(inputs, &tape);
    Tensor<T> reduced = out.is_scalar() ? out : sum_all(out, &tape);
    tape.backward(reduced);

    double max_rel = 0.0;
    for (Tensor<T>& in : inputs) {
        for (int64_t i = 0; i < in.numel(); ++i) {
            T saved = in.at(i);
            in.at(i) = saved + static_cast<T>(eps);
            double fp = static_cast<double>(sum_all(op(inputs, nullptr)).at(0));
            in.at(i) = saved - static_cast<T>(eps);
            double fm = static_cast<double>(sum_all(op(inputs, nullptr)).at(0));
            in.at(i) = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double analytic = static_cast<double>(in.grad()[i]);
            if (!std::isfinite(numeric) || !std::isfinite(analytic))
                throw NumericError("grad_check: non-finite value");
            double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace oslr
