#pragma once

#include <vector>

#include "oslr/errors.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

// SGD with momentum and coupled weight decay:
//   v <- mu * v + (g + lambda * p)
//   p <- p - eta * v
// Gradients are left untouched; zeroing them is the caller's explicit step.
template <typename T>
class SgdOptimizer {
  public:
    SgdOptimizer(std::vector<Tensor<T>> params, double learning_rate, double momentum,
                 double weight_decay)
        : params_(std::move(params)),
          learning_rate_(learning_rate),
          momentum_(momentum),
          weight_decay_(weight_decay) {
        velocity_.reserve(params_.size());
        for (const Tensor<T>& p : params_)
            velocity_.emplace_back(static_cast<size_t>(p.numel()), T(0));
    }

    void step() {
        const T eta = static_cast<T>(learning_rate_);
        const T mu = static_cast<T>(momentum_);
        const T lambda = static_cast<T>(weight_decay_);
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<T>& p = params_[pi];
            if (!p.requires_grad() ||
                p.grad_values().size() != static_cast<size_t>(p.numel()))
                throw ShapeError("sgd_step: parameter has no gradient");
            std::vector<T>& v = velocity_[pi];
            T* pd = p.data();
            const T* g = p.grad();
            for (int64_t i = 0; i < p.numel(); ++i) {
                v[static_cast<size_t>(i)] =
                    mu * v[static_cast<size_t>(i)] + (g[i] + lambda * pd[i]);
                pd[i] -= eta * v[static_cast<size_t>(i)];
            }
            if (!p.all_finite()) throw NumericError("sgd_step: non-finite parameter value");
        }
    }

    void zero_grad() {
        for (Tensor<T>& p : params_) p.zero_grad();
    }

    void set_learning_rate(double lr) { learning_rate_ = lr; }
    double learning_rate() const { return learning_rate_; }
    const std::vector<Tensor<T>>& params() const { return params_; }

  private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> velocity_;
    double learning_rate_;
    double momentum_;
    double weight_decay_;
};

} // namespace oslr
