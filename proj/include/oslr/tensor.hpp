#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "oslr/errors.hpp"

namespace oslr {

// Dimension sizes, outermost first. Image tensors are height x width x channels,
// stored row-major with channels innermost.
using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> v; // values, flat row-major
    std::vector<T> g; // gradient buffer; same length as v iff requires_grad
    bool requires_grad = false;
};

// Shared handle to a tensor. Copies alias the same storage; ops never mutate
// written values except through the optimizer.
template <typename T>
class Tensor {
  public:
    using Storage = std::shared_ptr<TensorStorage<T>>;

    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.d_ = std::make_shared<TensorStorage<T>>();
        int64_t n = shape_numel(shape);
        t.d_->shape = std::move(shape);
        t.d_->v.assign(static_cast<size_t>(n), T(0));
        return t;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.d_->v.begin(), t.d_->v.end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
        Tensor t;
        t.d_ = std::make_shared<TensorStorage<T>>();
        t.d_->shape = std::move(shape);
        t.d_->v = std::move(values);
        return t;
    }

    static Tensor scalar(T value) { return from({1}, {value}); }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int ndim() const { return static_cast<int>(d_->shape.size()); }
    int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(d_->v.size()); }
    bool is_scalar() const { return numel() == 1; }

    // H x W x C conventions for image tensors.
    int height() const { return dim(0); }
    int width() const { return dim(1); }
    int channels() const { return ndim() >= 3 ? dim(2) : 1; }

    T* data() { return d_->v.data(); }
    const T* data() const { return d_->v.data(); }
    std::vector<T>& values() { return d_->v; }
    const std::vector<T>& values() const { return d_->v; }

    T at(int64_t i) const { return d_->v[static_cast<size_t>(i)]; }
    T& at(int64_t i) { return d_->v[static_cast<size_t>(i)]; }
    T at(int y, int x, int c) const {
        return d_->v[static_cast<size_t>((static_cast<int64_t>(y) * width() + x) * channels() + c)];
    }
    T& at(int y, int x, int c) {
        return d_->v[static_cast<size_t>((static_cast<int64_t>(y) * width() + x) * channels() + c)];
    }

    bool requires_grad() const { return d_ && d_->requires_grad; }

    void set_requires_grad(bool on) {
        d_->requires_grad = on;
        if (on)
            d_->g.assign(d_->v.size(), T(0));
        else
            d_->g.clear();
    }

    T* grad() { return d_->g.data(); }
    const T* grad() const { return d_->g.data(); }
    std::vector<T>& grad_values() { return d_->g; }
    const std::vector<T>& grad_values() const { return d_->g; }

    void zero_grad() {
        if (d_ && d_->requires_grad) std::fill(d_->g.begin(), d_->g.end(), T(0));
    }

    Tensor clone() const {
        Tensor t = from(d_->shape, d_->v);
        return t;
    }

    bool all_finite() const {
        for (T x : d_->v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    bool grad_finite() const {
        for (T x : d_->g)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    // Storage identity; the tape keys nodes on this.
    const Storage& storage() const { return d_; }

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  private:
    Storage d_;
};

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

} // namespace oslr
