#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oslr/errors.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

// Linear record of executed ops. Node order is the execution order, which is a
// valid topological order of the computation; backward walks it once in
// reverse. One tape per logical forward pass.
template <typename T>
class Tape {
  public:
    using Storage = typename Tensor<T>::Storage;

    struct Node {
        const char* op;
        Storage out;
        std::vector<Storage> inputs;
        std::function<void()> backward;
    };

    bool recording() const { return !frozen_; }
    size_t size() const { return nodes_.size(); }

    void record(const char* op, const Tensor<T>& out, std::vector<Storage> inputs,
                std::function<void()> backward) {
        if (frozen_) throw ShapeError(std::string(op) + ": tape is frozen");
        nodes_.push_back(Node{op, out.storage(), std::move(inputs), std::move(backward)});
    }

    // Seeds d(loss)/d(loss) = seed and propagates to every tensor recorded on
    // this tape. Gradients accumulate additively across fan-out. The tape is
    // frozen for the call and stays frozen; clear() to reuse.
    void backward(const Tensor<T>& loss, T seed = T(1)) {
        if (!loss.is_scalar()) throw ShapeError("backward: loss is not a scalar");
        frozen_ = true;
        size_t loss_node = nodes_.size();
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].out == loss.storage()) {
                loss_node = i;
                break;
            }
        }
        if (loss_node == nodes_.size())
            throw ShapeError("backward: loss tensor was not produced on this tape");
        if (!loss.requires_grad())
            throw ShapeError("backward: loss does not track gradients");
        loss.storage()->g[0] += seed;
        for (size_t i = loss_node + 1; i-- > 0;) {
            Node& n = nodes_[i];
            n.backward();
            for (const Storage& in : n.inputs) {
                if (!in->requires_grad) continue;
                for (T x : in->g)
                    if (!std::isfinite(static_cast<double>(x)))
                        throw NumericError(std::string(n.op) + ": non-finite gradient");
            }
        }
    }

    void clear() {
        nodes_.clear();
        frozen_ = false;
    }

  private:
    std::vector<Node> nodes_;
    bool frozen_ = false;
};

namespace detail {

// An op output participates in differentiation iff some input does and a
// recording tape is active.
template <typename T, typename... Ins>
inline bool want_grad(const Tape<T>* tape, const Ins&... ins) {
    if (!tape || !tape->recording()) return false;
    return (... || ins.requires_grad());
}

} // namespace detail

} // namespace oslr
