#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "eqsur/common.hpp"

namespace eqsur {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

template <typename T> class Tape;

/// Dense row-major N-d array. Value semantics with a shared buffer;
/// treated as immutable once it has been handed to an operation or a tape.
/// `tape`/`node` link the value into a reverse-mode differentiation tape;
/// a tensor with no tape handle never produces gradients.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(numel(shape_), T(0))) {}
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return full({}, value); }
    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi);
    static Tensor normal(Shape shape, Rng& rng, T stddev);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    int64_t extent(int axis) const;

    const T* data() const { return data_->data(); }
    T* data() { return data_->data(); }
    const std::vector<T>& vec() const { return *data_; }

    /// Value of a rank-0/size-1 tensor.
    T item() const;

    T max_abs() const;

    Tensor detached() const {
        Tensor t = *this;
        t.tape = nullptr;
        t.node = -1;
        return t;
    }

    /// Same buffer under a different shape (numel must match). Detached;
    /// the tape-aware variant is reshape() in ops.hpp.
    Tensor with_shape(Shape s) const {
        if (numel(s) != size())
            throw ValidationError("with_shape: numel mismatch " + shape_str(s) + " vs " +
                                  shape_str(shape_));
        Tensor t = *this;
        t.shape_ = std::move(s);
        t.tape = nullptr;
        t.node = -1;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        const T* src = data();
        U* dst = out.data();
        for (int64_t i = 0; i < size(); ++i) dst[i] = static_cast<U>(src[i]);
        return out;
    }

    bool on_tape() const { return tape != nullptr && node >= 0; }

    Tape<T>* tape = nullptr;
    int node = -1;

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

/// Reverse-mode differentiation tape. Nodes are appended in forward order;
/// the backward pass visits them exactly once in reverse append order.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(const std::vector<T>& grad_out, Tape<T>& tape)>;

    struct Node {
        int64_t size = 0;
        bool is_leaf = false;
        BackwardFn backward; // accumulates into parent grad buffers
        const char* op = "";
    };

    /// Register a trainable parameter. Returns the same value bound to a
    /// fresh leaf node on this tape.
    Tensor<T> leaf(const Tensor<T>& value);

    /// Record an operation result. Internal to ops.
    Tensor<T> record(Tensor<T> value, BackwardFn backward, const char* op = "");

    /// Run reverse-mode accumulation from a scalar loss.
    void backward(const Tensor<T>& loss);

    bool has_grad(const Tensor<T>& t) const;

    /// Gradient of the last backward() with respect to `t`. Zero tensor if
    /// the node never received gradient.
    Tensor<T> grad(const Tensor<T>& t) const;

    /// Grad buffer for node `n`, allocated to zeros on first touch.
    std::vector<T>& grad_buffer(int n, int64_t size);
    bool grad_present(int n) const { return n >= 0 && n < (int)grads_.size() && !grads_[n].empty(); }
    const std::vector<T>& grad_raw(int n) const { return grads_[n]; }

    size_t node_count() const { return nodes_.size(); }
    const std::vector<int>& leaves() const { return leaves_; }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    std::vector<int> leaves_;
};

/// Sparse linear map applied independently to every sample of the leading
/// batch axis: y[b] = A x[b]. One input sample may produce `out_per_in`
/// output samples (used to stack vertical neighborhoods along the batch
/// axis). CSR over output elements; the transpose (for the backward pass)
/// is built once and cached, so both directions run with disjoint writes.
struct LinearPlan {
    int64_t in_size = 0;   // elements per input sample
    int64_t out_size = 0;  // elements per output sample block (out_per_in samples)
    int64_t out_per_in = 1;
    Shape out_shape_tail;  // output shape after the batch axis

    std::vector<int64_t> row_ptr; // size out_size+1
    std::vector<int32_t> col;
    std::vector<double> w;

    void add_row_entry(int64_t col_idx, double weight) {
        col.push_back(static_cast<int32_t>(col_idx));
        w.push_back(weight);
    }
    void close_row() { row_ptr.push_back(static_cast<int64_t>(col.size())); }

    const LinearPlan& transposed() const;

private:
    mutable std::shared_ptr<LinearPlan> transpose_;
};

} // namespace eqsur
