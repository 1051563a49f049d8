#pragma once

#include <string>

#include "eqsur/steerable.hpp"

namespace eqsur {

/// Named handle to a trainable tensor inside a model, used by the training
/// loop to feed the optimizer and by checkpoints to serialize by name.
template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* slot;
};

/// Per-field bias. Sharing one bias across the channels of each regular
/// field is required for equivariance (a per-channel bias would break the
/// channel-permutation action); the baseline variant passes an identity map.
template <typename T>
class BiasLayer {
public:
    BiasLayer() = default;
    BiasLayer(std::vector<int> bias_of_channel, int entries)
        : map_(std::move(bias_of_channel)), bias_(Tensor<T>::zeros({entries})) {}

    Tensor<T> forward(const Tensor<T>& x) const {
        return add_bias(x, bound_tape_ ? bound_ : bias_, map_);
    }
    void bind(Tape<T>* tape) {
        bound_tape_ = tape;
        bound_ = tape ? tape->leaf(bias_) : Tensor<T>();
    }
    void collect(const std::string& name, std::vector<ParamRef<T>>& out) {
        out.push_back({name, &bias_});
    }
    Tensor<T>& value() { return bias_; }

private:
    std::vector<int> map_;
    Tensor<T> bias_;
    Tape<T>* bound_tape_ = nullptr;
    Tensor<T> bound_;
};

/// Batch normalization with field-pooled statistics (see batch_norm_fields).
template <typename T>
class BatchNormLayer {
public:
    BatchNormLayer() = default;
    BatchNormLayer(std::vector<int> field_of_channel, int num_fields)
        : map_(std::move(field_of_channel)),
          num_fields_(num_fields),
          gamma_(Tensor<T>::full({num_fields}, T(1))),
          beta_(Tensor<T>::zeros({num_fields})) {
        // start running statistics at (0, 1) so eval mode is well defined
        // (and batch-size independent) before any training update
        stats_.mean.assign(num_fields, 0.0);
        stats_.var.assign(num_fields, 1.0);
        stats_.initialized = true;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return batch_norm_fields(x, bound_tape_ ? bgamma_ : gamma_,
                                 bound_tape_ ? bbeta_ : beta_, map_, num_fields_, training,
                                 &stats_);
    }
    void bind(Tape<T>* tape) {
        bound_tape_ = tape;
        bgamma_ = tape ? tape->leaf(gamma_) : Tensor<T>();
        bbeta_ = tape ? tape->leaf(beta_) : Tensor<T>();
    }
    void collect(const std::string& name, std::vector<ParamRef<T>>& out) {
        out.push_back({name + ".gamma", &gamma_});
        out.push_back({name + ".beta", &beta_});
    }
    BatchNormStats& stats() { return stats_; }
    const BatchNormStats& stats() const { return stats_; }

private:
    std::vector<int> map_;
    int num_fields_ = 0;
    Tensor<T> gamma_, beta_;
    BatchNormStats stats_;
    Tape<T>* bound_tape_ = nullptr;
    Tensor<T> bgamma_, bbeta_;
};

} // namespace eqsur
