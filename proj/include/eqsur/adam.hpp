#pragma once

#include <vector>

#include "eqsur/tensor.hpp"

namespace eqsur {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter order,
/// so step() must always be called with the same parameter list. A step with
/// any non-finite gradient is rejected: parameters and the step counter stay
/// untouched and the incident is counted.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg), lr_mult_(1.0) {}

    /// Returns false when the step was rejected (non-finite gradient).
    bool step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads);

    int64_t step_count() const { return t_; }
    int incidents() const { return incidents_; }
    double effective_lr() const { return cfg_.lr * lr_mult_; }
    void scale_lr(double factor) { lr_mult_ *= factor; }

private:
    AdamConfig cfg_;
    double lr_mult_;
    int64_t t_ = 0;
    int incidents_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace eqsur
