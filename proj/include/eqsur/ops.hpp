#pragma once

#include <memory>

#include "eqsur/tensor.hpp"

namespace eqsur {

enum class PadMode { None, Zero, Circular };

/// Per-axis padding of a 2D convolution. Circular/Zero pad by floor(k/2)
/// (output keeps the input extent); None is a valid convolution.
struct Pad2d {
    PadMode m1 = PadMode::Circular;
    PadMode m2 = PadMode::Circular;
};

// ---------------------------------------------------------------------------
// Elementwise and reduction operations (all differentiable)
// ---------------------------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double c);
template <typename T> Tensor<T> elu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh_op(const Tensor<T>& x);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x); // rank-0 result

/// Mean squared error over all elements (scalar). Composition of
/// sub/hadamard/sum_all, kept as a helper for the training loops.
template <typename T> Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

/// Tape-aware reshape (same buffer, gradient passes through unchanged).
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// out[b, c, ...] = x[b, c, ...] + bias[bias_of_channel[c]]. Bias entries
/// may be shared by several channels (one bias per regular field keeps the
/// layer equivariant); the gradient sums over all positions sharing an entry.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias,
                   const std::vector<int>& bias_of_channel);

// ---------------------------------------------------------------------------
// Convolution / pooling / resampling
// ---------------------------------------------------------------------------

/// Grouped 2D cross-correlation (no kernel flip).
///   input  [B, Cin, N1, N2], kernel [Cout, Cin/groups, k1, k2]
///   output [B, Cout, N1', N2']
/// Circular or zero padding of width floor(k/2) preserves the extent; None
/// yields N' = N - k + 1.
template <typename T>
Tensor<T> conv2d_grouped(const Tensor<T>& input, const Tensor<T>& kernel,
                         int groups, Pad2d pad);

/// 2x2x2 block maxima over the three trailing spatial axes of
/// [B, C, N1, N2, N3]; all extents must be even. Gradients route to the
/// argmax, first occurrence in row-major order on ties.
template <typename T> Tensor<T> max_pool3d(const Tensor<T>& x);

/// Factor-2 trilinear upsampling, cell-centered convention (output sample
/// centers interleave input centers symmetrically, edges clamped). This is
/// the variant that commutes with the D4 grid action on even grids.
template <typename T> Tensor<T> upsample_trilinear2(const Tensor<T>& x);

/// Apply a sparse linear map per batch sample (gather/scatter/interp).
template <typename T>
Tensor<T> apply_plan(const Tensor<T>& x, std::shared_ptr<const LinearPlan> plan);

/// Standalone padding op: circular along the two horizontal axes, zeros
/// along the vertical axis of [B, C, N1, N2, N3] (or [B, C, N1, N2]).
template <typename T>
Tensor<T> pad_field(const Tensor<T>& x, int pad1, int pad2, int pad3);

// ---------------------------------------------------------------------------
// Normalization / regularization
// ---------------------------------------------------------------------------

/// Running statistics owned by a batch-norm layer (one pair per field).
struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;
    bool initialized = false;
};

/// Batch normalization with statistics pooled over batch, all spatial
/// positions and all channels of each field (per-channel statistics would
/// break equivariance). gamma/beta hold one entry per field.
template <typename T>
Tensor<T> batch_norm_fields(const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta,
                            const std::vector<int>& field_of_channel,
                            int num_fields, bool training,
                            BatchNormStats* running, double momentum = 0.9,
                            double eps = 1e-5);

/// Dropout that zeroes whole fields: one Bernoulli draw per (sample, field),
/// shared across the field's channels and all positions, scaled by
/// 1/(1-rate). Identity when not training. Commutes with the field action.
template <typename T>
Tensor<T> dropout_fields(const Tensor<T>& x, double rate,
                         const std::vector<int>& field_of_channel,
                         int num_fields, Rng& rng, bool training);

} // namespace eqsur
