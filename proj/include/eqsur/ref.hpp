#pragma once

#include "eqsur/ops.hpp"

namespace eqsur::ref {

// Serial reference implementations, written directly from the defining sums
// with plain nested loops. They are the independent oracles the test suites
// compare the fast OpenMP kernels against, and the baseline for the
// bench_kernels target. Deliberately no im2col, no GEMM, no plans.

/// Direct grouped 2D cross-correlation, one nested loop per index.
template <typename T>
Tensor<T> conv2d_grouped(const Tensor<T>& input, const Tensor<T>& kernel, int groups,
                         Pad2d pad);

/// Direct 5-loop evaluation of [f * psi](x) = sum_y psi_{x3}(x - y) f(y)
/// for height-dependent kernel stacks. `kernel` uses the grouped layout
/// [(H_out*Cout) x (h*Cin) x k x k] with vertical-tap-major input channels;
/// horizontal padding circular of width k/2, vertical zero of width h/2.
template <typename T>
Tensor<T> conv3d_height_dependent(const Tensor<T>& input, const Tensor<T>& kernel,
                                  int64_t h_out, int64_t cout, int64_t h_taps);

/// Materialize a vertically shared kernel bank into the equivalent unshared
/// height-dependent bank with n*C output channels per height: output height z
/// concatenates the kernels learned at heights z-k_v .. z+k_v (offset -k_v
/// first). `bank` holds H_out + 2*k_v kernel sets of C channels each.
template <typename T>
Tensor<T> materialize_shared_kernels(const Tensor<T>& bank, int64_t h_out, int64_t kv);

/// Exhaustive per-block maximum.
template <typename T>
Tensor<T> max_pool3d(const Tensor<T>& x);

} // namespace eqsur::ref
