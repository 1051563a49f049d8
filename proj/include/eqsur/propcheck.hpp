#pragma once

#include <string>
#include <vector>

#include "eqsur/cae.hpp"
#include "eqsur/checkpoint.hpp"
#include "eqsur/lstm.hpp"

namespace eqsur::propcheck {

struct CheckResult {
    std::string name;
    double max_err = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct SuiteOptions {
    GroupKind group = GroupKind::D4;
    bool f32 = true;
    bool f64 = true;
    int inputs = 20;          ///< random inputs per check (batched)
    uint64_t seed = 2026;
    bool corrupt_kernel = false; ///< bypass the projector (negative control)
    // desk-scale model shapes
    CAEConfig cae_config = CAEConfig::desk();
};

/// g∘F = F∘g for the steerable conv layer, the full CAE, one LSTM step and
/// a 10-step rollout, at float32 (tol 1e-5) and float64 (tol 1e-12).
std::vector<CheckResult> equivariance_suite(const SuiteOptions& opt);

/// Kernel-constraint checks: projector idempotence, brute-force basis
/// ranks, steerability of expanded banks.
std::vector<CheckResult> kernel_suite(const SuiteOptions& opt);

/// Every expanded kernel of a (trained) checkpointed CAE satisfies the
/// constraint to 1e-12 when re-expanded in float64.
std::vector<CheckResult> checkpoint_kernel_suite(const Checkpoint& ckpt,
                                                 const CAEConfig& cfg);

/// Solver physics: post-projection divergence, conduction steady state,
/// sub-critical decay, discrete vector-calculus identities, step/rotation
/// commutativity.
std::vector<CheckResult> solver_suite();

void print_results(const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

/// max |a-b| / max(||a||_inf, ||b||_inf)
template <typename T>
double rel_err(const Tensor<T>& a, const Tensor<T>& b) {
    double diff = 0.0, norm = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(static_cast<double>(a.data()[i]) -
                                       static_cast<double>(b.data()[i])));
        norm = std::max({norm, std::abs(static_cast<double>(a.data()[i])),
                         std::abs(static_cast<double>(b.data()[i]))});
    }
    return norm == 0.0 ? diff : diff / norm;
}

} // namespace eqsur::propcheck
