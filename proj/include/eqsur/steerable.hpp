#pragma once

#include <memory>
#include <string>

#include "eqsur/group.hpp"
#include "eqsur/ops.hpp"

namespace eqsur {

// ---------------------------------------------------------------------------
// Kernel constraint
// ---------------------------------------------------------------------------

/// Group-averaging intertwiner projector: the image of
///   P(k)(x) = |G|^-1 sum_g rho_out(g^-1) k(g.x) rho_in(g)
/// is exactly the space of kernels satisfying the steerability constraint
///   psi(g.x) = rho_out(g) psi(x) rho_in(g^-1)  for all g.
/// P is idempotent and self-adjoint under the Frobenius inner product.
Tensor<double> project_kernel(const Tensor<double>& raw, const FieldType& in_type,
                              const FieldType& out_type);

/// Constraint violation of a kernel: max over g of the relative error of
/// psi(g.x) = rho_out(g) psi(x) rho_in(g^-1).
double steerability_violation(const Tensor<double>& kernel, const FieldType& in_type,
                              const FieldType& out_type);

/// Orthonormal basis of the constraint solution space for one
/// (rep_out, rep_in) block, built by projecting canonical unit kernels and
/// pivoted Gram-Schmidt (drop tolerance 1e-10). Cached per signature.
struct PairBasis {
    RepKind rep_out, rep_in;
    GroupKind group;
    int k = 0;
    int dim_out = 0, dim_in = 0;
    int d = 0;                        // rank of the projector
    double projector_trace = 0.0;     // independent rank estimate (= rank, P idempotent)
    std::vector<std::vector<double>> elems; // d vectors of dim_out*dim_in*k*k
};

std::shared_ptr<const PairBasis> pair_basis(RepKind rep_out, RepKind rep_in, GroupKind group,
                                            int k);

/// Basis of a full layer kernel between two field types: one PairBasis per
/// (out field, in field) block, with coefficient offsets. The layer exposes
/// total_dim free parameters per 2D steerable kernel.
struct LayerBasis {
    FieldType in_type, out_type;
    int k = 0;
    struct Block {
        int off_out, off_in;          // channel offsets
        int dim_out, dim_in;
        int coeff_offset;
        std::shared_ptr<const PairBasis> basis;
    };
    std::vector<Block> blocks;
    int total_dim = 0;
};

std::shared_ptr<const LayerBasis> build_layer_basis(const FieldType& in_type,
                                                    const FieldType& out_type, int k);

// ---------------------------------------------------------------------------
// 3D convolutions from vertically stacked 2D kernels (grouped-2D realization)
// ---------------------------------------------------------------------------

/// One 3D convolution layer on [B, Cin, N1, N2, N3] built from height-
/// dependent stacks of 2D kernels, realized as a single grouped 2D
/// convolution (receptive fields sliced and stacked by a sparse plan).
/// Horizontal padding circular of width k/2, vertical zero of width taps/2.
///
/// Variants:
///  - SteerableHeightDependent: one stack of `taps` steerable kernels per
///    output height; parameters are basis coefficients [n3 x taps x d].
///  - SteerableVerticalShared: kernel learned at height q is applied at
///    heights q-kv..q+kv (outputs concatenated, offset -kv first, so
///    C_out = n*C); kv extra boundary kernel sets at top and bottom.
///  - Baseline3d: a standard unconstrained 3D kernel shared across heights.
template <typename T>
class Conv3dLayer {
public:
    enum class Variant { SteerableHeightDependent, SteerableVerticalShared, Baseline3d };

    struct Spec {
        Variant variant = Variant::SteerableHeightDependent;
        FieldType in_type, out_type; // out_type is the per-height base type when shared
        int cin = 0, cout = 0;       // Baseline3d channel counts
        int k = 3;                   // horizontal kernel size (odd)
        int taps = 3;                // vertical extent h
        int n1 = 0, n2 = 0, n3 = 0;  // input spatial extents
        int kv = 1;                  // sharing radius (SteerableVerticalShared)
    };

    Conv3dLayer(const Spec& spec, Rng& init);

    Tensor<T> forward(const Tensor<T>& x) const;

    /// Register parameters on a tape (training) or drop the binding
    /// (inference). The expanded kernel bank is built once per bind and
    /// cached; set_weights invalidates the inference cache.
    void bind(Tape<T>* tape);

    const Tensor<T>& weights() const { return weights_; }
    void set_weights(Tensor<T> w);
    Tensor<T>* weight_slot() { cache_valid_ = false; return &weights_; }

    int64_t param_count() const { return weights_.size(); }
    int out_channels() const { return out_channels_; }
    int in_channels() const { return in_channels_; }
    const Spec& spec() const { return spec_; }
    std::shared_ptr<const LayerBasis> layer_basis() const { return basis_; }

    /// Expanded grouped kernel bank [(groups*Cout_g) x (taps*Cin) x k x k],
    /// detached (inference view). Rebuilt when the cache is invalid.
    const Tensor<T>& expanded_bank() const;

    /// Closed-form free-parameter count for a spec (no construction).
    static int64_t count_parameters(const Spec& spec);

private:
    Tensor<T> expand(const Tensor<T>& coeffs) const; // tape-aware expansion

    Spec spec_;
    std::shared_ptr<const LayerBasis> basis_; // steerable variants
    // working-precision copy of the basis elements (hot expansion path)
    std::shared_ptr<const std::vector<std::vector<T>>> basis_t_;
    int in_channels_ = 0, out_channels_ = 0;
    int groups_ = 0;        // grouped-conv group count (n3 or n3+2kv)
    int bank_rows_ = 0;     // groups_ * per-group output channels
    std::shared_ptr<const LinearPlan> stack_plan_;   // input -> grouped-2D layout
    std::shared_ptr<const LinearPlan> regroup_plan_; // conv output -> [C,N1,N2,H]
    Tensor<T> weights_;

    Tape<T>* bound_tape_ = nullptr;
    Tensor<T> bound_weights_;
    Tensor<T> bound_bank_;
    // The inference cache keeps a reference to the exact weights tensor it
    // was expanded from. Holding the buffer alive makes the pointer
    // comparison sound (a freed address could otherwise be reused by the
    // next parameter update).
    mutable Tensor<T> cached_bank_;
    mutable Tensor<T> cached_weights_;
    mutable bool cache_valid_ = false;
};

} // namespace eqsur
