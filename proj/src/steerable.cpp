#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "eqsur/steerable.hpp"

#include "simd_dot.hpp"

namespace eqsur {

// ---------------------------------------------------------------------------
// Projector and constraint checks
// ---------------------------------------------------------------------------

namespace {

void check_kernel_args(const Tensor<double>& kernel, const FieldType& in_type,
                       const FieldType& out_type) {
    if (kernel.rank() != 4)
        throw ValidationError("kernel must be [Cout,Cin,k,k], got " + shape_str(kernel.shape()));
    if (kernel.extent(0) != out_type.channels() || kernel.extent(1) != in_type.channels())
        throw ValidationError("kernel channels do not match field types");
    if (kernel.extent(2) != kernel.extent(3) || kernel.extent(2) % 2 == 0)
        throw ValidationError("kernel must be square with odd size, got " +
                              shape_str(kernel.shape()));
}

} // namespace

Tensor<double> project_kernel(const Tensor<double>& raw, const FieldType& in_type,
                              const FieldType& out_type) {
    check_kernel_args(raw, in_type, out_type);
    const int64_t Cout = raw.extent(0), Cin = raw.extent(1), k = raw.extent(2);
    const GroupKind kind = in_type.group;
    Tensor<double> out({Cout, Cin, k, k});
    const auto elements = group_elements(kind);
    const double invg = 1.0 / static_cast<double>(elements.size());

    for (GroupElement g : elements) {
        const GroupElement gi = inverse(g);
        // position map x -> g.x on the centered kernel grid
        std::vector<int64_t> gx(k * k);
        for (int64_t a = 0; a < k; ++a)
            for (int64_t b = 0; b < k; ++b) {
                int64_t s1, s2;
                act_on_index(g, k, a, b, &s1, &s2);
                gx[a * k + b] = s1 * k + s2;
            }
        for (int fo = 0; fo < out_type.num_fields(); ++fo) {
            const int oo = out_type.field_offset(fo);
            const int dout = rep_dim(out_type.fields[fo], kind);
            const auto A = rep_matrix(out_type.fields[fo], kind, gi); // rho_out(g^-1)
            for (int fi = 0; fi < in_type.num_fields(); ++fi) {
                const int oi = in_type.field_offset(fi);
                const int din = rep_dim(in_type.fields[fi], kind);
                const auto B = rep_matrix(in_type.fields[fi], kind, g); // rho_in(g)
                for (int64_t p = 0; p < k * k; ++p) {
                    const int64_t q = gx[p];
                    for (int o = 0; o < dout; ++o)
                        for (int i = 0; i < din; ++i) {
                            double acc = 0.0;
                            for (int o2 = 0; o2 < dout; ++o2)
                                for (int i2 = 0; i2 < din; ++i2)
                                    acc += A[o * dout + o2] *
                                           raw.data()[((oo + o2) * Cin + oi + i2) * k * k + q] *
                                           B[i2 * din + i];
                            out.data()[((oo + o) * Cin + oi + i) * k * k + p] += invg * acc;
                        }
                }
            }
        }
    }
    return out;
}

double steerability_violation(const Tensor<double>& kernel, const FieldType& in_type,
                              const FieldType& out_type) {
    check_kernel_args(kernel, in_type, out_type);
    const int64_t Cout = kernel.extent(0), Cin = kernel.extent(1), k = kernel.extent(2);
    const GroupKind kind = in_type.group;
    double norm = kernel.max_abs();
    if (norm == 0.0) norm = 1.0;

    double worst = 0.0;
    for (GroupElement g : group_elements(kind)) {
        const GroupElement gi = inverse(g);
        for (int fo = 0; fo < out_type.num_fields(); ++fo) {
            const int oo = out_type.field_offset(fo);
            const int dout = rep_dim(out_type.fields[fo], kind);
            const auto A = rep_matrix(out_type.fields[fo], kind, g); // rho_out(g)
            for (int fi = 0; fi < in_type.num_fields(); ++fi) {
                const int oi = in_type.field_offset(fi);
                const int din = rep_dim(in_type.fields[fi], kind);
                const auto B = rep_matrix(in_type.fields[fi], kind, gi); // rho_in(g^-1)
                for (int64_t a = 0; a < k; ++a)
                    for (int64_t b = 0; b < k; ++b) {
                        int64_t s1, s2;
                        act_on_index(g, k, a, b, &s1, &s2); // g.x
                        for (int o = 0; o < dout; ++o)
                            for (int i = 0; i < din; ++i) {
                                const double lhs =
                                    kernel.data()[((oo + o) * Cin + oi + i) * k * k + s1 * k + s2];
                                double rhs = 0.0;
                                for (int o2 = 0; o2 < dout; ++o2)
                                    for (int i2 = 0; i2 < din; ++i2)
                                        rhs += A[o * dout + o2] *
                                               kernel.data()[((oo + o2) * Cin + oi + i2) * k * k +
                                                             a * k + b] *
                                               B[i2 * din + i];
                                worst = std::max(worst, std::abs(lhs - rhs) / norm);
                            }
                    }
            }
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Pair basis (cached)
// ---------------------------------------------------------------------------

std::shared_ptr<const PairBasis> pair_basis(RepKind rep_out, RepKind rep_in, GroupKind group,
                                            int k) {
    if (k % 2 == 0) throw ValidationError("pair_basis: kernel size must be odd");
    using Key = std::tuple<int, int, int, int>;
    static std::map<Key, std::shared_ptr<const PairBasis>> cache;
    static std::mutex mu;
    const Key key{static_cast<int>(rep_out), static_cast<int>(rep_in), static_cast<int>(group), k};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }

    const int dout = rep_dim(rep_out, group);
    const int din = rep_dim(rep_in, group);
    const int64_t dim = static_cast<int64_t>(dout) * din * k * k;
    const auto elements = group_elements(group);
    const double invg = 1.0 / static_cast<double>(elements.size());

    // Project every canonical unit kernel e_(o',i',x'). For a unit kernel the
    // group average reduces to |G| rank-one contributions, one per element.
    std::vector<std::vector<double>> cand(static_cast<size_t>(dim));
    double trace = 0.0;
    int64_t j = 0;
    for (int o2 = 0; o2 < dout; ++o2)
        for (int i2 = 0; i2 < din; ++i2)
            for (int64_t a = 0; a < k; ++a)
                for (int64_t b = 0; b < k; ++b, ++j) {
                    std::vector<double> v(static_cast<size_t>(dim), 0.0);
                    for (GroupElement g : elements) {
                        const GroupElement gi = inverse(g);
                        int64_t s1, s2;
                        act_on_index(gi, k, a, b, &s1, &s2); // x = g^-1 . x'
                        const auto A = rep_matrix(rep_out, group, gi);
                        const auto B = rep_matrix(rep_in, group, g);
                        for (int o = 0; o < dout; ++o) {
                            const double ao = A[o * dout + o2];
                            if (ao == 0.0) continue;
                            for (int i = 0; i < din; ++i) {
                                const double w = ao * B[i2 * din + i];
                                if (w == 0.0) continue;
                                v[((static_cast<int64_t>(o) * din + i) * k + s1) * k + s2] +=
                                    invg * w;
                            }
                        }
                    }
                    trace += v[static_cast<size_t>(j)];
                    cand[static_cast<size_t>(j)] = std::move(v);
                }

    // Pivoted modified Gram-Schmidt with drop tolerance 1e-10.
    auto basis = std::make_shared<PairBasis>();
    basis->rep_out = rep_out;
    basis->rep_in = rep_in;
    basis->group = group;
    basis->k = k;
    basis->dim_out = dout;
    basis->dim_in = din;
    basis->projector_trace = trace;

    auto norm2 = [dim](const std::vector<double>& v) {
        double s = 0.0;
        for (int64_t i = 0; i < dim; ++i) s += v[i] * v[i];
        return s;
    };
    std::vector<double> n2(cand.size());
    for (size_t c = 0; c < cand.size(); ++c) n2[c] = norm2(cand[c]);
    const double drop = 1e-10;
    while (true) {
        size_t pivot = 0;
        double best = -1.0;
        for (size_t c = 0; c < cand.size(); ++c)
            if (n2[c] > best) {
                best = n2[c];
                pivot = c;
            }
        if (best < drop) break;
        std::vector<double> b = std::move(cand[pivot]);
        // one re-orthogonalization pass for numerical hygiene
        for (const auto& e : basis->elems) {
            double dot = 0.0;
            for (int64_t i = 0; i < dim; ++i) dot += b[i] * e[i];
            for (int64_t i = 0; i < dim; ++i) b[i] -= dot * e[i];
        }
        const double nb = std::sqrt(norm2(b));
        if (nb * nb < drop) {
            cand[pivot] = {};
            n2[pivot] = -1.0;
            continue;
        }
        for (int64_t i = 0; i < dim; ++i) b[i] /= nb;
        for (size_t c = 0; c < cand.size(); ++c) {
            if (n2[c] < 0.0 || cand[c].empty()) continue;
            double dot = 0.0;
            for (int64_t i = 0; i < dim; ++i) dot += cand[c][i] * b[i];
            if (dot != 0.0)
                for (int64_t i = 0; i < dim; ++i) cand[c][i] -= dot * b[i];
            n2[c] = norm2(cand[c]);
        }
        cand[pivot] = {};
        n2[pivot] = -1.0;
        basis->elems.push_back(std::move(b));
    }
    basis->d = static_cast<int>(basis->elems.size());

    std::lock_guard<std::mutex> lock(mu);
    auto ret = cache.emplace(key, std::move(basis)).first->second;
    return ret;
}

std::shared_ptr<const LayerBasis> build_layer_basis(const FieldType& in_type,
                                                    const FieldType& out_type, int k) {
    if (in_type.group != out_type.group)
        throw ValidationError("build_layer_basis: mismatched groups");
    auto lb = std::make_shared<LayerBasis>();
    lb->in_type = in_type;
    lb->out_type = out_type;
    lb->k = k;
    int off = 0;
    for (int fo = 0; fo < out_type.num_fields(); ++fo)
        for (int fi = 0; fi < in_type.num_fields(); ++fi) {
            LayerBasis::Block blk;
            blk.off_out = out_type.field_offset(fo);
            blk.off_in = in_type.field_offset(fi);
            blk.dim_out = rep_dim(out_type.fields[fo], out_type.group);
            blk.dim_in = rep_dim(in_type.fields[fi], in_type.group);
            blk.coeff_offset = off;
            blk.basis = pair_basis(out_type.fields[fo], in_type.fields[fi], in_type.group, k);
            off += blk.basis->d;
            lb->blocks.push_back(std::move(blk));
        }
    lb->total_dim = off;
    return lb;
}

// ---------------------------------------------------------------------------
// Kernel bank expansion (differentiable)
// ---------------------------------------------------------------------------

namespace {

/// coeffs [H, taps, d] -> grouped kernel bank [(H*Cout) x (taps*Cin) x k x k];
/// each (height, tap) slot expands its own steerable kernel from the shared
/// layer basis. `basis_t` holds working-precision copies of the basis
/// elements, gathered per block into contiguous (d x block_size) panels.
template <typename T>
Tensor<T> expand_bank(const Tensor<T>& coeffs, std::shared_ptr<const LayerBasis> lb,
                      std::shared_ptr<const std::vector<std::vector<T>>> basis_t, int H,
                      int taps, int Cout, int Cin) {
    const int k = lb->k;
    const int64_t cols = static_cast<int64_t>(taps) * Cin;
    const int64_t kk = static_cast<int64_t>(k) * k;
    const int64_t d = lb->total_dim;
    Tensor<T> bank({static_cast<int64_t>(H) * Cout, cols, k, k});
    T* pb = bank.data();
    const T* pc = coeffs.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int z = 0; z < H; ++z)
        for (int tap = 0; tap < taps; ++tap) {
            const T* cs = pc + (static_cast<int64_t>(z) * taps + tap) * d;
            for (size_t bi = 0; bi < lb->blocks.size(); ++bi) {
                const auto& blk = lb->blocks[bi];
                const int64_t bsize = static_cast<int64_t>(blk.dim_out) * blk.dim_in * kk;
                // accumulate the block kernel contiguously, then scatter rows
                std::vector<T> tmp(bsize, T(0));
                const T* panel = (*basis_t)[bi].data();
                for (int i = 0; i < blk.basis->d; ++i) {
                    const T c = cs[blk.coeff_offset + i];
                    if (c == T(0)) continue;
                    const T* src = panel + static_cast<int64_t>(i) * bsize;
                    for (int64_t p = 0; p < bsize; ++p) tmp[p] += c * src[p];
                }
                for (int o = 0; o < blk.dim_out; ++o)
                    for (int ii = 0; ii < blk.dim_in; ++ii) {
                        const int64_t row = static_cast<int64_t>(z) * Cout + blk.off_out + o;
                        const int64_t col = static_cast<int64_t>(tap) * Cin + blk.off_in + ii;
                        std::copy_n(tmp.data() + (static_cast<int64_t>(o) * blk.dim_in + ii) * kk,
                                    kk, pb + (row * cols + col) * kk);
                    }
            }
        }

    if (!coeffs.tape) return bank;
    const int nc = coeffs.node;
    const int64_t csize = coeffs.size();
    return coeffs.tape->record(std::move(bank), [=](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nc, csize);
#pragma omp parallel for collapse(2) schedule(static)
        for (int z = 0; z < H; ++z)
            for (int tap = 0; tap < taps; ++tap) {
                T* gc = buf.data() + (static_cast<int64_t>(z) * taps + tap) * d;
                for (size_t bi = 0; bi < lb->blocks.size(); ++bi) {
                    const auto& blk = lb->blocks[bi];
                    const int64_t bsize = static_cast<int64_t>(blk.dim_out) * blk.dim_in * kk;
                    // gather the block gradient contiguously once, then take
                    // plain dot products against the basis panel
                    std::vector<T> gtmp(bsize);
                    for (int o = 0; o < blk.dim_out; ++o)
                        for (int ii = 0; ii < blk.dim_in; ++ii) {
                            const int64_t row =
                                static_cast<int64_t>(z) * Cout + blk.off_out + o;
                            const int64_t col =
                                static_cast<int64_t>(tap) * Cin + blk.off_in + ii;
                            std::copy_n(g.data() + (row * cols + col) * kk, kk,
                                        gtmp.data() +
                                            (static_cast<int64_t>(o) * blk.dim_in + ii) * kk);
                        }
                    const T* panel = (*basis_t)[bi].data();
                    for (int i = 0; i < blk.basis->d; ++i) {
                        const T* src = panel + static_cast<int64_t>(i) * bsize;
                        gc[blk.coeff_offset + i] += detail::dot_fixed(gtmp.data(), src, bsize);
                    }
                }
            }
    }, "expand");
}

/// Baseline: one unconstrained kernel [Cout x (taps*Cin) x k x k] shared by
/// all H heights; gradient sums over the replicas.
template <typename T>
Tensor<T> replicate_bank(const Tensor<T>& raw, int H) {
    const int64_t rows = raw.extent(0);
    const int64_t rest = raw.size() / rows;
    Shape s = raw.shape();
    s[0] = rows * H;
    Tensor<T> bank(s);
    for (int z = 0; z < H; ++z)
        std::copy_n(raw.data(), raw.size(), bank.data() + static_cast<int64_t>(z) * raw.size());
    if (!raw.tape) return bank;
    const int nr = raw.node;
    const int64_t rsize = raw.size();
    return raw.tape->record(std::move(bank), [nr, rsize, H](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nr, rsize);
        for (int z = 0; z < H; ++z) {
            const T* src = g.data() + static_cast<int64_t>(z) * rsize;
            for (int64_t i = 0; i < rsize; ++i) buf[i] += src[i];
        }
    }, "replicate");
    (void)rest;
}

} // namespace

// ---------------------------------------------------------------------------
// Conv3dLayer
// ---------------------------------------------------------------------------

template <typename T>
Conv3dLayer<T>::Conv3dLayer(const Spec& spec, Rng& init) : spec_(spec) {
    if (spec.k % 2 == 0) throw ValidationError("Conv3dLayer: horizontal kernel size must be odd");
    if (spec.taps < 1 || spec.taps > spec.n3 + 2 * (spec.taps / 2))
        throw ValidationError("Conv3dLayer: vertical extent too large");
    const bool shared = spec.variant == Variant::SteerableVerticalShared;
    const int kv = shared ? spec.kv : 0;
    const int n = 2 * kv + 1;
    if (shared && (kv < 0 || n > spec.n3))
        throw ValidationError("Conv3dLayer: sharing neighborhood taller than the domain");

    int cout_base;
    if (spec.variant == Variant::Baseline3d) {
        in_channels_ = spec.cin;
        cout_base = spec.cout;
        out_channels_ = spec.cout;
    } else {
        basis_ = build_layer_basis(spec.in_type, spec.out_type, spec.k);
        in_channels_ = spec.in_type.channels();
        cout_base = spec.out_type.channels();
        out_channels_ = shared ? n * cout_base : cout_base;
        // working-precision basis panels, one contiguous (d x block) slab per
        // block, shared with the expansion closures
        auto panels = std::make_shared<std::vector<std::vector<T>>>();
        for (const auto& blk : basis_->blocks) {
            std::vector<T> panel;
            panel.reserve(blk.basis->elems.size() * blk.basis->elems.front().size());
            for (const auto& e : blk.basis->elems)
                for (double v : e) panel.push_back(static_cast<T>(v));
            panels->push_back(std::move(panel));
        }
        basis_t_ = std::move(panels);
    }
    groups_ = shared ? spec.n3 + 2 * kv : spec.n3;
    bank_rows_ = groups_ * cout_base;

    // --- plans -------------------------------------------------------------
    const int64_t N1 = spec.n1, N2 = spec.n2, N3 = spec.n3;
    const int64_t Cin = in_channels_, Cb = cout_base;
    const int64_t taps = spec.taps, pv = taps / 2;
    const int64_t H = N3;

    {
        // input [Cin,N1,N2,N3] -> stacked receptive fields, one stacked
        // sample per neighborhood offset j (n = 1 when not shared)
        auto plan = std::make_shared<LinearPlan>();
        plan->in_size = Cin * N1 * N2 * N3;
        plan->out_per_in = n;
        plan->out_size = static_cast<int64_t>(n) * groups_ * taps * Cin * N1 * N2;
        plan->out_shape_tail = {static_cast<int64_t>(groups_) * taps * Cin, N1, N2};
        plan->row_ptr.push_back(0);
        for (int j = 0; j < n; ++j)
            for (int64_t q = 0; q < groups_; ++q)
                for (int64_t tap = 0; tap < taps; ++tap)
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t y = 0; y < N1; ++y)
                            for (int64_t x = 0; x < N2; ++x) {
                                // group q = kernel set with home height q - kv,
                                // applied at height z' = (q - kv) + (j - kv)
                                const int64_t zp = q - kv + j - kv;
                                const int64_t sz = zp - pv + tap;
                                if (zp >= 0 && zp < H && sz >= 0 && sz < N3)
                                    plan->add_row_entry(((ci * N1 + y) * N2 + x) * N3 + sz, 1.0);
                                plan->close_row();
                            }
        stack_plan_ = plan;
    }
    {
        // grouped conv output (n stacked samples viewed as one) ->
        // [Cout_total, N1, N2, H]; offset -kv comes first in the channel
        // concatenation
        auto plan = std::make_shared<LinearPlan>();
        plan->in_size = static_cast<int64_t>(n) * bank_rows_ * N1 * N2;
        plan->out_size = static_cast<int64_t>(out_channels_) * N1 * N2 * H;
        plan->out_shape_tail = {static_cast<int64_t>(out_channels_), N1, N2, H};
        plan->row_ptr.push_back(0);
        for (int o = -kv; o <= kv; ++o)
            for (int64_t c = 0; c < Cb; ++c)
                for (int64_t y = 0; y < N1; ++y)
                    for (int64_t x = 0; x < N2; ++x)
                        for (int64_t z = 0; z < H; ++z) {
                            const int64_t j = kv - o;
                            const int64_t q = z + o + kv;
                            if (q >= 0 && q < groups_)
                                plan->add_row_entry(((j * bank_rows_ + q * Cb + c) * N1 + y) * N2 +
                                                        x,
                                                    1.0);
                            plan->close_row();
                        }
        regroup_plan_ = plan;
    }

    // --- parameters ----------------------------------------------------------
    // Xavier on the *expanded* kernel entries. Basis elements are
    // Frobenius-orthonormal over their (dim_out x dim_in x k x k) block, so a
    // coefficient scale of limit * sqrt(block/d) reproduces the target
    // entry variance after expansion.
    const double limit =
        std::sqrt(6.0 / (static_cast<double>(in_channels_ + cout_base) * spec.k * spec.k * taps));
    if (spec.variant == Variant::Baseline3d) {
        weights_ = Tensor<T>::uniform({static_cast<int64_t>(cout_base), taps * Cin,
                                       static_cast<int64_t>(spec.k), static_cast<int64_t>(spec.k)},
                                      init, static_cast<T>(-limit), static_cast<T>(limit));
    } else {
        weights_ = Tensor<T>::zeros({static_cast<int64_t>(groups_), taps,
                                     static_cast<int64_t>(basis_->total_dim)});
        T* w = weights_.data();
        for (int64_t zt = 0; zt < static_cast<int64_t>(groups_) * taps; ++zt)
            for (const auto& blk : basis_->blocks) {
                const double block_size =
                    static_cast<double>(blk.dim_out) * blk.dim_in * spec.k * spec.k;
                const double lb = limit * std::sqrt(block_size / std::max(1, blk.basis->d));
                for (int i = 0; i < blk.basis->d; ++i)
                    w[zt * basis_->total_dim + blk.coeff_offset + i] =
                        static_cast<T>(init.uniform(-lb, lb));
            }
    }
}

template <typename T>
int64_t Conv3dLayer<T>::count_parameters(const Spec& spec) {
    if (spec.variant == Variant::Baseline3d)
        return static_cast<int64_t>(spec.cout) * spec.taps * spec.cin * spec.k * spec.k;
    auto lb = build_layer_basis(spec.in_type, spec.out_type, spec.k);
    const int kv = (spec.variant == Variant::SteerableVerticalShared) ? spec.kv : 0;
    return static_cast<int64_t>(spec.n3 + 2 * kv) * spec.taps * lb->total_dim;
}

template <typename T>
Tensor<T> Conv3dLayer<T>::expand(const Tensor<T>& coeffs) const {
    if (spec_.variant == Variant::Baseline3d) return replicate_bank(coeffs, groups_);
    const int cb = (spec_.variant == Variant::SteerableVerticalShared)
                       ? spec_.out_type.channels()
                       : out_channels_;
    return expand_bank(coeffs, basis_, basis_t_, groups_, spec_.taps, cb, in_channels_);
}

template <typename T>
void Conv3dLayer<T>::bind(Tape<T>* tape) {
    bound_tape_ = tape;
    if (tape) {
        bound_weights_ = tape->leaf(weights_);
        bound_bank_ = expand(bound_weights_);
    } else {
        bound_weights_ = Tensor<T>();
        bound_bank_ = Tensor<T>();
    }
}

template <typename T>
void Conv3dLayer<T>::set_weights(Tensor<T> w) {
    if (w.shape() != weights_.shape())
        throw ValidationError("Conv3dLayer::set_weights: shape mismatch");
    weights_ = std::move(w);
    cache_valid_ = false;
}

template <typename T>
const Tensor<T>& Conv3dLayer<T>::expanded_bank() const {
    if (!cache_valid_ || cached_weights_.size() == 0 ||
        cached_weights_.data() != weights_.data()) {
        cached_bank_ = expand(weights_.detached());
        cached_weights_ = weights_;
        cache_valid_ = true;
    }
    return cached_bank_;
}

template <typename T>
Tensor<T> Conv3dLayer<T>::forward(const Tensor<T>& x) const {
    if (x.rank() != 5)
        throw ValidationError("Conv3dLayer: expected [B,Cin,N1,N2,N3], got " +
                              shape_str(x.shape()));
    if (x.extent(1) != in_channels_)
        throw ValidationError("Conv3dLayer: channel axis is " + std::to_string(x.extent(1)) +
                              ", layer expects " + std::to_string(in_channels_));
    if (x.extent(2) != spec_.n1 || x.extent(3) != spec_.n2 || x.extent(4) != spec_.n3)
        throw ValidationError("Conv3dLayer: spatial extents " + shape_str(x.shape()) +
                              " do not match layer spec " + std::to_string(spec_.n1) + "x" +
                              std::to_string(spec_.n2) + "x" + std::to_string(spec_.n3));
    const int64_t B = x.extent(0);
    const Tensor<T>& bank = bound_tape_ ? bound_bank_ : expanded_bank();

    Tensor<T> stacked = apply_plan(x, stack_plan_);
    Tensor<T> convd = conv2d_grouped(stacked, bank, groups_, {PadMode::Circular, PadMode::Circular});
    const int n = static_cast<int>(stack_plan_->out_per_in);
    Tensor<T> grouped = reshape(convd, {B, static_cast<int64_t>(n) * bank_rows_,
                                        static_cast<int64_t>(spec_.n1),
                                        static_cast<int64_t>(spec_.n2)});
    return apply_plan(grouped, regroup_plan_);
}

template class Conv3dLayer<float>;
template class Conv3dLayer<double>;

} // namespace eqsur
