#include <cstring>
#include <vector>

#include "eqsur/ops.hpp"

#include "simd_dot.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EQSUR_USE_AVX2 1
#endif

namespace eqsur {

namespace {

// ---------------------------------------------------------------------------
// Register-blocked GEMM micro kernel: C[M x N] (+)= A[M x K] * B[K x N],
// all row-major. Accumulation order over k is fixed per output element, so
// results are bitwise reproducible at any thread count. AVX2/FMA tiles with
// a generic fallback for other targets.
// ---------------------------------------------------------------------------

constexpr int kMR = 4;
constexpr int kNR = 16;

template <typename T>
void gemm_tile_generic(const T* A, const T* B, T* C, int64_t it, int64_t jt, int iw, int jw,
                       int64_t K, int64_t N) {
    T acc[kMR][kNR] = {};
    for (int64_t k = 0; k < K; ++k) {
        const T* brow = B + k * N + jt;
        for (int i = 0; i < iw; ++i) {
            const T a = A[(it + i) * K + k];
            for (int j = 0; j < jw; ++j) acc[i][j] += a * brow[j];
        }
    }
    for (int i = 0; i < iw; ++i) {
        T* crow = C + (it + i) * N + jt;
        for (int j = 0; j < jw; ++j) crow[j] += acc[i][j];
    }
}

#ifdef EQSUR_USE_AVX2

/// 4 x 16 float tile: 8 accumulator registers, two FMA streams per row.
void gemm_tile_f32(const float* A, const float* B, float* C, int64_t it, int64_t jt, int64_t K,
                   int64_t N) {
    __m256 acc[kMR][2];
    for (int i = 0; i < kMR; ++i) {
        acc[i][0] = _mm256_setzero_ps();
        acc[i][1] = _mm256_setzero_ps();
    }
    for (int64_t k = 0; k < K; ++k) {
        const float* brow = B + k * N + jt;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        for (int i = 0; i < kMR; ++i) {
            const __m256 a = _mm256_set1_ps(A[(it + i) * K + k]);
            acc[i][0] = _mm256_fmadd_ps(a, b0, acc[i][0]);
            acc[i][1] = _mm256_fmadd_ps(a, b1, acc[i][1]);
        }
    }
    for (int i = 0; i < kMR; ++i) {
        float* crow = C + (it + i) * N + jt;
        _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[i][0]));
        _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[i][1]));
    }
}

/// 4 x 16 double tile (four 4-wide accumulator streams per row would blow
/// the register budget; use 2 rows x 16 columns instead).
void gemm_tile_f64(const double* A, const double* B, double* C, int64_t it, int64_t jt,
                   int64_t K, int64_t N, int iw) {
    __m256d acc[2][4];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) acc[i][j] = _mm256_setzero_pd();
    for (int64_t k = 0; k < K; ++k) {
        const double* brow = B + k * N + jt;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        const __m256d b2 = _mm256_loadu_pd(brow + 8);
        const __m256d b3 = _mm256_loadu_pd(brow + 12);
        for (int i = 0; i < iw; ++i) {
            const __m256d a = _mm256_set1_pd(A[(it + i) * K + k]);
            acc[i][0] = _mm256_fmadd_pd(a, b0, acc[i][0]);
            acc[i][1] = _mm256_fmadd_pd(a, b1, acc[i][1]);
            acc[i][2] = _mm256_fmadd_pd(a, b2, acc[i][2]);
            acc[i][3] = _mm256_fmadd_pd(a, b3, acc[i][3]);
        }
    }
    for (int i = 0; i < iw; ++i) {
        double* crow = C + (it + i) * N + jt;
        for (int j = 0; j < 4; ++j)
            _mm256_storeu_pd(crow + 4 * j,
                             _mm256_add_pd(_mm256_loadu_pd(crow + 4 * j), acc[i][j]));
    }
}

#endif // EQSUR_USE_AVX2

template <typename T>
void gemm_accumulate(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t jt = 0; jt < N; jt += kNR) {
        const int jw = static_cast<int>(std::min<int64_t>(kNR, N - jt));
        for (int64_t it = 0; it < M; it += kMR) {
            const int iw = static_cast<int>(std::min<int64_t>(kMR, M - it));
#ifdef EQSUR_USE_AVX2
            if (jw == kNR) {
                if constexpr (std::is_same_v<T, float>) {
                    if (iw == kMR) {
                        gemm_tile_f32(A, B, C, it, jt, K, N);
                        continue;
                    }
                } else if constexpr (std::is_same_v<T, double>) {
                    for (int64_t i2 = 0; i2 < iw; i2 += 2) {
                        gemm_tile_f64(A, B, C, it + i2, jt, K, N,
                                      static_cast<int>(std::min<int64_t>(2, iw - i2)));
                    }
                    continue;
                }
            }
#endif
            gemm_tile_generic(A, B, C, it, jt, iw, jw, K, N);
        }
    }
}

struct ConvGeom {
    int64_t B, Cin, N1, N2;
    int64_t Cout, Cing, Coutg, k1, k2;
    int groups;
    int64_t O1, O2, NP, K;
    std::vector<int32_t> src; // (k1*k2) x NP source offsets within one plane, -1 = zero
};

int64_t out_extent(int64_t n, int64_t k, PadMode m) {
    const int64_t p = (m == PadMode::None) ? 0 : k / 2;
    const int64_t o = n + 2 * p - k + 1;
    if (o <= 0) throw ValidationError("conv2d_grouped: kernel larger than padded input");
    return o;
}

template <typename T>
ConvGeom make_geom(const Tensor<T>& input, const Tensor<T>& kernel, int groups, Pad2d pad) {
    if (input.rank() != 4)
        throw ValidationError("conv2d_grouped: input must be [B,Cin,N1,N2], got " +
                              shape_str(input.shape()));
    if (kernel.rank() != 4)
        throw ValidationError("conv2d_grouped: kernel must be [Cout,Cin/groups,k,k], got " +
                              shape_str(kernel.shape()));
    ConvGeom g;
    g.B = input.extent(0);
    g.Cin = input.extent(1);
    g.N1 = input.extent(2);
    g.N2 = input.extent(3);
    g.Cout = kernel.extent(0);
    g.Cing = kernel.extent(1);
    g.k1 = kernel.extent(2);
    g.k2 = kernel.extent(3);
    g.groups = groups;
    if (groups <= 0 || g.Cin % groups != 0)
        throw ValidationError("conv2d_grouped: groups=" + std::to_string(groups) +
                              " does not divide Cin=" + std::to_string(g.Cin));
    if (g.Cout % groups != 0)
        throw ValidationError("conv2d_grouped: groups=" + std::to_string(groups) +
                              " does not divide Cout=" + std::to_string(g.Cout));
    if (g.Cing != g.Cin / groups)
        throw ValidationError("conv2d_grouped: kernel channel axis is " +
                              std::to_string(g.Cing) + ", expected Cin/groups = " +
                              std::to_string(g.Cin / groups));
    if ((pad.m1 == PadMode::Circular && g.k1 / 2 > g.N1) ||
        (pad.m2 == PadMode::Circular && g.k2 / 2 > g.N2))
        throw ValidationError("conv2d_grouped: circular pad width exceeds extent");
    g.Coutg = g.Cout / groups;
    g.O1 = out_extent(g.N1, g.k1, pad.m1);
    g.O2 = out_extent(g.N2, g.k2, pad.m2);
    g.NP = g.O1 * g.O2;
    g.K = g.Cing * g.k1 * g.k2;

    const int64_t p1 = (pad.m1 == PadMode::None) ? 0 : g.k1 / 2;
    const int64_t p2 = (pad.m2 == PadMode::None) ? 0 : g.k2 / 2;
    g.src.assign(g.k1 * g.k2 * g.NP, -1);
    for (int64_t d1 = 0; d1 < g.k1; ++d1)
        for (int64_t d2 = 0; d2 < g.k2; ++d2) {
            int32_t* row = g.src.data() + (d1 * g.k2 + d2) * g.NP;
            for (int64_t y = 0; y < g.O1; ++y) {
                int64_t sy = y + d1 - p1;
                if (pad.m1 == PadMode::Circular)
                    sy = (sy + g.N1) % g.N1;
                else if (sy < 0 || sy >= g.N1) {
                    continue; // whole row out of range vertically -> zeros
                }
                for (int64_t x = 0; x < g.O2; ++x) {
                    int64_t sx = x + d2 - p2;
                    if (pad.m2 == PadMode::Circular)
                        sx = (sx + g.N2) % g.N2;
                    else if (sx < 0 || sx >= g.N2)
                        continue;
                    row[y * g.O2 + x] = static_cast<int32_t>(sy * g.N2 + sx);
                }
            }
        }
    return g;
}

template <typename T>
void im2col(const ConvGeom& g, const T* in_group, T* col) {
    // in_group: Cing planes of N1*N2; col: K x NP
    const int64_t plane = g.N1 * g.N2;
    for (int64_t ic = 0; ic < g.Cing; ++ic) {
        const T* src_plane = in_group + ic * plane;
        for (int64_t d = 0; d < g.k1 * g.k2; ++d) {
            const int32_t* map = g.src.data() + d * g.NP;
            T* dst = col + (ic * g.k1 * g.k2 + d) * g.NP;
            for (int64_t p = 0; p < g.NP; ++p) {
                const int32_t m = map[p];
                dst[p] = (m >= 0) ? src_plane[m] : T(0);
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv2d_grouped(const Tensor<T>& input, const Tensor<T>& kernel, int groups,
                         Pad2d pad) {
    const ConvGeom g = make_geom(input, kernel, groups, pad);
    Tensor<T> out({g.B, g.Cout, g.O1, g.O2});
    const T* pin = input.data();
    const T* pk = kernel.data();
    T* po = out.data();
    const int64_t in_group_sz = g.Cing * g.N1 * g.N2;
    const int64_t out_group_sz = g.Coutg * g.NP;

#pragma omp parallel
    {
        std::vector<T> col(g.K * g.NP);
#pragma omp for collapse(2) schedule(static)
        for (int64_t b = 0; b < g.B; ++b) {
            for (int64_t gr = 0; gr < g.groups; ++gr) {
                im2col(g, pin + (b * g.groups + gr) * in_group_sz, col.data());
                T* dst = po + (b * g.groups + gr) * out_group_sz;
                std::memset(dst, 0, sizeof(T) * out_group_sz);
                gemm_accumulate(pk + gr * g.Coutg * g.K, col.data(), dst, g.Coutg, g.K, g.NP);
            }
        }
    }

    Tape<T>* tape = nullptr;
    if (input.tape && kernel.tape && input.tape != kernel.tape)
        throw ValidationError("conv2d_grouped: operands on different tapes");
    tape = input.tape ? input.tape : kernel.tape;
    if (!tape) return out;

    const int nin = input.tape ? input.node : -1;
    const int nk = kernel.tape ? kernel.node : -1;
    Tensor<T> inv = input.detached();
    Tensor<T> kv = kernel.detached();
    return tape->record(std::move(out), [g, nin, nk, inv, kv, in_group_sz, out_group_sz](
                                            const std::vector<T>& gout, Tape<T>& tp) {
        const int64_t plane = g.N1 * g.N2;
        T* gin = nullptr;
        T* gk = nullptr;
        if (nin >= 0) gin = tp.grad_buffer(nin, inv.size()).data();
        if (nk >= 0) gk = tp.grad_buffer(nk, kv.size()).data();

        // Per-sample serial outer loop; groups are independent (disjoint
        // channel slices and disjoint kernel slices), so the parallel inner
        // loop keeps bitwise deterministic accumulation.
        std::vector<std::vector<T>> cols(static_cast<size_t>(g.groups));
        for (auto& c : cols) c.resize(g.K * g.NP);
        std::vector<std::vector<T>> kts; // transposed kernel slices, built once
        if (nin >= 0) {
            kts.resize(static_cast<size_t>(g.groups));
            for (int64_t gr = 0; gr < g.groups; ++gr) {
                kts[gr].resize(g.K * g.Coutg);
                const T* a = kv.data() + gr * g.Coutg * g.K;
                for (int64_t oc = 0; oc < g.Coutg; ++oc)
                    for (int64_t k = 0; k < g.K; ++k) kts[gr][k * g.Coutg + oc] = a[oc * g.K + k];
            }
        }
        std::vector<T> gcol(nin >= 0 ? g.K * g.NP : 0);

        for (int64_t b = 0; b < g.B; ++b) {
#pragma omp parallel for schedule(static) if (g.groups > 1)
            for (int64_t gr = 0; gr < g.groups; ++gr) {
                T* col = cols[gr].data();
                im2col(g, inv.data() + (b * g.groups + gr) * in_group_sz, col);
                const T* go = gout.data() + (b * g.groups + gr) * out_group_sz;

                if (gk) {
                    // grad_kernel[oc,k] += dot(gout[oc,:], col[k,:])
                    T* gkg = gk + gr * g.Coutg * g.K;
                    for (int64_t oc = 0; oc < g.Coutg; ++oc) {
                        const T* gorow = go + oc * g.NP;
                        for (int64_t k = 0; k < g.K; ++k)
                            gkg[oc * g.K + k] += detail::dot_fixed(gorow, col + k * g.NP, g.NP);
                    }
                }
                if (gin) {
                    // grad_col = kernel^T * gout, then scatter (col2im)
                    std::vector<T> gc(g.K * g.NP, T(0));
                    gemm_accumulate(kts[gr].data(), go, gc.data(), g.K, g.Coutg, g.NP);
                    T* ging = gin + (b * g.groups + gr) * in_group_sz;
                    for (int64_t ic = 0; ic < g.Cing; ++ic) {
                        T* gplane = ging + ic * plane;
                        for (int64_t d = 0; d < g.k1 * g.k2; ++d) {
                            const int32_t* map = g.src.data() + d * g.NP;
                            const T* src = gc.data() + (ic * g.k1 * g.k2 + d) * g.NP;
                            for (int64_t p = 0; p < g.NP; ++p)
                                if (map[p] >= 0) gplane[map[p]] += src[p];
                        }
                    }
                }
            }
        }
        (void)gcol;
    }, "conv2d");
}

template Tensor<float> conv2d_grouped(const Tensor<float>&, const Tensor<float>&, int, Pad2d);
template Tensor<double> conv2d_grouped(const Tensor<double>&, const Tensor<double>&, int, Pad2d);

} // namespace eqsur
