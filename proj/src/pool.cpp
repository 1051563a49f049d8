#include <cmath>
#include <map>
#include <mutex>

#include "eqsur/ops.hpp"

namespace eqsur {

template <typename T>
Tensor<T> max_pool3d(const Tensor<T>& x) {
    if (x.rank() != 5)
        throw ValidationError("max_pool3d: expected [B,C,N1,N2,N3], got " + shape_str(x.shape()));
    const int64_t B = x.extent(0), C = x.extent(1);
    const int64_t N1 = x.extent(2), N2 = x.extent(3), N3 = x.extent(4);
    if (N1 % 2 || N2 % 2 || N3 % 2)
        throw ValidationError("max_pool3d: odd spatial extent in " + shape_str(x.shape()));
    const int64_t M1 = N1 / 2, M2 = N2 / 2, M3 = N3 / 2;
    Tensor<T> out({B, C, M1, M2, M3});
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());

    const T* px = x.data();
    T* po = out.data();
    int64_t* pa = argmax->data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const int64_t base_in = (b * C + c) * N1 * N2 * N3;
            const int64_t base_out = (b * C + c) * M1 * M2 * M3;
            for (int64_t i = 0; i < M1; ++i)
                for (int64_t j = 0; j < M2; ++j)
                    for (int64_t k = 0; k < M3; ++k) {
                        T best = 0;
                        int64_t best_idx = -1;
                        // row-major scan of the 2x2x2 block; ties keep the
                        // first element, which fixes the gradient route
                        for (int64_t di = 0; di < 2; ++di)
                            for (int64_t dj = 0; dj < 2; ++dj)
                                for (int64_t dk = 0; dk < 2; ++dk) {
                                    int64_t idx = base_in + ((2 * i + di) * N2 + 2 * j + dj) * N3 +
                                                  2 * k + dk;
                                    if (best_idx < 0 || px[idx] > best) {
                                        best = px[idx];
                                        best_idx = idx;
                                    }
                                }
                        po[base_out + (i * M2 + j) * M3 + k] = best;
                        pa[base_out + (i * M2 + j) * M3 + k] = best_idx;
                    }
        }

    if (!x.tape) return out;
    const int nx = x.node;
    const int64_t in_size = x.size();
    const int64_t out_size = out.size();
    return x.tape->record(std::move(out), [nx, in_size, out_size, argmax](const std::vector<T>& g,
                                                                          Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nx, in_size);
        // pool blocks are disjoint: each output writes its own argmax cell
        for (int64_t i = 0; i < out_size; ++i) buf[(*argmax)[i]] += g[i];
    }, "max_pool");
}

namespace {

/// 1D cell-centered factor-2 interpolation stencil: output o samples input
/// coordinate o/2 - 1/4, clamped at the edges.
void axis_weights(int64_t o, int64_t n_in, int64_t* i0, int64_t* i1, double* w0, double* w1) {
    double xc = 0.5 * static_cast<double>(o) - 0.25;
    double fl = std::floor(xc);
    int64_t lo = static_cast<int64_t>(fl);
    double t = xc - fl;
    if (lo < 0) {
        *i0 = *i1 = 0;
        *w0 = 1.0;
        *w1 = 0.0;
        return;
    }
    if (lo >= n_in - 1) {
        *i0 = *i1 = n_in - 1;
        *w0 = 1.0;
        *w1 = 0.0;
        return;
    }
    *i0 = lo;
    *i1 = lo + 1;
    *w0 = 1.0 - t;
    *w1 = t;
}

std::shared_ptr<const LinearPlan> upsample_plan(int64_t C, int64_t N1, int64_t N2, int64_t N3) {
    static std::map<std::tuple<int64_t, int64_t, int64_t, int64_t>, std::shared_ptr<const LinearPlan>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(C, N1, N2, N3);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    auto plan = std::make_shared<LinearPlan>();
    const int64_t M1 = 2 * N1, M2 = 2 * N2, M3 = 2 * N3;
    plan->in_size = C * N1 * N2 * N3;
    plan->out_size = C * M1 * M2 * M3;
    plan->out_shape_tail = {C, M1, M2, M3};
    plan->row_ptr.push_back(0);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < M1; ++i) {
            int64_t i0, i1;
            double wi0, wi1;
            axis_weights(i, N1, &i0, &i1, &wi0, &wi1);
            for (int64_t j = 0; j < M2; ++j) {
                int64_t j0, j1;
                double wj0, wj1;
                axis_weights(j, N2, &j0, &j1, &wj0, &wj1);
                for (int64_t k = 0; k < M3; ++k) {
                    int64_t k0, k1;
                    double wk0, wk1;
                    axis_weights(k, N3, &k0, &k1, &wk0, &wk1);
                    const int64_t is[2] = {i0, i1};
                    const int64_t js[2] = {j0, j1};
                    const int64_t ks[2] = {k0, k1};
                    const double wis[2] = {wi0, wi1};
                    const double wjs[2] = {wj0, wj1};
                    const double wks[2] = {wk0, wk1};
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int d = 0; d < 2; ++d) {
                                double w = wis[a] * wjs[b] * wks[d];
                                if (w == 0.0) continue;
                                plan->add_row_entry(((c * N1 + is[a]) * N2 + js[b]) * N3 + ks[d], w);
                            }
                    plan->close_row();
                }
            }
        }
    cache[key] = plan;
    return plan;
}

} // namespace

template <typename T>
Tensor<T> upsample_trilinear2(const Tensor<T>& x) {
    if (x.rank() != 5)
        throw ValidationError("upsample_trilinear2: expected [B,C,N1,N2,N3], got " +
                              shape_str(x.shape()));
    return apply_plan(x, upsample_plan(x.extent(1), x.extent(2), x.extent(3), x.extent(4)));
}

template Tensor<float> max_pool3d(const Tensor<float>&);
template Tensor<double> max_pool3d(const Tensor<double>&);
template Tensor<float> upsample_trilinear2(const Tensor<float>&);
template Tensor<double> upsample_trilinear2(const Tensor<double>&);

} // namespace eqsur
