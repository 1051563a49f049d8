#include <algorithm>

#include "eqsur/ref.hpp"

namespace eqsur::ref {

template <typename T>
Tensor<T> conv2d_grouped(const Tensor<T>& input, const Tensor<T>& kernel, int groups,
                         Pad2d pad) {
    const int64_t B = input.extent(0), Cin = input.extent(1);
    const int64_t N1 = input.extent(2), N2 = input.extent(3);
    const int64_t Cout = kernel.extent(0), Cing = kernel.extent(1);
    const int64_t k1 = kernel.extent(2), k2 = kernel.extent(3);
    if (Cin % groups != 0 || Cout % groups != 0 || Cing != Cin / groups)
        throw ValidationError("ref::conv2d_grouped: bad group structure");
    const int64_t Coutg = Cout / groups;
    const int64_t p1 = (pad.m1 == PadMode::None) ? 0 : k1 / 2;
    const int64_t p2 = (pad.m2 == PadMode::None) ? 0 : k2 / 2;
    const int64_t O1 = N1 + 2 * p1 - k1 + 1;
    const int64_t O2 = N2 + 2 * p2 - k2 + 1;

    Tensor<T> out({B, Cout, O1, O2});
    const T* in = input.data();
    const T* kw = kernel.data();
    T* po = out.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Cout; ++oc) {
            const int64_t g = oc / Coutg;
            for (int64_t y = 0; y < O1; ++y)
                for (int64_t x = 0; x < O2; ++x) {
                    double acc = 0.0;
                    for (int64_t ic = 0; ic < Cing; ++ic)
                        for (int64_t d1 = 0; d1 < k1; ++d1)
                            for (int64_t d2 = 0; d2 < k2; ++d2) {
                                int64_t sy = y + d1 - p1;
                                int64_t sx = x + d2 - p2;
                                if (pad.m1 == PadMode::Circular)
                                    sy = (sy + N1) % N1;
                                else if (sy < 0 || sy >= N1)
                                    continue;
                                if (pad.m2 == PadMode::Circular)
                                    sx = (sx + N2) % N2;
                                else if (sx < 0 || sx >= N2)
                                    continue;
                                acc += static_cast<double>(
                                           kw[((oc * Cing + ic) * k1 + d1) * k2 + d2]) *
                                       static_cast<double>(
                                           in[((b * Cin + g * Cing + ic) * N1 + sy) * N2 + sx]);
                            }
                    po[((b * Cout + oc) * O1 + y) * O2 + x] = static_cast<T>(acc);
                }
        }
    return out;
}

template <typename T>
Tensor<T> conv3d_height_dependent(const Tensor<T>& input, const Tensor<T>& kernel,
                                  int64_t h_out, int64_t cout, int64_t h_taps) {
    const int64_t B = input.extent(0), Cin = input.extent(1);
    const int64_t N1 = input.extent(2), N2 = input.extent(3), N3 = input.extent(4);
    const int64_t k1 = kernel.extent(2), k2 = kernel.extent(3);
    if (kernel.extent(0) != h_out * cout || kernel.extent(1) != h_taps * Cin)
        throw ValidationError("ref::conv3d_height_dependent: kernel bank shape mismatch");
    const int64_t p1 = k1 / 2, p2 = k2 / 2, pv = h_taps / 2;

    Tensor<T> out({B, cout, N1, N2, h_out});
    const T* in = input.data();
    const T* kw = kernel.data();
    T* po = out.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t y = 0; y < N1; ++y)
                for (int64_t x = 0; x < N2; ++x)
                    for (int64_t z = 0; z < h_out; ++z) {
                        double acc = 0.0;
                        for (int64_t tap = 0; tap < h_taps; ++tap) {
                            const int64_t sz = z + tap - pv;
                            if (sz < 0 || sz >= N3) continue; // vertical zero padding
                            for (int64_t ci = 0; ci < Cin; ++ci)
                                for (int64_t d1 = 0; d1 < k1; ++d1)
                                    for (int64_t d2 = 0; d2 < k2; ++d2) {
                                        const int64_t sy = (y + d1 - p1 + N1) % N1;
                                        const int64_t sx = (x + d2 - p2 + N2) % N2;
                                        acc += static_cast<double>(
                                                   kw[(((z * cout + co) * h_taps * Cin +
                                                        tap * Cin + ci) *
                                                           k1 +
                                                       d1) *
                                                          k2 +
                                                      d2]) *
                                               static_cast<double>(
                                                   in[(((b * Cin + ci) * N1 + sy) * N2 + sx) *
                                                          N3 +
                                                      sz]);
                                    }
                        }
                        po[(((b * cout + co) * N1 + y) * N2 + x) * h_out + z] =
                            static_cast<T>(acc);
                    }
    return out;
}

template <typename T>
Tensor<T> materialize_shared_kernels(const Tensor<T>& bank, int64_t h_out, int64_t kv) {
    const int64_t n = 2 * kv + 1;
    const int64_t hq = bank.extent(0); // (h_out + 2kv) * C rows
    const int64_t C = hq / (h_out + 2 * kv);
    const int64_t K = bank.extent(1) * bank.extent(2) * bank.extent(3);
    if (hq % (h_out + 2 * kv) != 0)
        throw ValidationError("ref::materialize_shared_kernels: bank row count mismatch");

    Tensor<T> full({h_out * n * C, bank.extent(1), bank.extent(2), bank.extent(3)});
    const T* pb = bank.data();
    T* pf = full.data();
    for (int64_t z = 0; z < h_out; ++z)
        for (int64_t o = -kv; o <= kv; ++o) {
            const int64_t q = z + o + kv; // kernel set learned at height z+o
            for (int64_t c = 0; c < C; ++c)
                std::copy_n(pb + (q * C + c) * K, K,
                            pf + ((z * n + (o + kv)) * C + c) * K);
        }
    return full;
}

template <typename T>
Tensor<T> max_pool3d(const Tensor<T>& x) {
    const int64_t B = x.extent(0), C = x.extent(1);
    const int64_t N1 = x.extent(2), N2 = x.extent(3), N3 = x.extent(4);
    Tensor<T> out({B, C, N1 / 2, N2 / 2, N3 / 2});
    const T* px = x.data();
    T* po = out.data();
    int64_t idx = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < N1 / 2; ++i)
                for (int64_t j = 0; j < N2 / 2; ++j)
                    for (int64_t k = 0; k < N3 / 2; ++k) {
                        T best = px[((b * C + c) * N1 + 2 * i) * N2 * N3 + 2 * j * N3 + 2 * k];
                        for (int64_t di = 0; di < 2; ++di)
                            for (int64_t dj = 0; dj < 2; ++dj)
                                for (int64_t dk = 0; dk < 2; ++dk)
                                    best = std::max(
                                        best, px[((b * C + c) * N1 + 2 * i + di) * N2 * N3 +
                                                 (2 * j + dj) * N3 + 2 * k + dk]);
                        po[idx++] = best;
                    }
    return out;
}

#define EQSUR_REF_INSTANTIATE(T)                                                          \
    template Tensor<T> conv2d_grouped(const Tensor<T>&, const Tensor<T>&, int, Pad2d);   \
    template Tensor<T> conv3d_height_dependent(const Tensor<T>&, const Tensor<T>&,       \
                                               int64_t, int64_t, int64_t);               \
    template Tensor<T> materialize_shared_kernels(const Tensor<T>&, int64_t, int64_t);   \
    template Tensor<T> max_pool3d(const Tensor<T>&);

EQSUR_REF_INSTANTIATE(float)
EQSUR_REF_INSTANTIATE(double)
#undef EQSUR_REF_INSTANTIATE

} // namespace eqsur::ref
