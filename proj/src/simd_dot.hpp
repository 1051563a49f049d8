#pragma once

// Dot products with a fixed lane-accumulator tree. The reduction order
// depends only on the length, never on threading, so results stay bitwise
// reproducible while still vectorizing (a plain reduction loop would be
// scalar without -ffast-math).

#include <cstdint>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EQSUR_SIMD_AVX2 1
#endif

namespace eqsur::detail {

#ifdef EQSUR_SIMD_AVX2

inline float dot_fixed(const float* a, const float* b, int64_t n) {
    __m256 acc = _mm256_setzero_ps();
    int64_t p = 0;
    for (; p + 8 <= n; p += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + p), _mm256_loadu_ps(b + p), acc);
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; p < n; ++p) s += a[p] * b[p];
    return s;
}

inline double dot_fixed(const double* a, const double* b, int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    int64_t p = 0;
    for (; p + 4 <= n; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + p), _mm256_loadu_pd(b + p), acc);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; p < n; ++p) s += a[p] * b[p];
    return s;
}

#else

template <typename T>
inline T dot_fixed(const T* a, const T* b, int64_t n) {
    T s = 0;
    for (int64_t p = 0; p < n; ++p) s += a[p] * b[p];
    return s;
}

#endif

} // namespace eqsur::detail
