// AVX2 variants of the float kernels. Must stay bit-identical to the scalar
// reference in kernels.cpp: same 8-lane accumulator layout, same combine
// order, no FMA (products are rounded once in double, exactly like scalar).

#include <immintrin.h>

#include <cstddef>

namespace reaps::kern::avx2 {

double dot_f32(const float* a, const float* b, std::size_t n) {
    __m256d lo = _mm256_setzero_pd();  // lanes 0..3
    __m256d hi = _mm256_setzero_pd();  // lanes 4..7
    std::size_t k = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; k < n8; k += 8) {
        const __m256d a0 = _mm256_cvtps_pd(_mm_loadu_ps(a + k));
        const __m256d b0 = _mm256_cvtps_pd(_mm_loadu_ps(b + k));
        const __m256d a1 = _mm256_cvtps_pd(_mm_loadu_ps(a + k + 4));
        const __m256d b1 = _mm256_cvtps_pd(_mm_loadu_ps(b + k + 4));
        lo = _mm256_add_pd(lo, _mm256_mul_pd(a0, b0));
        hi = _mm256_add_pd(hi, _mm256_mul_pd(a1, b1));
    }
    alignas(32) double l[8];
    _mm256_store_pd(l, lo);
    _mm256_store_pd(l + 4, hi);
    for (; k < n; ++k)
        l[k & 7] += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

double sum_f32(const float* x, std::size_t n) {
    __m256d lo = _mm256_setzero_pd();
    __m256d hi = _mm256_setzero_pd();
    std::size_t k = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; k < n8; k += 8) {
        lo = _mm256_add_pd(lo, _mm256_cvtps_pd(_mm_loadu_ps(x + k)));
        hi = _mm256_add_pd(hi, _mm256_cvtps_pd(_mm_loadu_ps(x + k + 4)));
    }
    alignas(32) double l[8];
    _mm256_store_pd(l, lo);
    _mm256_store_pd(l + 4, hi);
    for (; k < n; ++k) l[k & 7] += static_cast<double>(x[k]);
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

void axpy_acc_f32(double* acc, float a, const float* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(static_cast<double>(a));
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8) {
        const __m256d x0 = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        const __m256d x1 = _mm256_cvtps_pd(_mm_loadu_ps(x + i + 4));
        _mm256_storeu_pd(acc + i,
                         _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(va, x0)));
        _mm256_storeu_pd(acc + i + 4,
                         _mm256_add_pd(_mm256_loadu_pd(acc + i + 4), _mm256_mul_pd(va, x1)));
    }
    const double ad = static_cast<double>(a);
    for (; i < n; ++i) acc[i] += ad * static_cast<double>(x[i]);
}

void relu_f32(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(const float* x, const float* gy, float* gx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8) {
        const __m256 vx = _mm256_loadu_ps(x + i);
        const __m256 vgx = _mm256_loadu_ps(gx + i);
        const __m256 sum = _mm256_add_ps(vgx, _mm256_loadu_ps(gy + i));
        const __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
        // blend keeps gx bit-untouched where x <= 0 (an add of +0.0 would not)
        _mm256_storeu_ps(gx + i, _mm256_blendv_ps(vgx, sum, mask));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void add_f32(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul_f32(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_f32(const float* x, float s, float* y, std::size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = s * x[i];
}

}  // namespace reaps::kern::avx2
