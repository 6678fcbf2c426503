// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64 builds only; dispatch.cpp gates installation on a
// runtime CPU check, so nothing here may run on a CPU without AVX2.

#include "eml/simd.hpp"

#if defined(EML_BUILD_AVX2)

#include <immintrin.h>

namespace eml::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i];
    return acc;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double min_sum_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_min_pd(_mm256_loadu_pd(x + i),
                                               _mm256_loadu_pd(y + i)));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] < y[i] ? x[i] : y[i];
    return s;
}

double centered_sq_sum_avx2(const double* x, double mx, std::size_t n) {
    const __m256d m = _mm256_set1_pd(mx);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), m);
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - mx;
        s += d * d;
    }
    return s;
}

double centered_dot_avx2(const double* x, double mx,
                         const double* y, double my, std::size_t n) {
    const __m256d vmx = _mm256_set1_pd(mx);
    const __m256d vmy = _mm256_set1_pd(my);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + i), vmx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y + i), vmy);
        acc = _mm256_fmadd_pd(dx, dy, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
    return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                          _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void lerp_avx2(double a, const double* x, double b, const double* y,
               double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                          _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void relu_avx2(const double* x, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* x, const double* g, double* out,
                        std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void momentum_update_avx2(double* w, double* v, const double* g,
                          double lr, double momentum, double weight_decay,
                          std::size_t n) {
    const __m256d vm = _mm256_set1_pd(momentum);
    const __m256d vwd = _mm256_set1_pd(weight_decay);
    const __m256d vlr = _mm256_set1_pd(-lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d wi = _mm256_loadu_pd(w + i);
        const __m256d step = _mm256_fmadd_pd(vwd, wi, _mm256_loadu_pd(g + i));
        const __m256d vel = _mm256_fmadd_pd(vm, _mm256_loadu_pd(v + i), step);
        _mm256_storeu_pd(v + i, vel);
        _mm256_storeu_pd(w + i, _mm256_fmadd_pd(vlr, vel, wi));
    }
    for (; i < n; ++i) {
        v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
        w[i] -= lr * v[i];
    }
}

bool all_finite_avx2(const double* x, std::size_t n) {
    // x - x is 0 for finite values, NaN for Inf/NaN inputs.
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d d = _mm256_sub_pd(v, v);
        const __m256d ok = _mm256_cmp_pd(d, _mm256_setzero_pd(), _CMP_EQ_OQ);
        if (_mm256_movemask_pd(ok) != 0xF) return false;
    }
    for (; i < n; ++i) {
        const double d = x[i] - x[i];
        if (!(d == 0.0)) return false;
    }
    return true;
}

constexpr KernelTable kAvx2Table = {
    "avx2",
    sum_avx2,
    dot_avx2,
    min_sum_avx2,
    centered_sq_sum_avx2,
    centered_dot_avx2,
    axpy_avx2,
    scale_avx2,
    lerp_avx2,
    relu_avx2,
    relu_backward_avx2,
    momentum_update_avx2,
    all_finite_avx2,
};

} // namespace

const KernelTable* avx2_table_impl() { return &kAvx2Table; }

} // namespace eml::simd

#endif // EML_BUILD_AVX2
