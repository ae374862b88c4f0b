#include "cinetab/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "cinetab/common.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define CINETAB_X86 1
#include <immintrin.h>
#else
#define CINETAB_X86 0
#endif

namespace cinetab::kernels {

// ===========================================================================
// Scalar reference kernels
// ===========================================================================
namespace scalar {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = arow[kk];
            const T* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    if (!accumulate) {
        for (std::size_t x = 0; x < k * n; ++x) c[x] = T(0);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = arow[kk];
            T* crow = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <typename T>
void scale(T alpha, T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
template <typename T>
T sum(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace scalar

// ===========================================================================
// AVX2 + FMA kernels (x86 only). Each function carries a target attribute so
// the translation unit itself builds for the baseline ISA; nothing here runs
// unless CPU detection picked this backend.
// ===========================================================================
#if CINETAB_X86
namespace avx2 {

#define CT_AVX2 __attribute__((target("avx2,fma")))

CT_AVX2 static inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
}

CT_AVX2 static inline double hsum256d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// --- float GEMM: 4-row x 16-column microkernel ---
CT_AVX2 void gemm_nn_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    const std::size_t mb = m / 4 * 4;
    const std::size_t nb = n / 16 * 16;
    for (std::size_t i = 0; i < mb; i += 4) {
        const float* a0 = a + (i + 0) * k;
        const float* a1 = a + (i + 1) * k;
        const float* a2 = a + (i + 2) * k;
        const float* a3 = a + (i + 3) * k;
        float* c0 = c + (i + 0) * n;
        float* c1 = c + (i + 1) * n;
        float* c2 = c + (i + 2) * n;
        float* c3 = c + (i + 3) * n;
        for (std::size_t j = 0; j < nb; j += 16) {
            __m256 acc00, acc01, acc10, acc11, acc20, acc21, acc30, acc31;
            if (accumulate) {
                acc00 = _mm256_loadu_ps(c0 + j);
                acc01 = _mm256_loadu_ps(c0 + j + 8);
                acc10 = _mm256_loadu_ps(c1 + j);
                acc11 = _mm256_loadu_ps(c1 + j + 8);
                acc20 = _mm256_loadu_ps(c2 + j);
                acc21 = _mm256_loadu_ps(c2 + j + 8);
                acc30 = _mm256_loadu_ps(c3 + j);
                acc31 = _mm256_loadu_ps(c3 + j + 8);
            } else {
                acc00 = acc01 = acc10 = acc11 = _mm256_setzero_ps();
                acc20 = acc21 = acc30 = acc31 = _mm256_setzero_ps();
            }
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 b0 = _mm256_loadu_ps(b + kk * n + j);
                const __m256 b1 = _mm256_loadu_ps(b + kk * n + j + 8);
                __m256 va = _mm256_set1_ps(a0[kk]);
                acc00 = _mm256_fmadd_ps(va, b0, acc00);
                acc01 = _mm256_fmadd_ps(va, b1, acc01);
                va = _mm256_set1_ps(a1[kk]);
                acc10 = _mm256_fmadd_ps(va, b0, acc10);
                acc11 = _mm256_fmadd_ps(va, b1, acc11);
                va = _mm256_set1_ps(a2[kk]);
                acc20 = _mm256_fmadd_ps(va, b0, acc20);
                acc21 = _mm256_fmadd_ps(va, b1, acc21);
                va = _mm256_set1_ps(a3[kk]);
                acc30 = _mm256_fmadd_ps(va, b0, acc30);
                acc31 = _mm256_fmadd_ps(va, b1, acc31);
            }
            _mm256_storeu_ps(c0 + j, acc00);
            _mm256_storeu_ps(c0 + j + 8, acc01);
            _mm256_storeu_ps(c1 + j, acc10);
            _mm256_storeu_ps(c1 + j + 8, acc11);
            _mm256_storeu_ps(c2 + j, acc20);
            _mm256_storeu_ps(c2 + j + 8, acc21);
            _mm256_storeu_ps(c3 + j, acc30);
            _mm256_storeu_ps(c3 + j + 8, acc31);
        }
        // column tail, scalar
        for (std::size_t j = nb; j < n; ++j) {
            float s0 = accumulate ? c0[j] : 0.f;
            float s1 = accumulate ? c1[j] : 0.f;
            float s2 = accumulate ? c2[j] : 0.f;
            float s3 = accumulate ? c3[j] : 0.f;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const float bv = b[kk * n + j];
                s0 += a0[kk] * bv;
                s1 += a1[kk] * bv;
                s2 += a2[kk] * bv;
                s3 += a3[kk] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    // row tail: one row at a time, vectorized over columns
    for (std::size_t i = mb; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < nb; j += 16) {
            __m256 acc0 = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
            __m256 acc1 = accumulate ? _mm256_loadu_ps(crow + j + 8) : _mm256_setzero_ps();
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 va = _mm256_set1_ps(arow[kk]);
                acc0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + kk * n + j), acc0);
                acc1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b + kk * n + j + 8), acc1);
            }
            _mm256_storeu_ps(crow + j, acc0);
            _mm256_storeu_ps(crow + j + 8, acc1);
        }
        for (std::size_t j = nb; j < n; ++j) {
            float s = accumulate ? crow[j] : 0.f;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * b[kk * n + j];
            crow[j] = s;
        }
    }
}

CT_AVX2 void gemm_nt_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    const std::size_t kb = k / 8 * 8;
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            std::size_t kk = 0;
            for (; kk + 16 <= k; kk += 16) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + kk), _mm256_loadu_ps(brow + kk),
                                       acc0);
                acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + kk + 8),
                                       _mm256_loadu_ps(brow + kk + 8), acc1);
            }
            for (; kk < kb; kk += 8) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + kk), _mm256_loadu_ps(brow + kk),
                                       acc0);
            }
            float s = hsum256(_mm256_add_ps(acc0, acc1));
            for (; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

CT_AVX2 void gemm_tn_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, k * n * sizeof(float));
    const std::size_t nb = n / 8 * 8;
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        const float* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float aik = arow[kk];
            if (aik == 0.f) continue;
            float* crow = c + kk * n;
            const __m256 va = _mm256_set1_ps(aik);
            std::size_t j = 0;
            for (; j < nb; j += 8) {
                _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j),
                                                           _mm256_loadu_ps(crow + j)));
            }
            for (; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// --- double GEMM: 4-row x 8-column microkernel ---
CT_AVX2 void gemm_nn_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    const std::size_t mb = m / 4 * 4;
    const std::size_t nb = n / 8 * 8;
    for (std::size_t i = 0; i < mb; i += 4) {
        const double* a0 = a + (i + 0) * k;
        const double* a1 = a + (i + 1) * k;
        const double* a2 = a + (i + 2) * k;
        const double* a3 = a + (i + 3) * k;
        double* c0 = c + (i + 0) * n;
        double* c1 = c + (i + 1) * n;
        double* c2 = c + (i + 2) * n;
        double* c3 = c + (i + 3) * n;
        for (std::size_t j = 0; j < nb; j += 8) {
            __m256d acc00, acc01, acc10, acc11, acc20, acc21, acc30, acc31;
            if (accumulate) {
                acc00 = _mm256_loadu_pd(c0 + j);
                acc01 = _mm256_loadu_pd(c0 + j + 4);
                acc10 = _mm256_loadu_pd(c1 + j);
                acc11 = _mm256_loadu_pd(c1 + j + 4);
                acc20 = _mm256_loadu_pd(c2 + j);
                acc21 = _mm256_loadu_pd(c2 + j + 4);
                acc30 = _mm256_loadu_pd(c3 + j);
                acc31 = _mm256_loadu_pd(c3 + j + 4);
            } else {
                acc00 = acc01 = acc10 = acc11 = _mm256_setzero_pd();
                acc20 = acc21 = acc30 = acc31 = _mm256_setzero_pd();
            }
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d b0 = _mm256_loadu_pd(b + kk * n + j);
                const __m256d b1 = _mm256_loadu_pd(b + kk * n + j + 4);
                __m256d va = _mm256_set1_pd(a0[kk]);
                acc00 = _mm256_fmadd_pd(va, b0, acc00);
                acc01 = _mm256_fmadd_pd(va, b1, acc01);
                va = _mm256_set1_pd(a1[kk]);
                acc10 = _mm256_fmadd_pd(va, b0, acc10);
                acc11 = _mm256_fmadd_pd(va, b1, acc11);
                va = _mm256_set1_pd(a2[kk]);
                acc20 = _mm256_fmadd_pd(va, b0, acc20);
                acc21 = _mm256_fmadd_pd(va, b1, acc21);
                va = _mm256_set1_pd(a3[kk]);
                acc30 = _mm256_fmadd_pd(va, b0, acc30);
                acc31 = _mm256_fmadd_pd(va, b1, acc31);
            }
            _mm256_storeu_pd(c0 + j, acc00);
            _mm256_storeu_pd(c0 + j + 4, acc01);
            _mm256_storeu_pd(c1 + j, acc10);
            _mm256_storeu_pd(c1 + j + 4, acc11);
            _mm256_storeu_pd(c2 + j, acc20);
            _mm256_storeu_pd(c2 + j + 4, acc21);
            _mm256_storeu_pd(c3 + j, acc30);
            _mm256_storeu_pd(c3 + j + 4, acc31);
        }
        for (std::size_t j = nb; j < n; ++j) {
            double s0 = accumulate ? c0[j] : 0.0;
            double s1 = accumulate ? c1[j] : 0.0;
            double s2 = accumulate ? c2[j] : 0.0;
            double s3 = accumulate ? c3[j] : 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double bv = b[kk * n + j];
                s0 += a0[kk] * bv;
                s1 += a1[kk] * bv;
                s2 += a2[kk] * bv;
                s3 += a3[kk] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (std::size_t i = mb; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < nb; j += 8) {
            __m256d acc0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
            __m256d acc1 = accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d va = _mm256_set1_pd(arow[kk]);
                acc0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b + kk * n + j), acc0);
                acc1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b + kk * n + j + 4), acc1);
            }
            _mm256_storeu_pd(crow + j, acc0);
            _mm256_storeu_pd(crow + j + 4, acc1);
        }
        for (std::size_t j = nb; j < n; ++j) {
            double s = accumulate ? crow[j] : 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * b[kk * n + j];
            crow[j] = s;
        }
    }
}

CT_AVX2 void gemm_nt_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            __m256d acc0 = _mm256_setzero_pd();
            __m256d acc1 = _mm256_setzero_pd();
            std::size_t kk = 0;
            for (; kk + 8 <= k; kk += 8) {
                acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + kk), _mm256_loadu_pd(brow + kk),
                                       acc0);
                acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + kk + 4),
                                       _mm256_loadu_pd(brow + kk + 4), acc1);
            }
            for (; kk + 4 <= k; kk += 4) {
                acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + kk), _mm256_loadu_pd(brow + kk),
                                       acc0);
            }
            double s = hsum256d(_mm256_add_pd(acc0, acc1));
            for (; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

CT_AVX2 void gemm_tn_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, k * n * sizeof(double));
    const std::size_t nb = n / 4 * 4;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            if (aik == 0.0) continue;
            double* crow = c + kk * n;
            const __m256d va = _mm256_set1_pd(aik);
            std::size_t j = 0;
            for (; j < nb; j += 4) {
                _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j),
                                                           _mm256_loadu_pd(crow + j)));
            }
            for (; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// --- elementwise / reductions ---
CT_AVX2 void add_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}
CT_AVX2 void sub_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}
CT_AVX2 void mul_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}
CT_AVX2 void axpy_f(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}
CT_AVX2 void scale_f(float alpha, float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}
CT_AVX2 float sum_f(const float* x, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
        acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(x + i + 8));
    }
    for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    float s = hsum256(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) s += x[i];
    return s;
}
CT_AVX2 float dot_f(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float s = hsum256(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

CT_AVX2 void add_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}
CT_AVX2 void sub_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}
CT_AVX2 void mul_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}
CT_AVX2 void axpy_d(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}
CT_AVX2 void scale_d(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}
CT_AVX2 double sum_d(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double s = hsum256d(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i];
    return s;
}
CT_AVX2 double dot_d(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum256d(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

#undef CT_AVX2

}  // namespace avx2
#endif  // CINETAB_X86

// ===========================================================================
// Dispatch
// ===========================================================================
namespace {

template <typename T>
struct Table {
    void (*gemm_nn)(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);
    void (*gemm_nt)(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);
    void (*gemm_tn)(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);
    void (*add)(const T*, const T*, T*, std::size_t);
    void (*sub)(const T*, const T*, T*, std::size_t);
    void (*mul)(const T*, const T*, T*, std::size_t);
    void (*axpy)(T, const T*, T*, std::size_t);
    void (*scale)(T, T*, std::size_t);
    T (*sum)(const T*, std::size_t);
    T (*dot)(const T*, const T*, std::size_t);
};

constexpr Table<float> kScalarF{scalar::gemm_nn<float>, scalar::gemm_nt<float>,
                                scalar::gemm_tn<float>, scalar::add<float>,
                                scalar::sub<float>,     scalar::mul<float>,
                                scalar::axpy<float>,    scalar::scale<float>,
                                scalar::sum<float>,     scalar::dot<float>};
constexpr Table<double> kScalarD{scalar::gemm_nn<double>, scalar::gemm_nt<double>,
                                 scalar::gemm_tn<double>, scalar::add<double>,
                                 scalar::sub<double>,     scalar::mul<double>,
                                 scalar::axpy<double>,    scalar::scale<double>,
                                 scalar::sum<double>,     scalar::dot<double>};
#if CINETAB_X86
constexpr Table<float> kAvx2F{avx2::gemm_nn_f, avx2::gemm_nt_f, avx2::gemm_tn_f, avx2::add_f,
                              avx2::sub_f,     avx2::mul_f,     avx2::axpy_f,    avx2::scale_f,
                              avx2::sum_f,     avx2::dot_f};
constexpr Table<double> kAvx2D{avx2::gemm_nn_d, avx2::gemm_nt_d, avx2::gemm_tn_d, avx2::add_d,
                               avx2::sub_d,     avx2::mul_d,     avx2::axpy_d,    avx2::scale_d,
                               avx2::sum_d,     avx2::dot_d};
#endif

const Table<float>* g_f = nullptr;
const Table<double>* g_d = nullptr;
Backend g_active = Backend::Scalar;

bool avx2_available() {
#if CINETAB_X86
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void apply(Backend b) {
    if (b == Backend::Auto) b = avx2_available() ? Backend::Avx2 : Backend::Scalar;
    if (b == Backend::Avx2) {
#if CINETAB_X86
        if (!avx2_available()) throw ConfigError("kernels: AVX2+FMA not available on this CPU");
        g_f = &kAvx2F;
        g_d = &kAvx2D;
#else
        throw ConfigError("kernels: AVX2 backend requires an x86 build");
#endif
    } else {
        g_f = &kScalarF;
        g_d = &kScalarD;
    }
    g_active = b;
}

void ensure_init() {
    if (g_f) return;
    Backend b = Backend::Auto;
    if (const char* env = std::getenv("CINETAB_KERNELS")) {
        const std::string v(env);
        if (v == "scalar")
            b = Backend::Scalar;
        else if (v == "avx2")
            b = Backend::Avx2;
        else if (v != "auto" && !v.empty())
            throw ConfigError("CINETAB_KERNELS must be scalar, avx2, or auto; got '" + v + "'");
    }
    apply(b);
}

}  // namespace

void set_backend(Backend b) { apply(b); }

Backend active_backend() {
    ensure_init();
    return g_active;
}

const char* backend_name() {
    ensure_init();
    return g_active == Backend::Avx2 ? "avx2" : "scalar";
}

template <>
void gemm_nn<float>(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool acc) {
    ensure_init();
    g_f->gemm_nn(a, b, c, m, k, n, acc);
}
template <>
void gemm_nn<double>(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool acc) {
    ensure_init();
    g_d->gemm_nn(a, b, c, m, k, n, acc);
}
template <>
void gemm_nt<float>(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool acc) {
    ensure_init();
    g_f->gemm_nt(a, b, c, m, k, n, acc);
}
template <>
void gemm_nt<double>(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool acc) {
    ensure_init();
    g_d->gemm_nt(a, b, c, m, k, n, acc);
}
template <>
void gemm_tn<float>(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool acc) {
    ensure_init();
    g_f->gemm_tn(a, b, c, m, k, n, acc);
}
template <>
void gemm_tn<double>(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool acc) {
    ensure_init();
    g_d->gemm_tn(a, b, c, m, k, n, acc);
}

template <>
void add<float>(const float* a, const float* b, float* out, std::size_t n) {
    ensure_init();
    g_f->add(a, b, out, n);
}
template <>
void add<double>(const double* a, const double* b, double* out, std::size_t n) {
    ensure_init();
    g_d->add(a, b, out, n);
}
template <>
void sub<float>(const float* a, const float* b, float* out, std::size_t n) {
    ensure_init();
    g_f->sub(a, b, out, n);
}
template <>
void sub<double>(const double* a, const double* b, double* out, std::size_t n) {
    ensure_init();
    g_d->sub(a, b, out, n);
}
template <>
void mul<float>(const float* a, const float* b, float* out, std::size_t n) {
    ensure_init();
    g_f->mul(a, b, out, n);
}
template <>
void mul<double>(const double* a, const double* b, double* out, std::size_t n) {
    ensure_init();
    g_d->mul(a, b, out, n);
}
template <>
void axpy<float>(float alpha, const float* x, float* y, std::size_t n) {
    ensure_init();
    g_f->axpy(alpha, x, y, n);
}
template <>
void axpy<double>(double alpha, const double* x, double* y, std::size_t n) {
    ensure_init();
    g_d->axpy(alpha, x, y, n);
}
template <>
void scale<float>(float alpha, float* x, std::size_t n) {
    ensure_init();
    g_f->scale(alpha, x, n);
}
template <>
void scale<double>(double alpha, double* x, std::size_t n) {
    ensure_init();
    g_d->scale(alpha, x, n);
}
template <>
float sum<float>(const float* x, std::size_t n) {
    ensure_init();
    return g_f->sum(x, n);
}
template <>
double sum<double>(const double* x, std::size_t n) {
    ensure_init();
    return g_d->sum(x, n);
}
template <>
float dot<float>(const float* a, const float* b, std::size_t n) {
    ensure_init();
    return g_f->dot(a, b, n);
}
template <>
double dot<double>(const double* a, const double* b, std::size_t n) {
    ensure_init();
    return g_d->dot(a, b, n);
}

}  // namespace cinetab::kernels
