// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "lror/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace lror::kernels {
namespace {

// 4×8 register block: 8 ymm accumulators, two B loads and four A broadcasts per k.
inline void block_4x8(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
    __m256d c00, c01, c10, c11, c20, c21, c30, c31;
    if (accumulate) {
        c00 = _mm256_loadu_pd(c);
        c01 = _mm256_loadu_pd(c + 4);
        c10 = _mm256_loadu_pd(c + ldc);
        c11 = _mm256_loadu_pd(c + ldc + 4);
        c20 = _mm256_loadu_pd(c + 2 * ldc);
        c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
        c30 = _mm256_loadu_pd(c + 3 * ldc);
        c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
    } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
    }
    const double* a0 = a;
    const double* a1 = a + lda;
    const double* a2 = a + 2 * lda;
    const double* a3 = a + 3 * lda;
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
    }
    _mm256_storeu_pd(c, c00);
    _mm256_storeu_pd(c + 4, c01);
    _mm256_storeu_pd(c + ldc, c10);
    _mm256_storeu_pd(c + ldc + 4, c11);
    _mm256_storeu_pd(c + 2 * ldc, c20);
    _mm256_storeu_pd(c + 2 * ldc + 4, c21);
    _mm256_storeu_pd(c + 3 * ldc, c30);
    _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row, four columns.
inline void block_1x4(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c,
                      bool accumulate) {
    __m256d acc = accumulate ? _mm256_loadu_pd(c) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), acc);
    }
    _mm256_storeu_pd(c, acc);
}

inline void block_1x1(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c,
                      bool accumulate) {
    double acc = accumulate ? *c : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        acc = __builtin_fma(a[p], b[p * ldb], acc);
    }
    *c = acc;
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    const std::size_t m4 = m - m % 4;
    const std::size_t n8 = n - n % 8;
    for (std::size_t i = 0; i < m4; i += 4) {
        for (std::size_t j = 0; j < n8; j += 8) {
            block_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, accumulate);
        }
    }
    // Column tail for the full row blocks, then the row tail over all columns.
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j0 = i < m4 ? n8 : 0;
        std::size_t j = j0;
        for (; j + 4 <= n; j += 4) {
            block_1x4(k, a + i * lda, b + j, ldb, c + i * ldc + j, accumulate);
        }
        for (; j < n; ++j) {
            block_1x1(k, a + i * lda, b + j, ldb, c + i * ldc + j, accumulate);
        }
    }
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        s = __builtin_fma(x[i], y[i], s);
    }
    return s;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        y[i] = __builtin_fma(alpha, x[i], y[i]);
    }
}

void scal_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = alpha * x[i];
    }
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{Isa::Avx2, gemm_nn_avx2, dot_avx2, axpy_avx2, scal_avx2};
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &table : nullptr;
}

}  // namespace lror::kernels

#else

namespace lror::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace lror::kernels

#endif
