// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace lror::kernels {
namespace {

// 4×4 block: two float64x2 accumulators per row.
inline void block_4x4(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
    float64x2_t acc[4][2];
    for (int r = 0; r < 4; ++r) {
        acc[r][0] = accumulate ? vld1q_f64(c + r * ldc) : vdupq_n_f64(0.0);
        acc[r][1] = accumulate ? vld1q_f64(c + r * ldc + 2) : vdupq_n_f64(0.0);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t b0 = vld1q_f64(b + p * ldb);
        const float64x2_t b1 = vld1q_f64(b + p * ldb + 2);
        for (int r = 0; r < 4; ++r) {
            const float64x2_t av = vdupq_n_f64(a[r * lda + p]);
            acc[r][0] = vfmaq_f64(acc[r][0], av, b0);
            acc[r][1] = vfmaq_f64(acc[r][1], av, b1);
        }
    }
    for (int r = 0; r < 4; ++r) {
        vst1q_f64(c + r * ldc, acc[r][0]);
        vst1q_f64(c + r * ldc + 2, acc[r][1]);
    }
}

inline void block_1x1(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c,
                      bool accumulate) {
    double acc = accumulate ? *c : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        acc = __builtin_fma(a[p], b[p * ldb], acc);
    }
    *c = acc;
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    const std::size_t m4 = m - m % 4;
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < m4; i += 4) {
        for (std::size_t j = 0; j < n4; j += 4) {
            block_4x4(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, accumulate);
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i < m4 ? n4 : 0; j < n; ++j) {
            block_1x1(k, a + i * lda, b + j, ldb, c + i * ldc + j, accumulate);
        }
    }
}

double dot_neon(std::size_t n, const double* x, const double* y) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) {
        s = __builtin_fma(x[i], y[i], s);
    }
    return s;
}

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
    const float64x2_t av = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = __builtin_fma(alpha, x[i], y[i]);
    }
}

void scal_neon(std::size_t n, double alpha, const double* x, double* y) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
    }
    for (; i < n; ++i) {
        y[i] = alpha * x[i];
    }
}

}  // namespace

const KernelTable* neon_table() {
    static const KernelTable table{Isa::Neon, gemm_nn_neon, dot_neon, axpy_neon, scal_neon};
    return &table;
}

}  // namespace lror::kernels

#else

namespace lror::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace lror::kernels

#endif
