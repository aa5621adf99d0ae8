// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops. Every routine has a portable scalar
// reference and, where the target supports it, a vectorized variant. The
// variant is chosen once per process from the CPU feature set; LROR_SIMD=scalar
// forces the reference path. Both paths are equivalence-tested.

namespace lror::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
    Isa isa;
    /// C[m×n] (+)= A[m×k]·B[k×n]; all row-major with explicit leading dims.
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
    double (*dot)(std::size_t n, const double* x, const double* y);
    /// y += alpha·x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    /// y = alpha·x
    void (*scal)(std::size_t n, double alpha, const double* x, double* y);
};

const KernelTable& scalar_table();
/// nullptr when the variant is not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The active table (resolved on first use).
const KernelTable& active();
/// Overrides the active table; used by equivalence tests and benchmarks.
void set_active(const KernelTable& table);

// Convenience wrappers dispatching through active().
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[m×n] (+)= A[m×k]·B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[m×n] (+)= A[k×m]ᵀ·B[k×n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
double dot(std::size_t n, const double* x, const double* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

}  // namespace lror::kernels
