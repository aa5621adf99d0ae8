// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "lror/kernels.hpp"

namespace lror::kernels {
namespace {

const KernelTable* resolve() {
    if (const char* env = std::getenv("LROR_SIMD")) {
        const std::string want(env);
        if (want == "scalar") {
            return &scalar_table();
        }
        if (want == "avx2" && avx2_table() != nullptr) {
            return avx2_table();
        }
        if (want == "neon" && neon_table() != nullptr) {
            return neon_table();
        }
    }
    if (const KernelTable* t = avx2_table()) {
        return t;
    }
    if (const KernelTable* t = neon_table()) {
        return t;
    }
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{resolve()};
    return table;
}

// Transposes a row-major rows×cols block into cols×rows.
void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
    dst.resize(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return "scalar";
        case Isa::Avx2:
            return "avx2";
        case Isa::Neon:
            return "neon";
    }
    return "unknown";
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_relaxed); }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    active().gemm_nn(m, n, k, a, k, b, n, c, n, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    thread_local std::vector<double> bt;
    transpose_into(n, k, b, bt);
    active().gemm_nn(m, n, k, a, k, bt.data(), n, c, n, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    thread_local std::vector<double> at;
    transpose_into(k, m, a, at);
    active().gemm_nn(m, n, k, at.data(), k, b, n, c, n, accumulate);
}

double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }

void axpy(std::size_t n, double alpha, const double* x, double* y) { active().axpy(n, alpha, x, y); }

}  // namespace lror::kernels
