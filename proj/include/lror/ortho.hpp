// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lror/tensor.hpp"

namespace lror::ortho {

/// D×r matrix with orthonormal columns, tagged with the digest of the matrix
/// it was computed from so stale copies can be detected.
class OrthoBasis {
public:
    OrthoBasis() = default;
    /// Validates orthonormality (‖QᵀQ − I‖_F < tol); throws otherwise.
    explicit OrthoBasis(Tensor q, std::uint64_t source_hash = 0, double tol = 1e-10);

    /// The empty (rank 0) basis of ℝ^d.
    static OrthoBasis empty(std::size_t d);

    const Tensor& q() const noexcept { return q_; }
    std::size_t dim() const noexcept { return q_.rows(); }
    std::size_t rank() const noexcept { return q_.cols(); }
    std::uint64_t source_hash() const noexcept { return source_hash_; }

private:
    Tensor q_;
    std::uint64_t source_hash_ = 0;
};

/// ‖QᵀQ − I_r‖_F
double orthonormality_residual(const Tensor& q);

struct QrResult {
    OrthoBasis basis;
    Tensor r;  // r×r upper triangular, non-negative diagonal
};

/// Householder thin QR with diag(R) ≥ 0. Throws DegenerateBasis when the
/// smallest |R_ii| falls below 1e−10·‖m‖_F.
QrResult qr_orthonormalize(const Tensor& m);

/// ∂L/∂M from ∂L/∂Q for thin QR, taking ∂L/∂R = 0.
Tensor qr_backward(const Tensor& m, const Tensor& q, const Tensor& r, const Tensor& q_adjoint);

/// X − (XQ)Qᵀ, evaluated in factored order.
Tensor remove_subspace(const Tensor& x, const OrthoBasis& basis);
/// (XQ)Qᵀ
Tensor project_subspace(const Tensor& x, const OrthoBasis& basis);
/// Dense projector pair; only for tests and diagnostics.
Tensor projector(const OrthoBasis& basis);
Tensor complement_projector(const OrthoBasis& basis);

/// Canonical angles between two subspaces, ascending, in radians.
std::vector<double> principal_angles(const OrthoBasis& a, const OrthoBasis& b);
double max_principal_angle(const OrthoBasis& a, const OrthoBasis& b);

struct Anova {
    Tensor within;
    Tensor between;
    Tensor total;
};

/// Within/between covariance split of samples grouped by domain id.
Anova anova_decompose(const Tensor& samples, std::span<const int> domains);

/// Empirical (biased, 1/n) covariance of the rows.
Tensor covariance(const Tensor& samples);

struct Svd {
    Tensor u;                     // m×k left singular vectors
    std::vector<double> sigma;    // k values, descending
    Tensor v;                     // n×k right singular vectors
};

/// One-sided Jacobi SVD, thin, k = min(m, n).
Svd svd_jacobi(const Tensor& a);
std::vector<double> singular_values(const Tensor& a);

/// Number of singular values above rel_tol·σ_max (0 for the zero matrix).
std::size_t numerical_rank(const Tensor& m, double rel_tol = 1e-8);

/// Condition number from the singular values (inf when singular).
double condition_number(const Tensor& m);

/// Orthonormal basis for the span of the top `count` left singular vectors.
OrthoBasis top_left_singular_basis(const Tensor& a, std::size_t count);

}  // namespace lror::ortho
