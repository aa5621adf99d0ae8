// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lror/tensor.hpp"

namespace lror::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
/// append order is already a topological order and backward simply walks it
/// in reverse. Adjoint storage exists only for nodes that depend on a
/// trainable leaf.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Appends an op result. requires_grad is inherited from the parents.
    Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return requires_grad(v.id); }

    /// Adjoint of a node after backward(); nullptr for nodes without storage.
    const Tensor* grad(Var v) const;

    /// Mutable adjoint for use inside backward rules; allocated zero on first
    /// touch. Returns nullptr when the node does not require a gradient.
    Tensor* grad_slot(std::size_t id);

    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor adjoint;
        bool requires_grad = false;
        bool has_adjoint = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Matrices are the last two extents collapsed the
// usual way: shape [..., n] is treated as rows × n.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
/// Elementwise product.
Var mul(Var a, Var b);
/// x + bias broadcast along the last axis.
Var add_row_bias(Var x, Var bias);
Var sum(Var x);
Var reshape(Var x, Shape shape);
Var gelu(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Mean over the batch of −log softmax(logits)[label].
Var cross_entropy_logits(Var logits, std::span<const int> labels);
/// Rows of a matrix picked by index; backward scatters.
Var gather_rows(Var x, std::span<const std::size_t> rows);

/// Multi-head scaled dot-product attention over `batch` independent groups
/// of `tokens` rows each. q, k, v and the result are [batch·tokens × d].
Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t tokens, std::size_t heads);

/// Every row replaced by the mean of its group of `tokens` rows.
Var token_mean(Var x, std::size_t tokens);

enum class ProjectionFlow { Complement, Subspace, Identity };

/// Applies the low-rank projection to every non-CLS row of a token block.
/// x is [batch·tokens × d] with the CLS row first in each group; q is [d × r]
/// with orthonormal columns. Complement returns x − (xQ)Qᵀ, Subspace (xQ)Qᵀ.
Var project_tokens(Var x, Var q, std::size_t tokens, ProjectionFlow flow);

/// Orthonormal factor of the thin QR of m, differentiable in m.
Var qr_q(Var m);

// ---------------------------------------------------------------------------

/// Max over elements of |analytic − numeric| / max(1, |numeric|), comparing
/// the tape gradient of f at x0 against central differences.
double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x0, double step);

}  // namespace lror::ad
