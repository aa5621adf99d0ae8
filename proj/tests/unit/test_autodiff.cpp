// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "lror/autodiff.hpp"
#include "lror/error.hpp"
#include "lror/ortho.hpp"
#include "lror/rng.hpp"

namespace lror::ad {
namespace {

using Fn = std::function<Var(Tape&, Var)>;

TEST(CrossEntropy, HandValues) {
    const std::vector<int> zero{0};
    const std::vector<int> one{1};
    {
        Tape t;
        EXPECT_NEAR(cross_entropy_logits(t.constant(Tensor::matrix({{0, 0}})), zero).value().item(), std::log(2.0),
                    1e-15);
    }
    {
        Tape t;
        EXPECT_NEAR(cross_entropy_logits(t.constant(Tensor::matrix({{0, std::log(3.0)}})), one).value().item(),
                    -std::log(0.75), 1e-15);
    }
    {
        Tape t;
        EXPECT_LT(cross_entropy_logits(t.constant(Tensor::matrix({{50, 0}})), zero).value().item(), 1e-20);
    }
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverBatch) {
    Tape t;
    const Var x = t.parameter(Tensor::matrix({{0, std::log(3.0)}, {1, 1}}));
    const std::vector<int> y{1, 0};
    t.backward(cross_entropy_logits(x, y));
    const Tensor& g = *t.grad(x);
    EXPECT_NEAR(g.at(0, 0), 0.25 / 2, 1e-15);
    EXPECT_NEAR(g.at(0, 1), (0.75 - 1) / 2, 1e-15);
    EXPECT_NEAR(g.at(1, 0), (0.5 - 1) / 2, 1e-15);
    EXPECT_NEAR(g.at(1, 1), 0.5 / 2, 1e-15);
}

TEST(CrossEntropy, LabelOutOfRangeIsIndexError) {
    Tape t;
    const std::vector<int> bad{2};
    try {
        cross_entropy_logits(t.constant(Tensor::matrix({{0, 0}})), bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Index);
    }
}

TEST(LayerNorm, HandCases) {
    Tape t;
    const Var g1 = t.constant(Tensor::filled({2}, 1.0));
    const Var b0 = t.constant(Tensor({2}));
    EXPECT_EQ(layer_norm(t.constant(Tensor::matrix({{3, 3}})), g1, b0).value(), Tensor::matrix({{0, 0}}));
    const Tensor r = layer_norm(t.constant(Tensor::matrix({{1, -1}})), g1, b0, 1e-300).value();
    EXPECT_NEAR(r.at(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(r.at(0, 1), -1.0, 1e-15);
    const Tensor bias = layer_norm(t.constant(Tensor::matrix({{5, -2}})), t.constant(Tensor({2})),
                                   t.constant(Tensor::vector({0.5, -0.25})))
                            .value();
    EXPECT_EQ(bias, Tensor::matrix({{0.5, -0.25}}));
}

TEST(LayerNorm, RowsAreCentred) {
    Rng rng(31);
    Tape t;
    const Tensor out =
        layer_norm(t.constant(rng.gaussian({20, 9}, 3.0)), t.constant(Tensor::filled({9}, 1.0)), t.constant(Tensor({9})))
            .value();
    for (std::size_t i = 0; i < 20; ++i) {
        double mean = 0.0;
        for (double v : out.row(i)) mean += v;
        EXPECT_LT(std::abs(mean / 9.0), 1e-10);
    }
}

TEST(Elementwise, SmallCases) {
    Tape t;
    const Tensor s = softmax_rows(t.constant(Tensor::matrix({{0, 0, 0}}))).value();
    for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(gelu(t.constant(Tensor::vector({0}))).value()[0], 0.0);
    const Tensor x = Tensor::matrix({{1, -2}});
    EXPECT_EQ(scale(t.constant(x), 1.0).value(), x);
    EXPECT_NEAR(gelu(t.constant(Tensor::vector({1}))).value()[0], 0.5 * (1 + std::erf(1 / std::numbers::sqrt2)),
                1e-15);
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(32);
    Tape t;
    const Tensor s = softmax_rows(t.constant(rng.gaussian({30, 11}, 20.0))).value();
    for (std::size_t i = 0; i < 30; ++i) {
        double sum = 0.0;
        for (double v : s.row(i)) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Backward, SumGivesOnes) {
    Tape t;
    const Var x = t.parameter(Tensor({2, 3, 4}));
    t.backward(sum(x));
    EXPECT_EQ(*t.grad(x), Tensor::filled({2, 3, 4}, 1.0));
}

TEST(Backward, HalfSquaredNormGivesInput) {
    Rng rng(33);
    const Tensor v = rng.gaussian({4, 5}, 1.0);
    Tape t;
    const Var x = t.parameter(v);
    t.backward(scale(sum(mul(x, x)), 0.5));
    EXPECT_LT(max_abs_diff(*t.grad(x), v), 1e-15);
}

TEST(Backward, FrozenLeavesGetNoStorage) {
    Tape t;
    const Var w = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const Var x = t.parameter(Tensor::matrix({{1, 1}}));
    t.backward(sum(matmul(x, w)));
    EXPECT_EQ(t.grad(w), nullptr);
    ASSERT_NE(t.grad(x), nullptr);
    EXPECT_EQ(*t.grad(x), Tensor::matrix({{3, 7}}));
}

TEST(Backward, NonScalarRootIsContractError) {
    Tape t;
    const Var x = t.parameter(Tensor({2}));
    try {
        t.backward(x);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Contract);
    }
}

TEST(Backward, NonFiniteValueIsNumericError) {
    Tape t;
    const Var x = t.parameter(Tensor::vector({1e200}));
    try {
        mul(x, x);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    }
}

TEST(Backward, Deterministic) {
    Rng rng(34);
    const Tensor x0 = rng.gaussian({6, 4}, 1.0);
    const Tensor w = rng.gaussian({4, 4}, 1.0);
    auto grad = [&] {
        Tape t;
        const Var x = t.parameter(x0);
        t.backward(sum(gelu(matmul(layer_norm(x, t.constant(Tensor::filled({4}, 1.0)), t.constant(Tensor({4}))),
                                   t.constant(w)))));
        return *t.grad(x);
    };
    EXPECT_EQ(grad(), grad());
}

TEST(FiniteDifference, OracleSelfTests) {
    Rng rng(35);
    const Tensor x0 = rng.gaussian({3, 4}, 1.0);
    EXPECT_LT(finite_difference_check([](Tape&, Var x) { return sum(x); }, x0, 1e-5), 1e-10);
    EXPECT_LT(finite_difference_check([](Tape&, Var x) { return sum(mul(x, x)); }, x0, 1e-5), 1e-8);
}

TEST(FiniteDifference, ThreeOpComposite) {
    Rng rng(36);
    const Tensor x0 = rng.gaussian({4, 5}, 1.0);
    const Tensor w = rng.gaussian({5, 3}, 1.0);
    const double err = finite_difference_check(
        [&](Tape& t, Var x) { return sum(softmax_rows(gelu(matmul(x, t.constant(w))))); }, x0, 1e-5);
    EXPECT_LT(err, 1e-6);
}

// Every differentiable op, 20 seeded inputs each.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    const int op = GetParam();
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(37, static_cast<std::uint64_t>(op) * 100 + s));
        const Tensor w = rng.gaussian({6, 6}, 1.0);
        const Tensor g = rng.gaussian({6}, 1.0);
        const Tensor b = rng.gaussian({6}, 1.0);
        const Tensor basis = ortho::qr_orthonormalize(rng.gaussian({6, 2}, 1.0)).basis.q();
        const Tensor weights = rng.gaussian({6, 6}, 1.0);
        Tensor x0 = rng.gaussian({6, 6}, 1.0);
        const std::vector<int> labels{0, 1, 1, 0, 1, 0};
        const std::vector<std::size_t> rows{5, 0, 0, 3};
        Fn f;
        switch (op) {
            case 0: f = [&](Tape& t, Var x) { return sum(mul(matmul(x, t.constant(w)), t.constant(weights))); }; break;
            case 1: f = [&](Tape& t, Var x) { return sum(mul(matmul(t.constant(w), x), t.constant(weights))); }; break;
            case 2: f = [&](Tape& t, Var x) { return sum(mul(add(x, mul(x, x)), t.constant(weights))); }; break;
            case 3: f = [&](Tape& t, Var x) { return sum(mul(sub(x, scale(x, 0.3)), t.constant(weights))); }; break;
            case 4: f = [&](Tape& t, Var x) { return sum(mul(add_row_bias(x, t.constant(g)), add_row_bias(x, t.constant(b)))); }; break;
            case 5: f = [&](Tape& t, Var x) { return sum(mul(gelu(x), t.constant(weights))); }; break;
            case 6: f = [&](Tape& t, Var x) { return sum(mul(softmax_rows(x), t.constant(weights))); }; break;
            case 7: f = [&](Tape& t, Var x) { return sum(mul(layer_norm(x, t.constant(g), t.constant(b)), t.constant(weights))); }; break;
            case 8:
                x0 = rng.gaussian({6, 2}, 1.0);
                f = [&](Tape&, Var x) { return cross_entropy_logits(x, labels); };
                break;
            case 9: f = [&](Tape& t, Var x) { return sum(mul(gather_rows(x, rows), gather_rows(t.constant(weights), rows))); }; break;
            case 10: f = [&](Tape& t, Var x) { return sum(mul(reshape(x, {4, 9}), reshape(t.constant(weights), {4, 9}))); }; break;
            case 11: f = [&](Tape& t, Var x) { return sum(mul(attention(x, x, x, 2, 3, 2), t.constant(weights))); }; break;
            case 12: f = [&](Tape& t, Var x) { return sum(mul(token_mean(x, 3), t.constant(weights))); }; break;
            case 13:
                f = [&](Tape& t, Var x) {
                    return sum(mul(project_tokens(x, t.constant(basis), 3, ProjectionFlow::Complement), t.constant(weights)));
                };
                break;
            case 14:
                f = [&](Tape& t, Var x) {
                    return sum(mul(project_tokens(x, t.constant(basis), 3, ProjectionFlow::Subspace), t.constant(weights)));
                };
                break;
            case 15:
                // Gradient with respect to the basis itself.
                x0 = basis;
                f = [&](Tape& t, Var q) {
                    return sum(mul(project_tokens(t.constant(w), q, 3, ProjectionFlow::Complement), t.constant(weights)));
                };
                break;
            case 16:
                x0 = rng.gaussian({6, 3}, 1.0);
                f = [&](Tape& t, Var m) { return sum(mul(qr_q(m), t.constant(slice_cols(weights, 0, 3)))); };
                break;
            default: FAIL();
        }
        EXPECT_LT(finite_difference_check(f, x0, 1e-5), 1e-5) << "op " << op << " seed " << s;
    }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 17));

TEST(ProjectTokens, ClsRowPassesThroughAndFlowsAreComplementary) {
    Rng rng(38);
    const Tensor x0 = rng.gaussian({8, 5}, 1.0);  // two groups of four rows
    const Tensor q = ortho::qr_orthonormalize(rng.gaussian({5, 2}, 1.0)).basis.q();
    Tape t;
    const Var x = t.constant(x0);
    const Tensor ca = project_tokens(x, t.constant(q), 4, ProjectionFlow::Complement).value();
    const Tensor sp = project_tokens(x, t.constant(q), 4, ProjectionFlow::Subspace).value();
    const Tensor id = project_tokens(x, t.constant(q), 4, ProjectionFlow::Identity).value();
    EXPECT_EQ(id, x0);
    for (std::size_t g = 0; g < 2; ++g) {
        for (std::size_t c = 0; c < 5; ++c) {
            EXPECT_EQ(ca.at(4 * g, c), x0.at(4 * g, c));
            EXPECT_EQ(sp.at(4 * g, c), x0.at(4 * g, c));
        }
    }
    for (std::size_t r = 0; r < 8; ++r) {
        if (r % 4 == 0) continue;
        for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(ca.at(r, c) + sp.at(r, c), x0.at(r, c), 1e-14);
    }
}

}  // namespace
}  // namespace lror::ad
