// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "lror/autodiff.hpp"
#include "lror/error.hpp"
#include "lror/experiment.hpp"
#include "lror/kernels.hpp"
#include "lror/metrics.hpp"
#include "lror/ortho.hpp"
#include "lror/rng.hpp"
#include "lror/scm.hpp"

namespace lror {

namespace {

using Check = std::function<std::string()>;  // empty string on success

std::string fmt_err(const char* what, double value) {
    std::ostringstream ss;
    ss << what << " " << value;
    return ss.str();
}

std::string qr_reconstruction() {
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(derive_seed(11, s));
        const Tensor m = rng.gaussian({8, 3}, 1.0);
        const auto qr = ortho::qr_orthonormalize(m);
        const double rel = max_abs_diff(matmul(qr.basis.q(), qr.r), m) / frobenius_norm(m);
        if (rel > 1e-10) return fmt_err("reconstruction error", rel);
        if (ortho::orthonormality_residual(qr.basis.q()) > 1e-12) return "Q not orthonormal";
        for (std::size_t i = 0; i < 3; ++i) {
            if (qr.r.at(i, i) < 0.0) return "negative diagonal in R";
        }
    }
    const auto hand = ortho::qr_orthonormalize(Tensor::matrix({{3}, {4}, {0}}));
    if (std::abs(hand.basis.q().at(0, 0) - 0.6) > 1e-15 || std::abs(hand.basis.q().at(1, 0) - 0.8) > 1e-15 ||
        std::abs(hand.r.at(0, 0) - 5.0) > 1e-14) {
        return "hand case (3,4,0) wrong";
    }
    return {};
}

std::string projector_algebra() {
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(derive_seed(12, s));
        const auto basis = ortho::qr_orthonormalize(rng.gaussian({6, 1 + s % 5}, 1.0)).basis;
        const Tensor p = ortho::projector(basis);
        const Tensor pp = ortho::complement_projector(basis);
        const double e1 = frobenius_norm(sub(matmul(p, p), p));
        const double e2 = frobenius_norm(sub(matmul(pp, pp), pp));
        const double e3 = frobenius_norm(matmul(p, pp));
        const double e4 = frobenius_norm(sub(add(p, pp), Tensor::identity(6)));
        if (std::max({e1, e2, e3, e4}) > 1e-10) return fmt_err("projector identity violated by", std::max({e1, e2, e3, e4}));
        const Tensor x = rng.gaussian({5, 6}, 1.0);
        const Tensor once = ortho::remove_subspace(x, basis);
        if (max_abs_diff(ortho::remove_subspace(once, basis), once) > 1e-12) return "removal not idempotent";
    }
    return {};
}

std::string qr_gradient() {
    const Tensor hand = ortho::qr_backward(Tensor::matrix({{3}, {4}}), Tensor::matrix({{0.6}, {0.8}}),
                                           Tensor::matrix({{5}}), Tensor::matrix({{1}, {1}}));
    if (std::abs(hand.at(0, 0) - 0.032) > 1e-12 || std::abs(hand.at(1, 0) + 0.024) > 1e-12) {
        return "hand gradient differs from (0.032, -0.024)";
    }
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(13, s));
        const Tensor m = rng.gaussian({8, 3}, 1.0);
        const Tensor w = rng.gaussian({8, 3}, 1.0);
        const double err = ad::finite_difference_check(
            [&](ad::Tape& t, ad::Var x) { return ad::sum(ad::mul(ad::qr_q(x), t.constant(w))); }, m, 1e-6);
        if (err > 1e-5) return fmt_err("QR finite-difference error", err);
    }
    return {};
}

std::string network_gradient() {
    Rng rng(14);
    const Tensor x0 = rng.gaussian({6, 8}, 1.0);
    const Tensor wq = rng.gaussian({8, 8}, 0.4);
    const Tensor g = rng.gaussian({8}, 1.0);
    const Tensor b = rng.gaussian({8}, 1.0);
    const Tensor basis = ortho::qr_orthonormalize(rng.gaussian({8, 2}, 1.0)).basis.q();
    const double err = ad::finite_difference_check(
        [&](ad::Tape& t, ad::Var x) {
            ad::Var h = ad::project_tokens(x, t.constant(basis), 3, ad::ProjectionFlow::Complement);
            h = ad::layer_norm(h, t.constant(g), t.constant(b));
            const ad::Var q = ad::matmul(h, t.constant(wq));
            h = ad::add(h, ad::attention(q, h, h, 2, 3, 2));
            return ad::sum(ad::mul(ad::gelu(h), h));
        },
        x0, 1e-5);
    if (err > 1e-6) return fmt_err("composite finite-difference error", err);
    return {};
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                den += 1.0;
                num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return num / den;
}

std::string metric_oracles() {
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
    {
        const std::vector<double> s{0.8, 0.6, 0.4};
        const std::vector<int> y{1, 0, 1};
        if (!close(metrics::auc({s, y}), 0.5)) return "AUC hand case";
    }
    {
        const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
        const std::vector<int> y{1, 0, 1, 0};
        if (!close(metrics::eer({s, y}), 0.5)) return "EER hand case";
    }
    {
        const std::vector<double> s{0.1, 0.9};
        const std::vector<int> y{1, 0};
        if (!close(metrics::auc({s, y}), 0.0) || !close(metrics::average_precision({s, y}), 0.5)) {
            return "AUC/AP reversed hand case";
        }
    }
    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng(derive_seed(15, k));
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(8)) / 8.0;
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        if (!close(metrics::auc({s, y}), brute_auc(s, y))) return "AUC disagrees with pair counting";
        std::vector<int> flipped(n);
        std::transform(y.begin(), y.end(), flipped.begin(), [](int v) { return 1 - v; });
        if (!close(metrics::auc({s, y}) + metrics::auc({s, flipped}), 1.0)) return "AUC flip symmetry";
    }
    return {};
}

std::string anova_ranks() {
    for (std::uint64_t s = 0; s < 4; ++s) {
        scm::ScmConfig cfg;
        cfg.d = 24;
        cfg.n_tokens = 4;
        cfg.m_s = 3;
        cfg.m_c = 4;
        cfg.k_domains = 2 + s % 3;
        cfg.seed = s;
        const auto ds = scm::sample_dataset(cfg, 400, scm::Split::Train, 0.0);
        const Tensor n_comp = scm::spurious_component(ds);
        const std::size_t rank = ortho::numerical_rank(ortho::covariance(n_comp), 1e-8);
        if (rank != cfg.m_s) return "spurious covariance rank " + std::to_string(rank);
        const auto an = ortho::anova_decompose(scm::mean_pooled_visual(ds.tokens), ds.domains);
        const std::size_t between = ortho::numerical_rank(an.between, 1e-8);
        if (between > cfg.k_domains - 1) return "between-domain rank " + std::to_string(between);
        const double split = max_abs_diff(add(an.within, an.between), an.total);
        if (split > 1e-10) return fmt_err("within + between differs from total by", split);
    }
    return {};
}

std::string counterfactuals() {
    scm::ScmConfig cfg;
    cfg.seed = 5;
    const auto ds = scm::sample_dataset(cfg, 2 * cfg.k_domains, scm::Split::Train, 0.0);
    const auto basis = scm::spurious_basis(ds);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto [a, b] = scm::counterfactual_pair(cfg, s);
        const Tensor residual = ortho::remove_subspace(sub(a, b), basis);
        if (frobenius_norm(residual) > 1e-10) return fmt_err("pair difference leaves span(J_s) by", frobenius_norm(residual));
    }
    return {};
}

std::string kernel_equivalence() {
    const kernels::KernelTable* simd = kernels::avx2_table();
    if (simd == nullptr) simd = kernels::neon_table();
    if (simd == nullptr) return {};
    const kernels::KernelTable* scalar = &kernels::scalar_table();
    Rng rng(16);
    for (std::size_t trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(13);
        const std::size_t n = 1 + rng.below(19);
        const std::size_t k = 1 + rng.below(17);
        const Tensor a = rng.gaussian({m, k}, 1.0);
        const Tensor b = rng.gaussian({k, n}, 1.0);
        Tensor c1({m, n});
        Tensor c2({m, n});
        scalar->gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n, false);
        simd->gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n, false);
        if (max_abs_diff(c1, c2) > 1e-12 * static_cast<double>(k)) return "SIMD gemm differs from scalar";
    }
    return {};
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
    const std::vector<std::pair<const char*, Check>> checks{
        {"qr-reconstruction", qr_reconstruction}, {"projector-algebra", projector_algebra},
        {"qr-gradient", qr_gradient},             {"network-gradient", network_gradient},
        {"metric-oracles", metric_oracles},       {"anova-ranks", anova_ranks},
        {"counterfactual-span", counterfactuals}, {"kernel-equivalence", kernel_equivalence},
    };
    std::vector<SelftestCheck> out;
    for (const auto& [name, fn] : checks) {
        SelftestCheck c;
        c.name = name;
        try {
            c.detail = fn();
            c.passed = c.detail.empty();
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace lror
