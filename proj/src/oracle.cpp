// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lror/error.hpp"
#include "lror/rng.hpp"

namespace lror::scm {

LayerOracle layer_spurious_oracle(const enc::EncoderState& encoder, const ScmConfig& cfg, std::size_t layer,
                                  std::size_t n_pairs, std::uint64_t pair_seed) {
    require(layer < encoder.config.depth, ErrorKind::Index,
            "oracle layer " + std::to_string(layer) + " outside depth " + std::to_string(encoder.config.depth));
    require(cfg.d == encoder.config.d && cfg.n_tokens == encoder.config.n_tokens, ErrorKind::Config,
            "data config does not match the encoder");
    require(n_pairs >= 1, ErrorKind::Config, "oracle needs at least one pair");
    const std::size_t t = cfg.n_tokens + 1;
    const std::size_t d = cfg.d;
    Tensor tokens({2 * n_pairs, t, d});
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const auto [a, b] = counterfactual_pair(cfg, derive_seed(pair_seed, i));
        std::copy_n(a.data(), t * d, tokens.data() + (2 * i) * t * d);
        std::copy_n(b.data(), t * d, tokens.data() + (2 * i + 1) * t * d);
    }
    const Tensor h = enc::run_prefix(encoder, enc::embed(encoder, tokens), 2 * n_pairs, layer);

    // Gram matrix of the visual-row differences; its eigenvectors are the
    // left singular vectors of the D × (pairs·N_p) difference matrix.
    Tensor gram({d, d});
    std::vector<double> diff(d);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        for (std::size_t k = 1; k < t; ++k) {
            const auto ra = h.row((2 * i) * t + k);
            const auto rb = h.row((2 * i + 1) * t + k);
            for (std::size_t c = 0; c < d; ++c) {
                diff[c] = ra[c] - rb[c];
            }
            for (std::size_t r = 0; r < d; ++r) {
                const double dr = diff[r];
                double* g = gram.row(r).data();
                for (std::size_t c = 0; c < d; ++c) {
                    g[c] += dr * diff[c];
                }
            }
        }
    }
    const ortho::Svd svd = ortho::svd_jacobi(gram);
    LayerOracle out;
    for (double s : svd.sigma) {
        out.spectrum.push_back(std::sqrt(std::max(s, 0.0)));
    }
    const double top = out.spectrum.empty() ? 0.0 : out.spectrum.front();
    const std::size_t significant = static_cast<std::size_t>(
        std::count_if(out.spectrum.begin(), out.spectrum.end(), [&](double s) { return s > 1e-8 * top; }));
    if (significant < cfg.m_s) {
        out.degenerate = true;
        std::ostringstream msg;
        msg << "degenerate oracle at layer " << layer << ": " << significant << " significant singular values < m_s = "
            << cfg.m_s << "; spectrum";
        for (double s : out.spectrum) {
            msg << ' ' << s;
        }
        out.warning = msg.str();
    }
    out.basis = ortho::qr_orthonormalize(slice_cols(svd.u, 0, cfg.m_s)).basis;
    return out;
}

}  // namespace lror::scm
