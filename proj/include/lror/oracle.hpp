// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lror/encoder.hpp"
#include "lror/ortho.hpp"
#include "lror/scm.hpp"

namespace lror::scm {

struct LayerOracle {
    ortho::OrthoBasis basis;      // D × m_s
    std::vector<double> spectrum;  // singular values of the stacked differences, descending
    bool degenerate = false;
    std::string warning;
};

/// Reference spurious subspace at the input of `layer`: counterfactual pairs
/// go through the frozen prefix without intervention, and the top m_s left
/// singular vectors of the stacked visual-token differences span the result.
LayerOracle layer_spurious_oracle(const enc::EncoderState& encoder, const ScmConfig& cfg, std::size_t layer,
                                  std::size_t n_pairs, std::uint64_t pair_seed = 0);

}  // namespace lror::scm
