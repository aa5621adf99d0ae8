// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lror/ortho.hpp"
#include "lror/tensor.hpp"

namespace lror::scm {

/// Structural causal model behind the synthetic token sets. A hidden
/// confounder couples the label to a discrete domain; the domain shifts the
/// spurious latent, which enters the tokens through J_s, while the causal
/// latent (whose mean depends on the label) enters through J_c.
struct ScmConfig {
    std::size_t d = 64;
    std::size_t n_tokens = 16;
    std::size_t m_s = 4;
    std::size_t m_c = 8;
    std::size_t k_domains = 3;
    /// P(domain parity == label) = (1 + rho) / 2.
    double rho = 0.95;
    double sigma_s = 32.0;
    double sigma_noise = 0.1;
    std::uint64_t seed = 0;
    /// Norm scale of the per-domain spurious means.
    double domain_shift = 48.0;
    /// Distance between the two class means of the causal latent.
    double causal_shift = 4.0;
    /// Std of the per-token causal jitter.
    double token_jitter = 0.5;
    /// Blend toward tanh per coordinate: t ← (1−w)·t + w·tanh(t).
    double warp = 0.0;

    void validate() const;
};

enum class Split { Train, Test };

struct SyntheticDataset {
    Tensor tokens;  // [n × (1+N_p) × D], CLS slot first
    std::vector<int> labels;
    std::vector<int> domains;
    Tensor j_s;  // D × m_s
    Tensor j_c;  // D × m_c
    /// Per-sample latents (only present for freshly generated sets).
    Tensor spurious_latent;  // n × m_s, domain mean included
    Tensor causal_latent;    // n × m_c
    ScmConfig config;
    Split split = Split::Train;
    double rho_used = 0.0;

    std::size_t size() const { return labels.size(); }
    std::size_t tokens_per_sample() const { return tokens.ndim() == 3 ? tokens.extent(1) : 0; }
    /// Rows [first, first+count) as a [count × T × D] tensor.
    Tensor token_block(std::size_t first, std::size_t count) const;
    /// Token sets for an arbitrary list of samples.
    Tensor gather(std::span<const std::size_t> indices) const;
};

/// Geometry shared by every split of one config: orthonormal J_s ⟂ J_c,
/// per-domain spurious means, and the causal class direction.
struct World {
    Tensor j_s;
    Tensor j_c;
    Tensor domain_means;    // K × m_s
    std::vector<double> causal_direction;  // unit, length m_c
};

World make_world(const ScmConfig& cfg);

SyntheticDataset sample_dataset(const ScmConfig& cfg, std::size_t n, Split split, double test_rho);

ortho::OrthoBasis spurious_basis(const SyntheticDataset& ds);
ortho::OrthoBasis causal_basis(const SyntheticDataset& ds);

/// Two token sets that share every latent draw except the spurious one (and
/// the domain). With vary_spurious = false both are the same draw.
std::pair<Tensor, Tensor> counterfactual_pair(const ScmConfig& cfg, std::uint64_t seed, bool vary_spurious = true);

/// Mean over the visual tokens of every sample: [n × D].
Tensor mean_pooled_visual(const Tensor& tokens);

/// Spurious component J_s·Δz_s of every sample: [n × D].
Tensor spurious_component(const SyntheticDataset& ds);
/// Causal component J_c·z_c of every sample (token jitter excluded): [n × D].
Tensor causal_component(const SyntheticDataset& ds);

/// Digest over tokens, labels and domains.
std::uint64_t dataset_digest(const SyntheticDataset& ds);

const char* split_name(Split split);

// Directory layout: tokens.lrt labels.lrt domains.lrt js.lrt jc.lrt meta.json
void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds);
SyntheticDataset load_dataset(const std::filesystem::path& dir);

}  // namespace lror::scm
