// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lror/autodiff.hpp"
#include "lror/ortho.hpp"
#include "lror/tensor.hpp"

namespace lror::enc {

/// Transformer: pre-LN attention + GELU MLP blocks.
/// Linear: each block adds the token average to every row (uniform
///   attention with identity value/output maps, no MLP, no norms).
/// Identity: blocks are the identity map.
enum class Backbone { Transformer, Linear, Identity };

/// CA keeps the orthogonal complement of span(Q), SP keeps the projection
/// onto span(Q), OFF skips the intervention.
enum class Mode { CA, SP, OFF };

const char* backbone_name(Backbone b);
const char* mode_name(Mode m);
Backbone parse_backbone(const std::string& s);
Mode parse_mode(const std::string& s);

struct EncoderConfig {
    std::size_t d = 64;
    std::size_t n_tokens = 16;
    std::size_t depth = 6;
    std::size_t heads = 4;
    std::size_t rank = 8;
    std::vector<std::size_t> intervene_layers{3, 4, 5};
    std::uint64_t seed = 0;
    Backbone backbone = Backbone::Transformer;
    /// Frozen weights get std = init_gain·√(2/fan_in).
    double init_gain = 1.0;

    void validate() const;
    std::size_t tokens() const { return n_tokens + 1; }
};

struct BlockWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;  // D×D
    Tensor ln2_gain, ln2_bias;
    Tensor w1;  // D×4D
    Tensor w2;  // 4D×D
};

struct FrozenWeights {
    std::vector<BlockWeights> blocks;
    Tensor final_gain, final_bias;
    Tensor positional;  // (1+N_p)×D, added to the input tokens

    /// Fixed serialization order used by the checkpoint bundle and digest.
    std::vector<Tensor> flatten() const;
    static FrozenWeights unflatten(const std::vector<Tensor>& parts, std::size_t depth);
};

std::uint64_t frozen_digest(const FrozenWeights& w);

/// Trainable D×r matrix whose QR factor defines the removed subspace.
class LrorLayer {
public:
    LrorLayer(std::size_t layer, Tensor m);

    std::size_t layer() const noexcept { return layer_; }
    const Tensor& m() const noexcept { return m_; }
    /// Replaces M; the cached basis becomes stale until refresh().
    void set_m(Tensor m);
    Tensor& mutable_m() noexcept { return m_; }

    /// Recomputes the cached basis from the current M.
    const ortho::OrthoBasis& refresh();
    /// Cached basis; throws Consistency when M changed since the last refresh.
    const ortho::OrthoBasis& basis() const;
    /// Installs a basis computed elsewhere from the current M.
    void adopt(ortho::OrthoBasis basis);

private:
    std::size_t layer_;
    Tensor m_;
    ortho::OrthoBasis basis_;
    bool has_basis_ = false;
};

struct EncoderState {
    EncoderConfig config;
    FrozenWeights frozen;
    std::vector<LrorLayer> lror;  // ascending layer order
    Tensor head_w;                // D×2
    Tensor head_b;                // 2
    Mode mode = Mode::CA;
    /// Keeps every M fixed during training (SP mode always does).
    bool freeze_bases = false;

    bool bases_trainable() const { return mode != Mode::SP && !freeze_bases; }
    LrorLayer* layer_at(std::size_t index);
    const LrorLayer* layer_at(std::size_t index) const;
    /// First layer whose input is affected by an intervention (depth if none).
    std::size_t first_intervened() const;
};

EncoderState init_frozen_encoder(const EncoderConfig& cfg);

std::size_t trainable_params_count(const EncoderState& state);
/// Closed formula behind trainable_params_count in CA mode.
std::size_t lror_param_formula(std::size_t d, std::size_t rank, std::size_t layers);

struct LayerTrace {
    std::size_t layer = 0;
    Tensor pre;         // visual rows entering the intervention, [B·N_p × D]
    Tensor post;        // visual rows leaving it
    Tensor cls_before;  // [B × D]
    Tensor cls_after;
};

struct Trace {
    std::vector<LayerTrace> layers;
};

/// Handles into one forward pass built on a tape.
struct Graph {
    ad::Var logits;
    ad::Var features;        // final-norm CLS rows, [B × D]
    std::vector<ad::Var> m;  // leaf per LROR layer, same order as state.lror
    ad::Var head_w;
    ad::Var head_b;
};

struct GraphOptions {
    /// Register M and the head as trainable leaves.
    bool trainable = false;
    Trace* trace = nullptr;
};

/// Input tokens [B × T × D] plus the positional table, as [B·T × D].
Tensor embed(const EncoderState& state, const Tensor& tokens);

/// Runs blocks [0, until) without any intervention on embedded input.
Tensor run_prefix(const EncoderState& state, const Tensor& x, std::size_t batch, std::size_t until);

/// Builds layers [start, depth) plus norm and head on the tape. `x` is the
/// [B·T × D] activation at the input of layer `start`.
Graph build_forward(ad::Tape& tape, EncoderState& state, const Tensor& x, std::size_t batch, std::size_t start,
                    const GraphOptions& options);

struct ForwardResult {
    Tensor logits;    // [B × 2]
    Tensor features;  // [B × D]
    Trace trace;
};

/// Inference forward over a token set, chunked to bound tape memory.
ForwardResult forward(EncoderState& state, const Tensor& tokens, bool trace = false);

/// Positive-class probability from a logit row.
double positive_probability(double logit0, double logit1);

// Checkpoint directory: frozen.lrt (bundle), m_layer{i}.lrt, head.lrt
// (rows 0..D−1 weight, row D bias), config.json, digest.txt.
void save_checkpoint(const std::filesystem::path& dir, const EncoderState& state);
EncoderState load_checkpoint(const std::filesystem::path& dir);

}  // namespace lror::enc
