// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lror/encoder.hpp"
#include "lror/metrics.hpp"
#include "lror/scm.hpp"

namespace lror::train {

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled decay applied to the head weight only.
    double weight_decay = 0.0;
    /// Half-cosine decay of the learning rate to zero over `steps`.
    bool cosine_decay = true;
    std::uint64_t seed = 0;
    /// 0 disables intermediate evaluations (the final one always runs when
    /// an evaluation set is given).
    std::size_t eval_every = 250;
    /// Std of the Gaussian jitter added to a rank-deficient M.
    double jitter_scale = 1e-3;

    void validate() const;
};

struct EvalPoint {
    std::size_t step = 0;
    metrics::MetricsReport report;
};

struct LayerAngles {
    std::size_t layer = 0;
    /// Principal angles (radians) between span(Q) and the reference subspace.
    std::vector<double> angles;
    double max_angle = 0.0;
};

struct RunReport {
    std::vector<double> loss;  // one entry per optimizer step
    std::vector<EvalPoint> evals;
    std::vector<LayerAngles> angles;
    /// Largest ‖QᵀQ − I‖_F seen after any step, per intervened layer.
    std::vector<std::pair<std::size_t, double>> orthonormality_residual;
    std::size_t trainable_params = 0;
    std::size_t jitter_events = 0;
    std::string frozen_digest_before;
    std::string frozen_digest_after;
    TrainConfig config;
    enc::EncoderConfig encoder;
    enc::Mode mode = enc::Mode::CA;
    /// Not serialized: reports must be reproducible bit for bit.
    double wall_seconds = 0.0;
};

struct TrainOptions {
    const scm::SyntheticDataset* eval_set = nullptr;
    /// Pairs used by the per-layer reference subspace; 0 skips the angles.
    std::size_t oracle_pairs = 256;
};

/// Adam on every trainable M (unless frozen) and the head.
RunReport train(enc::EncoderState& state, const scm::SyntheticDataset& train_ds, const TrainConfig& cfg,
                const TrainOptions& options = {});

/// Positive-class probability per sample.
std::vector<double> predict(enc::EncoderState& state, const Tensor& tokens);
metrics::MetricsReport evaluate(enc::EncoderState& state, const scm::SyntheticDataset& ds);

struct Ablation {
    metrics::MetricsReport sp;
    metrics::MetricsReport ca;
    metrics::MetricsReport off;
};

/// Freezes every M, retrains a zeroed head in SP, CA and OFF mode on
/// train_ds, and evaluates each on test_ds.
Ablation ablate_subspace(const enc::EncoderState& trained, const scm::SyntheticDataset& train_ds,
                         const scm::SyntheticDataset& test_ds, const TrainConfig& head_cfg);

struct ProbeConfig {
    std::size_t steps = 500;
    double learning_rate = 1e-2;
};

struct ProbeResult {
    std::size_t layer = 0;
    double raw_domain_acc = 0.0;
    double complement_domain_acc = 0.0;
    /// Majority-class frequency of the domain on the held-out half.
    double chance = 0.0;
    double raw_label_auc = 0.0;
    double complement_label_auc = 0.0;
};

/// Logistic probes on z-scored, mean-pooled visual tokens: raw inputs vs.
/// the output of the last intervention. Even samples train, odd evaluate.
ProbeResult probe_invariance(enc::EncoderState& state, const scm::SyntheticDataset& ds, const ProbeConfig& cfg = {});

struct SweepSetup {
    scm::ScmConfig scm;
    enc::EncoderConfig encoder;
    TrainConfig train;
    std::size_t n_train = 2000;
    std::size_t n_test = 1000;
    double test_rho = 0.0;
};

struct SweepGrid {
    std::vector<std::size_t> ranks{4, 8, 12};
    std::vector<std::size_t> layer_counts{2, 3, 4};
};

struct SweepCell {
    std::size_t rank = 0;
    std::size_t layers = 0;
    std::optional<metrics::MetricsReport> report;
    double final_loss = 0.0;
    std::string error;
};

/// One model per (rank, last-k layers) cell; cells may run on a worker pool
/// capped by LROR_THREADS, results come back in grid order.
std::vector<SweepCell> sweep(const SweepGrid& grid, const SweepSetup& setup);

/// Intervened-layer list made of the last k layers of a depth-L encoder.
std::vector<std::size_t> last_layers(std::size_t depth, std::size_t k);

struct RobustnessPoint {
    double sigma = 0.0;
    metrics::MetricsReport report;
};

/// Adds N(0, σ²) to every visual token (CLS slot untouched) and evaluates.
std::vector<RobustnessPoint> noise_robustness(enc::EncoderState& state, const scm::SyntheticDataset& ds,
                                              const std::vector<double>& sigmas, std::uint64_t seed);

/// Sweep pool size from LROR_THREADS (default: hardware concurrency).
std::size_t worker_threads();

}  // namespace lror::train
