// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lror/encoder.hpp"
#include "lror/error.hpp"
#include "lror/json_io.hpp"
#include "lror/scm.hpp"
#include "lror/trainer.hpp"

namespace lror {

/// Everything one CLI invocation needs; the README lists every key.
struct ExperimentConfig {
    scm::ScmConfig scm;
    enc::EncoderConfig encoder;
    train::TrainConfig train;
    double test_rho = 0.0;
    std::size_t n_train = 4000;
    std::size_t n_test = 2000;
    std::filesystem::path output_dir = "lror_out";
    train::ProbeConfig probe;
    train::TrainConfig ablate_head;  // head retraining budget per ablation arm
    train::SweepGrid sweep_grid;
    std::optional<enc::EncoderConfig> sweep_encoder;  // defaults to `encoder`
    std::optional<train::TrainConfig> sweep_train;    // defaults to `train`
    std::vector<double> robust_sigmas{0.0, 0.5, 1.0, 2.0};
    std::uint64_t robust_seed = 0;

    /// Cross-module checks (scm.d = encoder.d, scm.n_tokens = encoder.n_tokens, ...).
    void validate() const;
};

ExperimentConfig experiment_from_json(const Json& j);
Json to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Command-line overrides applied on top of the JSON file.
struct Overrides {
    std::optional<std::uint64_t> seed;  // sets scm, encoder and train seeds
    std::optional<std::filesystem::path> out;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> n_train;
    std::optional<std::size_t> n_test;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

// Output layout under output_dir:
//   data/train, data/test      dataset directories
//   checkpoint/                encoder checkpoint
//   *_report.json              one report per command
std::filesystem::path train_data_dir(const ExperimentConfig& cfg);
std::filesystem::path test_data_dir(const ExperimentConfig& cfg);
std::filesystem::path checkpoint_dir(const ExperimentConfig& cfg);

// Each command writes its JSON report, prints a summary to `out`, and throws
// lror::Error on failure.
void cmd_gen(const ExperimentConfig& cfg, std::ostream& out);
void cmd_train(const ExperimentConfig& cfg, std::ostream& out);
void cmd_eval(const ExperimentConfig& cfg, std::ostream& out);
void cmd_ablate(const ExperimentConfig& cfg, std::ostream& out);
void cmd_sweep(const ExperimentConfig& cfg, std::ostream& out);
void cmd_probe(const ExperimentConfig& cfg, std::ostream& out);
void cmd_robust(const ExperimentConfig& cfg, std::ostream& out);

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Fast invariant suite: QR, projectors, gradients, metrics, ANOVA ranks,
/// kernel equivalence. Deterministic output.
std::vector<SelftestCheck> run_selftest();

/// Process exit code for an error kind (2 config, 3 numeric, 4 missing
/// artifact, 1 otherwise).
int exit_code_for(ErrorKind kind);

}  // namespace lror
