// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "lror/error.hpp"
#include "lror/experiment.hpp"

namespace {

int selftest() {
    const auto checks = lror::run_selftest();
    int failed = 0;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.passed) {
            std::cout << ": " << c.detail;
            ++failed;
        }
        std::cout << "\n";
    }
    std::cout << (checks.size() - static_cast<std::size_t>(failed)) << "/" << checks.size() << " checks passed\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank orthogonal removal of spurious subspaces on synthetic token data"};
    app.require_subcommand(1);

    std::string config_path;
    lror::Overrides overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t steps = 0;

    using Command = void (*)(const lror::ExperimentConfig&, std::ostream&);
    const std::map<std::string, std::pair<Command, std::string>> commands{
        {"gen", {lror::cmd_gen, "generate train/test datasets"}},
        {"train", {lror::cmd_train, "train the bases and head, write a checkpoint"}},
        {"eval", {lror::cmd_eval, "evaluate a checkpoint on the test split"}},
        {"ablate", {lror::cmd_ablate, "SP / CA / OFF head-retraining ablation"}},
        {"sweep", {lror::cmd_sweep, "rank x intervened-layer grid"}},
        {"probe", {lror::cmd_probe, "domain and label probes on raw vs intervened features"}},
        {"robust", {lror::cmd_robust, "test AUC under additive token noise"}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override every seed in the config");
        sub->add_option("--out", out_dir, "override output_dir");
        sub->add_option("--steps", steps, "override train.steps")->check(CLI::PositiveNumber);
        subs[name] = sub;
    }
    CLI::App* st = app.add_subcommand("selftest", "fast invariant checks");
    st->add_option("--config", config_path, "ignored; accepted for uniformity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (st->parsed()) {
        return selftest();
    }
    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) {
            continue;
        }
        try {
            lror::ExperimentConfig cfg = lror::load_experiment(config_path);
            if (sub->count("--seed") > 0) overrides.seed = seed;
            if (sub->count("--out") > 0) overrides.out = out_dir;
            if (sub->count("--steps") > 0) overrides.steps = steps;
            lror::apply_overrides(cfg, overrides);
            commands.at(name).first(cfg, std::cout);
            return 0;
        } catch (const lror::Error& e) {
            std::cerr << "lror " << name << ": " << e.what() << "\n";
            return lror::exit_code_for(e.kind());
        } catch (const std::exception& e) {
            std::cerr << "lror " << name << ": " << e.what() << "\n";
            return 1;
        }
    }
    return 2;
}
