// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "lror/experiment.hpp"
#include "lror/json_io.hpp"

namespace lror {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const char* bin = std::getenv("LROR_BIN");
        if (bin == nullptr) GTEST_SKIP() << "LROR_BIN not set";
        bin_ = bin;
        dir_ = fs::temp_directory_path() / ("lror_test_cli_" + std::string(
                                                               ::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);

        ExperimentConfig cfg;
        cfg.scm.d = 16;
        cfg.scm.n_tokens = 4;
        cfg.scm.m_s = 2;
        cfg.scm.m_c = 4;
        cfg.encoder.d = 16;
        cfg.encoder.n_tokens = 4;
        cfg.encoder.depth = 2;
        cfg.encoder.heads = 2;
        cfg.encoder.rank = 2;
        cfg.encoder.intervene_layers = {1};
        cfg.train.steps = 5;
        cfg.train.eval_every = 0;
        cfg.ablate_head = cfg.train;
        cfg.n_train = 64;
        cfg.n_test = 32;
        cfg.probe.steps = 5;
        cfg.output_dir = dir_ / "out";
        config_ = to_json(cfg);
        write_config(config_);
    }

    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }

    void write_config(const Json& j) { write_json_file(dir_ / "config.json", j); }

    int run(const std::string& args) {
        const std::string line = bin_ + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1";
        const int status = std::system(line.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    int run_cmd(const std::string& cmd) { return run(cmd + " --config " + (dir_ / "config.json").string()); }

    std::string log() const {
        std::ifstream in(dir_ / "log.txt");
        return {std::istreambuf_iterator<char>(in), {}};
    }

    std::string bin_;
    fs::path dir_;
    Json config_;
};

TEST_F(Cli, SelftestPasses) {
    EXPECT_EQ(run("selftest"), 0) << log();
    EXPECT_NE(log().find("checks passed"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("train --config " + (dir_ / "absent.json").string()), 2);
}

TEST_F(Cli, BadConfigExitsTwo) {
    Json bad = config_;
    bad["encoder"]["heads"] = 3;
    write_config(bad);
    EXPECT_EQ(run_cmd("gen"), 2) << log();
    bad = config_;
    bad["train"]["no_such_key"] = 1;
    write_config(bad);
    EXPECT_EQ(run_cmd("gen"), 2) << log();
    {
        std::ofstream out(dir_ / "config.json", std::ios::trunc);
        out << "{ not json";
    }
    EXPECT_EQ(run_cmd("gen"), 2) << log();
}

TEST_F(Cli, MissingArtifactsExitFour) {
    EXPECT_EQ(run_cmd("train"), 4) << log();
    ASSERT_EQ(run_cmd("gen"), 0) << log();
    EXPECT_EQ(run_cmd("eval"), 4) << log();
}

TEST_F(Cli, PipelineAndCorruption) {
    ASSERT_EQ(run_cmd("gen"), 0) << log();
    ASSERT_EQ(run_cmd("train"), 0) << log();
    EXPECT_EQ(run_cmd("eval"), 0) << log();
    for (const char* f : {"train_report.json", "eval_report.json"})
        EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;

    const fs::path tokens = dir_ / "out" / "data" / "test" / "tokens.lrt";
    ASSERT_TRUE(fs::exists(tokens));
    fs::resize_file(tokens, fs::file_size(tokens) / 2);
    EXPECT_EQ(run_cmd("eval"), 4) << log();
    EXPECT_NE(log().find("tokens.lrt"), std::string::npos) << log();
}

TEST_F(Cli, StepsOverride) {
    ASSERT_EQ(run_cmd("gen"), 0) << log();
    ASSERT_EQ(run_cmd("train --steps 3"), 0) << log();
    const Json report = read_json_file(dir_ / "out" / "train_report.json");
    EXPECT_EQ(report.dump().find("\"loss\"") != std::string::npos, true);
}

}  // namespace
}  // namespace lror
