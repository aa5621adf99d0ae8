// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "lror/encoder.hpp"
#include "lror/metrics.hpp"
#include "lror/scm.hpp"
#include "lror/trainer.hpp"

namespace lror {

using Json = nlohmann::json;

// Readers accept partial objects (missing keys keep their defaults) and
// reject unknown keys with a config error.
Json to_json(const scm::ScmConfig& c);
scm::ScmConfig scm_config_from_json(const Json& j);
Json to_json(const enc::EncoderConfig& c);
enc::EncoderConfig encoder_config_from_json(const Json& j);
Json to_json(const train::TrainConfig& c);
train::TrainConfig train_config_from_json(const Json& j);

Json to_json(const metrics::MetricsReport& r);
Json to_json(const train::RunReport& r);
Json to_json(const train::Ablation& a);
Json to_json(const train::ProbeResult& p);
Json to_json(const std::vector<train::SweepCell>& cells);
Json to_json(const std::vector<train::RobustnessPoint>& points);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lror
