// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lror/error.hpp"

namespace lror {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const char* section) {
    require(j.is_object(), ErrorKind::Config, std::string(section) + " must be a JSON object");
    for (const auto& item : j.items()) {
        require(known.count(item.key()) == 1, ErrorKind::Config,
                "unknown key '" + item.key() + "' in " + section + " config");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const char* section) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string(section) + "." + key + ": " + e.what());
    }
}

}  // namespace

Json to_json(const scm::ScmConfig& c) {
    return Json{{"d", c.d},
                {"n_tokens", c.n_tokens},
                {"m_s", c.m_s},
                {"m_c", c.m_c},
                {"k_domains", c.k_domains},
                {"rho", c.rho},
                {"sigma_s", c.sigma_s},
                {"sigma_noise", c.sigma_noise},
                {"seed", c.seed},
                {"domain_shift", c.domain_shift},
                {"causal_shift", c.causal_shift},
                {"token_jitter", c.token_jitter},
                {"warp", c.warp}};
}

scm::ScmConfig scm_config_from_json(const Json& j) {
    constexpr const char* s = "scm";
    reject_unknown(j, {"d", "n_tokens", "m_s", "m_c", "k_domains", "rho", "sigma_s", "sigma_noise", "seed",
                       "domain_shift", "causal_shift", "token_jitter", "warp"},
                   s);
    scm::ScmConfig c;
    read(j, "d", c.d, s);
    read(j, "n_tokens", c.n_tokens, s);
    read(j, "m_s", c.m_s, s);
    read(j, "m_c", c.m_c, s);
    read(j, "k_domains", c.k_domains, s);
    read(j, "rho", c.rho, s);
    read(j, "sigma_s", c.sigma_s, s);
    read(j, "sigma_noise", c.sigma_noise, s);
    read(j, "seed", c.seed, s);
    read(j, "domain_shift", c.domain_shift, s);
    read(j, "causal_shift", c.causal_shift, s);
    read(j, "token_jitter", c.token_jitter, s);
    read(j, "warp", c.warp, s);
    return c;
}

Json to_json(const enc::EncoderConfig& c) {
    return Json{{"d", c.d},
                {"n_tokens", c.n_tokens},
                {"depth", c.depth},
                {"heads", c.heads},
                {"rank", c.rank},
                {"intervene_layers", c.intervene_layers},
                {"seed", c.seed},
                {"backbone", enc::backbone_name(c.backbone)},
                {"init_gain", c.init_gain}};
}

enc::EncoderConfig encoder_config_from_json(const Json& j) {
    constexpr const char* s = "encoder";
    reject_unknown(j, {"d", "n_tokens", "depth", "heads", "rank", "intervene_layers", "seed", "backbone", "init_gain"},
                   s);
    enc::EncoderConfig c;
    read(j, "d", c.d, s);
    read(j, "n_tokens", c.n_tokens, s);
    read(j, "depth", c.depth, s);
    read(j, "heads", c.heads, s);
    read(j, "rank", c.rank, s);
    read(j, "intervene_layers", c.intervene_layers, s);
    read(j, "seed", c.seed, s);
    std::string backbone = enc::backbone_name(c.backbone);
    read(j, "backbone", backbone, s);
    c.backbone = enc::parse_backbone(backbone);
    read(j, "init_gain", c.init_gain, s);
    return c;
}

Json to_json(const train::TrainConfig& c) {
    return Json{{"steps", c.steps},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"weight_decay", c.weight_decay},
                {"cosine_decay", c.cosine_decay},
                {"seed", c.seed},
                {"eval_every", c.eval_every},
                {"jitter_scale", c.jitter_scale}};
}

train::TrainConfig train_config_from_json(const Json& j) {
    constexpr const char* s = "train";
    reject_unknown(j, {"steps", "batch_size", "learning_rate", "beta1", "beta2", "eps", "weight_decay", "cosine_decay",
                       "seed", "eval_every", "jitter_scale"},
                   s);
    train::TrainConfig c;
    read(j, "steps", c.steps, s);
    read(j, "batch_size", c.batch_size, s);
    read(j, "learning_rate", c.learning_rate, s);
    read(j, "beta1", c.beta1, s);
    read(j, "beta2", c.beta2, s);
    read(j, "eps", c.eps, s);
    read(j, "weight_decay", c.weight_decay, s);
    read(j, "cosine_decay", c.cosine_decay, s);
    read(j, "seed", c.seed, s);
    read(j, "eval_every", c.eval_every, s);
    read(j, "jitter_scale", c.jitter_scale, s);
    return c;
}

Json to_json(const metrics::MetricsReport& r) {
    Json j{{"n", r.n}, {"accuracy", r.accuracy}};
    j["auc"] = r.auc ? Json(*r.auc) : Json(nullptr);
    j["ap"] = r.ap ? Json(*r.ap) : Json(nullptr);
    j["eer"] = r.eer ? Json(*r.eer) : Json(nullptr);
    if (!r.undefined_reason.empty()) {
        j["undefined_reason"] = r.undefined_reason;
    }
    return j;
}

Json to_json(const train::RunReport& r) {
    Json evals = Json::array();
    for (const auto& e : r.evals) {
        evals.push_back(Json{{"step", e.step}, {"metrics", to_json(e.report)}});
    }
    Json angles = Json::array();
    for (const auto& a : r.angles) {
        angles.push_back(Json{{"layer", a.layer}, {"angles_rad", a.angles}, {"max_angle_rad", a.max_angle}});
    }
    Json resid = Json::array();
    for (const auto& [layer, value] : r.orthonormality_residual) {
        resid.push_back(Json{{"layer", layer}, {"max_residual", value}});
    }
    return Json{{"config", Json{{"train", to_json(r.config)}, {"encoder", to_json(r.encoder)}}},
                {"mode", enc::mode_name(r.mode)},
                {"trainable_params", r.trainable_params},
                {"loss", r.loss},
                {"evals", evals},
                {"principal_angles", angles},
                {"orthonormality_residual", resid},
                {"jitter_events", r.jitter_events},
                {"frozen_digest_before", r.frozen_digest_before},
                {"frozen_digest_after", r.frozen_digest_after}};
}

Json to_json(const train::Ablation& a) {
    return Json{{"SP", to_json(a.sp)}, {"CA", to_json(a.ca)}, {"OFF", to_json(a.off)}};
}

Json to_json(const train::ProbeResult& p) {
    return Json{{"layer", p.layer},
                {"raw_domain_acc", p.raw_domain_acc},
                {"complement_domain_acc", p.complement_domain_acc},
                {"chance", p.chance},
                {"raw_label_auc", p.raw_label_auc},
                {"complement_label_auc", p.complement_label_auc}};
}

Json to_json(const std::vector<train::SweepCell>& cells) {
    Json out = Json::array();
    for (const auto& c : cells) {
        Json j{{"rank", c.rank}, {"layers", c.layers}, {"final_loss", c.final_loss}};
        j["metrics"] = c.report ? to_json(*c.report) : Json(nullptr);
        if (!c.error.empty()) {
            j["error"] = c.error;
        }
        out.push_back(j);
    }
    return out;
}

Json to_json(const std::vector<train::RobustnessPoint>& points) {
    Json out = Json::array();
    for (const auto& p : points) {
        out.push_back(Json{{"sigma", p.sigma}, {"metrics", to_json(p.report)}});
    }
    return out;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, "malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out << text;
    out.flush();
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace lror
