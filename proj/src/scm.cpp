// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/scm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "lror/error.hpp"
#include "lror/json_io.hpp"
#include "lror/kernels.hpp"
#include "lror/rng.hpp"

namespace lror::scm {

void ScmConfig::validate() const {
    require(d >= 1 && n_tokens >= 1, ErrorKind::Config, "d and n_tokens must be positive");
    require(m_s + m_c <= d, ErrorKind::Config,
            "m_s + m_c = " + std::to_string(m_s + m_c) + " exceeds D = " + std::to_string(d));
    require(m_c >= 1, ErrorKind::Config, "m_c must be at least 1");
    require(k_domains >= 1, ErrorKind::Config, "k_domains must be at least 1");
    require(rho >= 0.0 && rho <= 1.0, ErrorKind::Config, "rho must lie in [0, 1]");
    require(sigma_s > 0.0 && sigma_noise > 0.0, ErrorKind::Config, "sigma_s and sigma_noise must be positive");
    require(causal_shift > 0.0 && domain_shift >= 0.0 && token_jitter >= 0.0, ErrorKind::Config,
            "shift and jitter scales must be non-negative (causal_shift positive)");
    require(warp >= 0.0 && warp <= 1.0, ErrorKind::Config, "warp must lie in [0, 1]");
}

const char* split_name(Split split) { return split == Split::Train ? "train" : "test"; }

World make_world(const ScmConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0x5eed));
    const Tensor g = rng.gaussian({cfg.d, cfg.m_s + cfg.m_c}, 1.0);
    const Tensor q = ortho::qr_orthonormalize(g).basis.q();
    World w;
    w.j_s = slice_cols(q, 0, cfg.m_s);
    w.j_c = slice_cols(q, cfg.m_s, cfg.m_c);
    w.domain_means = Tensor({cfg.k_domains, cfg.m_s});
    if (cfg.m_s > 0) {
        const double per_coord = cfg.domain_shift / std::sqrt(static_cast<double>(cfg.m_s));
        for (double& v : w.domain_means.values()) {
            v = rng.normal(0.0, per_coord);
        }
    }
    w.causal_direction.resize(cfg.m_c);
    double norm = 0.0;
    for (double& v : w.causal_direction) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : w.causal_direction) {
        v /= norm;
    }
    return w;
}

namespace {

struct Latents {
    int label = 0;
    int domain = 0;
    std::vector<double> z_c;
    std::vector<double> dz_s;
    Tensor jitter;  // N_p × m_c
    Tensor noise;   // N_p × D
};

int draw_domain(const ScmConfig& cfg, int label, double rho, Rng& rng) {
    if (cfg.k_domains == 1) {
        return 0;
    }
    const int parity = rng.uniform() < 0.5 * (1.0 + rho) ? label : 1 - label;
    // Domains with the requested parity: parity, parity + 2, ...
    const std::size_t count = (cfg.k_domains - static_cast<std::size_t>(parity) + 1) / 2;
    return parity + 2 * static_cast<int>(rng.below(count));
}

std::vector<double> draw_spurious(const ScmConfig& cfg, const World& w, int domain, Rng& rng) {
    std::vector<double> dz(cfg.m_s);
    for (std::size_t i = 0; i < cfg.m_s; ++i) {
        dz[i] = w.domain_means.at(static_cast<std::size_t>(domain), i) + rng.normal(0.0, cfg.sigma_s);
    }
    return dz;
}

Latents draw_latents(const ScmConfig& cfg, const World& w, int label, double rho, Rng& rng) {
    Latents l;
    l.label = label;
    l.z_c.resize(cfg.m_c);
    const double sign = label == 1 ? 0.5 : -0.5;
    for (std::size_t i = 0; i < cfg.m_c; ++i) {
        l.z_c[i] = sign * cfg.causal_shift * w.causal_direction[i] + rng.normal();
    }
    l.domain = draw_domain(cfg, label, rho, rng);
    l.dz_s = draw_spurious(cfg, w, l.domain, rng);
    l.jitter = rng.gaussian({cfg.n_tokens, cfg.m_c}, cfg.token_jitter);
    l.noise = rng.gaussian({cfg.n_tokens, cfg.d}, cfg.sigma_noise);
    return l;
}

// Writes the (1+N_p) × D token block for one sample; CLS slot stays zero.
void compose(const ScmConfig& cfg, const World& w, const Latents& l, double* out) {
    const std::size_t d = cfg.d;
    std::vector<double> spurious(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        spurious[i] = kernels::dot(cfg.m_s, w.j_s.row(i).data(), l.dz_s.data());
    }
    std::fill_n(out, d, 0.0);
    std::vector<double> causal(cfg.m_c);
    for (std::size_t t = 0; t < cfg.n_tokens; ++t) {
        double* tok = out + (t + 1) * d;
        for (std::size_t j = 0; j < cfg.m_c; ++j) {
            causal[j] = l.z_c[j] + l.jitter.at(t, j);
        }
        for (std::size_t i = 0; i < d; ++i) {
            double v = kernels::dot(cfg.m_c, w.j_c.row(i).data(), causal.data()) + spurious[i] + l.noise.at(t, i);
            if (cfg.warp > 0.0) {
                v = (1.0 - cfg.warp) * v + cfg.warp * std::tanh(v);
            }
            tok[i] = v;
        }
    }
}

}  // namespace

SyntheticDataset sample_dataset(const ScmConfig& cfg, std::size_t n, Split split, double test_rho) {
    cfg.validate();
    require(n >= 2 * cfg.k_domains, ErrorKind::Config,
            "need at least 2K = " + std::to_string(2 * cfg.k_domains) + " samples, got " + std::to_string(n));
    const double rho = split == Split::Train ? cfg.rho : test_rho;
    require(rho >= 0.0 && rho <= 1.0, ErrorKind::Config, "test_rho must lie in [0, 1]");
    const World w = make_world(cfg);
    Rng rng(derive_seed(cfg.seed, split == Split::Train ? 1 : 2));

    // Exactly balanced labels in shuffled order.
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 2);
    }
    std::shuffle(labels.begin(), labels.end(), rng.engine());

    const std::size_t t = cfg.n_tokens + 1;
    SyntheticDataset ds;
    ds.tokens = Tensor({n, t, cfg.d});
    ds.labels = labels;
    ds.domains.resize(n);
    ds.spurious_latent = Tensor({n, cfg.m_s});
    ds.causal_latent = Tensor({n, cfg.m_c});
    for (std::size_t i = 0; i < n; ++i) {
        const Latents l = draw_latents(cfg, w, labels[i], rho, rng);
        compose(cfg, w, l, ds.tokens.data() + i * t * cfg.d);
        ds.domains[i] = l.domain;
        std::copy(l.dz_s.begin(), l.dz_s.end(), ds.spurious_latent.row(i).begin());
        std::copy(l.z_c.begin(), l.z_c.end(), ds.causal_latent.row(i).begin());
    }
    ds.j_s = w.j_s;
    ds.j_c = w.j_c;
    ds.config = cfg;
    ds.split = split;
    ds.rho_used = rho;
    return ds;
}

Tensor SyntheticDataset::token_block(std::size_t first, std::size_t count) const {
    const std::size_t t = tokens.extent(1);
    const std::size_t d = tokens.extent(2);
    require(first + count <= size(), ErrorKind::Index, "token block out of range");
    const auto begin = tokens.storage().begin() + static_cast<std::ptrdiff_t>(first * t * d);
    return Tensor({count, t, d}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * t * d)));
}

Tensor SyntheticDataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t t = tokens.extent(1);
    const std::size_t d = tokens.extent(2);
    Tensor out({indices.size(), t, d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < size(), ErrorKind::Index, "sample index out of range");
        std::copy_n(tokens.data() + indices[i] * t * d, t * d, out.data() + i * t * d);
    }
    return out;
}

ortho::OrthoBasis spurious_basis(const SyntheticDataset& ds) { return ortho::OrthoBasis(ds.j_s); }

ortho::OrthoBasis causal_basis(const SyntheticDataset& ds) { return ortho::OrthoBasis(ds.j_c); }

std::pair<Tensor, Tensor> counterfactual_pair(const ScmConfig& cfg, std::uint64_t seed, bool vary_spurious) {
    cfg.validate();
    const World w = make_world(cfg);
    Rng rng(derive_seed(seed, 0xcf));
    const int label = static_cast<int>(rng.below(2));
    const Latents a = draw_latents(cfg, w, label, cfg.rho, rng);
    Latents b = a;
    if (vary_spurious) {
        if (cfg.k_domains > 1) {
            b.domain = static_cast<int>((static_cast<std::size_t>(a.domain) + 1 + rng.below(cfg.k_domains - 1)) %
                                        cfg.k_domains);
        }
        b.dz_s = draw_spurious(cfg, w, b.domain, rng);
    }
    const std::size_t t = cfg.n_tokens + 1;
    Tensor ta({t, cfg.d});
    Tensor tb({t, cfg.d});
    compose(cfg, w, a, ta.data());
    compose(cfg, w, b, tb.data());
    return {std::move(ta), std::move(tb)};
}

Tensor mean_pooled_visual(const Tensor& tokens) {
    require(tokens.ndim() == 3 && tokens.extent(1) >= 2, ErrorKind::Dimension,
            "expected [n × (1+N_p) × D] tokens, got " + shape_string(tokens.shape()));
    const std::size_t n = tokens.extent(0);
    const std::size_t t = tokens.extent(1);
    const std::size_t d = tokens.extent(2);
    Tensor out({n, d});
    const double w = 1.0 / static_cast<double>(t - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 1; k < t; ++k) {
            kernels::axpy(d, w, tokens.data() + (i * t + k) * d, out.row(i).data());
        }
    }
    return out;
}

Tensor spurious_component(const SyntheticDataset& ds) {
    require(ds.spurious_latent.size() > 0 || ds.config.m_s == 0, ErrorKind::Contract,
            "dataset carries no latent record (loaded from disk?)");
    return matmul_nt(ds.spurious_latent, ds.j_s);
}

Tensor causal_component(const SyntheticDataset& ds) {
    require(ds.causal_latent.size() > 0, ErrorKind::Contract, "dataset carries no latent record (loaded from disk?)");
    return matmul_nt(ds.causal_latent, ds.j_c);
}

namespace {

Tensor ints_to_tensor(const std::vector<int>& v) {
    Tensor t({v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) {
        t[i] = static_cast<double>(v[i]);
    }
    return t;
}

std::vector<int> tensor_to_ints(const Tensor& t, const std::string& name) {
    std::vector<int> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i];
        require(v == std::floor(v) && std::isfinite(v), ErrorKind::MissingArtifact,
                "corrupted tensor file " + name + ": non-integer entry");
        out[i] = static_cast<int>(v);
    }
    return out;
}

}  // namespace

std::uint64_t dataset_digest(const SyntheticDataset& ds) {
    std::uint64_t h = digest(ds.tokens);
    h = digest(ints_to_tensor(ds.labels), h);
    return digest(ints_to_tensor(ds.domains), h);
}

void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create dataset directory " + dir.string());
    save_tensor(dir / "tokens.lrt", ds.tokens);
    save_tensor(dir / "labels.lrt", ints_to_tensor(ds.labels));
    save_tensor(dir / "domains.lrt", ints_to_tensor(ds.domains));
    save_tensor(dir / "js.lrt", ds.j_s);
    save_tensor(dir / "jc.lrt", ds.j_c);
    nlohmann::json meta;
    meta["scm"] = to_json(ds.config);
    meta["split"] = split_name(ds.split);
    meta["rho"] = ds.rho_used;
    meta["n"] = ds.size();
    meta["digest"] = hex_digest(dataset_digest(ds));
    write_json_file(dir / "meta.json", meta);
}

SyntheticDataset load_dataset(const std::filesystem::path& dir) {
    require(std::filesystem::is_directory(dir), ErrorKind::MissingArtifact,
            "dataset directory " + dir.string() + " does not exist");
    const nlohmann::json meta = read_json_file(dir / "meta.json");
    SyntheticDataset ds;
    ds.config = scm_config_from_json(meta.at("scm"));
    ds.split = meta.value("split", "train") == "test" ? Split::Test : Split::Train;
    ds.rho_used = meta.value("rho", ds.config.rho);
    ds.tokens = load_tensor(dir / "tokens.lrt");
    ds.labels = tensor_to_ints(load_tensor(dir / "labels.lrt"), (dir / "labels.lrt").string());
    ds.domains = tensor_to_ints(load_tensor(dir / "domains.lrt"), (dir / "domains.lrt").string());
    ds.j_s = load_tensor(dir / "js.lrt");
    ds.j_c = load_tensor(dir / "jc.lrt");
    const std::size_t n = ds.labels.size();
    require(ds.tokens.ndim() == 3 && ds.tokens.extent(0) == n && ds.domains.size() == n, ErrorKind::MissingArtifact,
            "corrupted dataset " + dir.string() + ": inconsistent sample counts");
    require(ds.tokens.extent(2) == ds.config.d && ds.tokens.extent(1) == ds.config.n_tokens + 1,
            ErrorKind::MissingArtifact, "corrupted dataset " + dir.string() + ": token shape disagrees with meta.json");
    return ds;
}

}  // namespace lror::scm
