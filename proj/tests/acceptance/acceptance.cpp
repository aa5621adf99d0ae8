// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one line per criterion, exit status 1 if any fails.
// Thresholds here are fixed; when a criterion is missed the line says by
// how much.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "lror/encoder.hpp"
#include "lror/experiment.hpp"
#include "lror/json_io.hpp"
#include "lror/metrics.hpp"
#include "lror/oracle.hpp"
#include "lror/ortho.hpp"
#include "lror/rng.hpp"
#include "lror/scm.hpp"
#include "lror/trainer.hpp"

namespace fs = std::filesystem;
using namespace lror;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int prec = 4) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << v;
    return ss.str();
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// 1. Orthonormality after every step of the default run, projector algebra.

struct DefaultRun {
    ExperimentConfig cfg;
    scm::SyntheticDataset train_ds;
    scm::SyntheticDataset test_ds;
    enc::EncoderState state;
    train::RunReport report;
};

std::optional<DefaultRun> g_default;

Outcome orthonormality() {
    double worst_projector = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(derive_seed(0xacc1, s));
        const std::size_t d = 4 + rng.below(61);
        const std::size_t r = 1 + rng.below(std::min<std::size_t>(d - 1, 16));
        const auto basis = ortho::qr_orthonormalize(rng.gaussian({d, r}, 1.0)).basis;
        const Tensor p = ortho::projector(basis);
        const Tensor c = ortho::complement_projector(basis);
        worst_projector = std::max({worst_projector, max_abs_diff(matmul(p, p), p), max_abs_diff(matmul(c, c), c),
                                    max_abs_diff(matmul(p, c), Tensor({d, d})),
                                    max_abs_diff(add(p, c), Tensor::identity(d))});
    }

    DefaultRun run;
    run.train_ds = scm::sample_dataset(run.cfg.scm, run.cfg.n_train, scm::Split::Train, run.cfg.test_rho);
    run.test_ds = scm::sample_dataset(run.cfg.scm, run.cfg.n_test, scm::Split::Test, run.cfg.test_rho);
    run.state = enc::init_frozen_encoder(run.cfg.encoder);
    train::TrainOptions opt;
    opt.eval_set = &run.test_ds;
    run.report = train::train(run.state, run.train_ds, run.cfg.train, opt);

    double worst_q = 0.0;
    for (const auto& [layer, res] : run.report.orthonormality_residual) worst_q = std::max(worst_q, res);
    const bool steps_ok = run.report.loss.size() == 2000;
    Outcome o;
    o.pass = steps_ok && worst_q < 1e-8 && worst_projector <= 1e-10 &&
             run.report.orthonormality_residual.size() == run.cfg.encoder.intervene_layers.size();
    o.detail = "max ||QtQ-I||_F over " + std::to_string(run.report.loss.size()) + " steps = " + num(worst_q, 3) +
               " (< 1e-8); projector identities max err = " + num(worst_projector, 3) + " (<= 1e-10)";
    g_default = std::move(run);
    return o;
}

// ---------------------------------------------------------------------------
// 2. QR backward against central differences.

Outcome qr_gradient() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(0xacc2, s));
        const Tensor m = rng.gaussian({8, 3}, 1.0);
        const Tensor w = rng.gaussian({8, 3}, 1.0);
        auto f = [&](const Tensor& x) { return frobenius_dot(testing::gram_schmidt_q(x), w); };
        const Tensor numeric = testing::central_difference(f, m, 1e-6);
        const auto qr = ortho::qr_orthonormalize(m);
        const Tensor analytic = ortho::qr_backward(m, qr.basis.q(), qr.r, w);
        worst = std::max(worst, frobenius_norm(sub(analytic, numeric)) / frobenius_norm(numeric));
    }
    const Tensor hand = ortho::qr_backward(Tensor::matrix({{3}, {4}}), Tensor::matrix({{0.6}, {0.8}}),
                                           Tensor::matrix({{5}}), Tensor::matrix({{1}, {1}}));
    const double hand_err = std::max(std::abs(hand.at(0, 0) - 0.032), std::abs(hand.at(1, 0) + 0.024));
    Outcome o;
    o.pass = worst < 1e-5 && hand_err < 1e-12;
    o.detail = "max relative error over 20 matrices = " + num(worst, 3) + " (< 1e-5); hand case (" +
               num(hand.at(0, 0), 6) + ", " + num(hand.at(1, 0), 6) + ")";
    return o;
}

// ---------------------------------------------------------------------------
// 3. Rank structure of generated data.

Outcome rank_structure() {
    std::size_t ok = 0;
    std::string first_bad;
    for (std::uint64_t s = 0; s < 10; ++s) {
        scm::ScmConfig cfg;
        cfg.seed = s;
        cfg.d = 16 + 8 * (s % 4);
        cfg.m_s = 2 + s % 4;
        cfg.m_c = 3 + s % 3;
        cfg.k_domains = 2 + s % 4;
        cfg.n_tokens = 4;
        const auto ds = scm::sample_dataset(cfg, 600, scm::Split::Train, 0.0);
        const std::size_t spurious_rank =
            ortho::numerical_rank(ortho::covariance(scm::spurious_component(ds)), 1e-8);
        const auto an = ortho::anova_decompose(scm::mean_pooled_visual(ds.tokens), ds.domains);
        const std::size_t between_rank = ortho::numerical_rank(an.between, 1e-8);
        if (spurious_rank == cfg.m_s && between_rank <= cfg.k_domains - 1) {
            ++ok;
        } else if (first_bad.empty()) {
            first_bad = "; seed " + std::to_string(s) + ": spurious rank " + std::to_string(spurious_rank) + " vs " +
                        std::to_string(cfg.m_s) + ", between rank " + std::to_string(between_rank) + " vs K-1 " +
                        std::to_string(cfg.k_domains - 1);
        }
    }
    return {ok == 10, std::to_string(ok) + "/10 configs with spurious rank = m_s and between rank <= K-1" + first_bad};
}

// ---------------------------------------------------------------------------
// 4. Subspace recovery in linear mode.

enc::EncoderConfig linear_encoder(std::uint64_t seed) {
    enc::EncoderConfig ec;
    ec.backbone = enc::Backbone::Linear;
    ec.depth = 1;
    ec.intervene_layers = {0};
    ec.seed = seed;
    return ec;
}

train::TrainConfig linear_train(std::uint64_t seed) {
    train::TrainConfig tc;
    tc.steps = 3000;
    tc.learning_rate = 3e-4;
    tc.cosine_decay = false;
    tc.eval_every = 0;
    tc.seed = seed;
    return tc;
}

Outcome subspace_recovery() {
    std::size_t good = 0;
    std::string angles;
    double oracle_angle = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        scm::ScmConfig sc;
        sc.seed = seed;
        const auto tr = scm::sample_dataset(sc, 2000, scm::Split::Train, 0.0);
        enc::EncoderState st = enc::init_frozen_encoder(linear_encoder(seed));
        if (seed == 0) {
            // The reference the threshold was set against.
            const auto ref = scm::layer_spurious_oracle(st, sc, 0, 256, 0x0a11);
            oracle_angle = degrees(ortho::max_principal_angle(ref.basis, scm::spurious_basis(tr)));
        }
        train::TrainOptions opt;
        opt.oracle_pairs = 0;
        train::train(st, tr, linear_train(seed), opt);
        const double a = degrees(ortho::max_principal_angle(st.lror[0].basis(), scm::spurious_basis(tr)));
        good += a < 15.0 ? 1 : 0;
        angles += (angles.empty() ? "" : " ") + num(a, 3);
    }
    return {good >= 8, std::to_string(good) + "/10 seeds under 15 deg (need >= 8); max angles [" + angles +
                           "]; oracle-vs-truth " + num(oracle_angle, 2) + " deg"};
}

// ---------------------------------------------------------------------------
// 5. Subspace/complement ablation on the default run.

Outcome ablation() {
    if (!g_default) return {false, "default run unavailable"};
    const auto& run = *g_default;
    const train::Ablation a = train::ablate_subspace(run.state, run.train_ds, run.test_ds, run.cfg.ablate_head);
    const double sp = a.sp.auc.value_or(-1.0);
    const double ca = a.ca.auc.value_or(-1.0);
    const double off = a.off.auc.value_or(-1.0);
    Outcome o;
    o.pass = sp >= 0.4 && sp <= 0.6 && ca > sp && ca > off && ca - off >= 0.15;
    o.detail = "test AUC SP " + num(sp) + " (in [0.4, 0.6]), CA " + num(ca) + ", OFF " + num(off) + ", CA-OFF " +
               num(ca - off) + " (>= 0.15)";
    return o;
}

// ---------------------------------------------------------------------------
// 6. Invariance probe: two domains with a large mean shift, linear mode.

Outcome invariance_probe() {
    scm::ScmConfig sc;
    sc.k_domains = 2;
    sc.domain_shift = 96.0;
    const auto tr = scm::sample_dataset(sc, 2000, scm::Split::Train, 0.0);
    const auto te = scm::sample_dataset(sc, 1000, scm::Split::Test, 0.0);
    enc::EncoderState st = enc::init_frozen_encoder(linear_encoder(0));
    train::TrainOptions opt;
    opt.oracle_pairs = 0;
    train::train(st, tr, linear_train(0), opt);
    const train::ProbeResult p = train::probe_invariance(st, te);
    Outcome o;
    o.pass = p.raw_domain_acc > 0.9 && p.complement_domain_acc <= p.chance + 0.1 && p.complement_label_auc >= 0.9;
    o.detail = "domain acc raw " + num(p.raw_domain_acc) + " (> 0.9), complement " + num(p.complement_domain_acc) +
               " (<= chance " + num(p.chance) + " + 0.1); label AUC on complement " + num(p.complement_label_auc) +
               " (>= 0.9)";
    return o;
}

// ---------------------------------------------------------------------------
// 7. Rank × layer-count sweep.

Outcome sweep_pattern() {
    train::SweepSetup setup;
    setup.scm.m_s = 6;
    setup.encoder.backbone = enc::Backbone::Linear;
    setup.encoder.depth = 4;
    setup.train.steps = 2000;
    setup.train.learning_rate = 3e-4;
    setup.train.cosine_decay = false;
    setup.train.eval_every = 0;
    setup.n_train = 2000;
    setup.n_test = 1000;
    const train::SweepGrid grid;  // ranks {4, 8, 12} × layers {2, 3, 4}
    const auto cells = train::sweep(grid, setup);

    std::map<std::pair<std::size_t, std::size_t>, double> auc;
    std::string table;
    for (const auto& c : cells) {
        if (!c.report || !c.report->auc) return {false, "cell r=" + std::to_string(c.rank) + " failed: " + c.error};
        auc[{c.rank, c.layers}] = *c.report->auc;
        table += " r" + std::to_string(c.rank) + "k" + std::to_string(c.layers) + "=" + num(*c.report->auc, 3);
    }
    // Within every layer count, each r < m_s cell is below each r >= m_s cell.
    bool small_rank_worse = true;
    for (std::size_t k : grid.layer_counts) {
        for (std::size_t lo : grid.ranks) {
            for (std::size_t hi : grid.ranks) {
                if (lo < setup.scm.m_s && hi >= setup.scm.m_s && auc[{lo, k}] >= auc[{hi, k}]) small_rank_worse = false;
            }
        }
    }
    const double corner = auc[{grid.ranks.back(), grid.layer_counts.back()}];
    double best_other = 0.0;
    for (const auto& [key, v] : auc) {
        if (key != std::make_pair(grid.ranks.back(), grid.layer_counts.back())) best_other = std::max(best_other, v);
    }
    const bool corner_not_dominant = corner <= best_other;
    Outcome o;
    o.pass = small_rank_worse && corner_not_dominant;
    o.detail = std::string("r<m_s below r>=m_s: ") + (small_rank_worse ? "yes" : "no") +
               "; largest corner " + num(corner) + " vs best other " + num(best_other) +
               (corner_not_dominant ? " (not dominant)" : " (dominates)") + ";" + table;
    return o;
}

// ---------------------------------------------------------------------------
// 8. Metrics against brute-force oracles.

Outcome metric_oracles() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto set = testing::random_score_set(derive_seed(0xacc8, s));
        const metrics::ScoredLabels sl{set.scores, set.labels};
        worst = std::max({worst, std::abs(metrics::auc(sl) - testing::oracle_auc(set.scores, set.labels)),
                          std::abs(metrics::average_precision(sl) - testing::oracle_ap(set.scores, set.labels)),
                          std::abs(metrics::eer(sl) - testing::oracle_eer(set.scores, set.labels))});
    }
    bool hand = true;
    {
        const std::vector<double> s{0.9, 0.1};
        const std::vector<int> y{1, 0};
        hand = hand && metrics::auc({s, y}) == 1.0;
    }
    {
        const std::vector<double> s(5, 0.3);
        const std::vector<int> y{1, 0, 1, 0, 0};
        hand = hand && metrics::auc({s, y}) == 0.5;
    }
    {
        const std::vector<double> s{0.8, 0.6, 0.4};
        const std::vector<int> y{1, 0, 1};
        hand = hand && metrics::auc({s, y}) == 0.5;
    }
    {
        const std::vector<double> s{0.9, 0.7, 0.3, 0.1};
        const std::vector<int> y{1, 1, 0, 0};
        hand = hand && metrics::average_precision({s, y}) == 1.0 && metrics::eer({s, y}) == 0.0;
    }
    {
        const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
        const std::vector<int> y{1, 0, 1, 0};
        hand = hand && metrics::eer({s, y}) == 0.5;
    }
    {
        const std::vector<double> s{0.1, 0.9};
        const std::vector<int> y{1, 0};
        hand = hand && metrics::auc({s, y}) == 0.0 && metrics::average_precision({s, y}) == 0.5;
    }
    return {worst <= 1e-12 && hand, "max |metric - oracle| over 200 tied sets = " + num(worst, 3) +
                                        " (<= 1e-12); hand examples " + (hand ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 9. Trainable parameter count.

Outcome parameter_count() {
    // A state shaped like the large configuration, without frozen weights.
    enc::EncoderState big;
    big.config.d = 1024;
    big.config.rank = 32;
    big.config.depth = 12;
    big.config.intervene_layers.clear();
    for (std::size_t l = 0; l < 12; ++l) {
        big.config.intervene_layers.push_back(l);
        big.lror.emplace_back(l, Tensor({1024, 32}));
    }
    const std::size_t large = enc::trainable_params_count(big);

    bool small_ok = true;
    for (std::size_t layers = 0; layers <= 3; ++layers) {
        enc::EncoderConfig ec;
        ec.intervene_layers = train::last_layers(ec.depth, std::max<std::size_t>(layers, 1));
        if (layers == 0) ec.intervene_layers.clear();
        const enc::EncoderState st = enc::init_frozen_encoder(ec);
        small_ok = small_ok && enc::trainable_params_count(st) == enc::lror_param_formula(ec.d, ec.rank, layers);
    }
    const bool default_ok = enc::lror_param_formula(64, 8, 3) == 1666;
    return {large == 395266 && large == enc::lror_param_formula(1024, 32, 12) && small_ok && default_ok,
            "D=1024 r=32 12 layers -> " + std::to_string(large) +
                " (formula 395266; reference figure 0.43M differs, see README); desk configs match formula: " +
                (small_ok && default_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. Bit-identical reruns of every CLI command.

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

Outcome determinism() {
    const char* bin = std::getenv("LROR_BIN");
    if (bin == nullptr) return {false, "LROR_BIN not set"};
    const fs::path dir = fs::temp_directory_path() / "lror_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);

    ExperimentConfig cfg;
    cfg.scm.d = 32;
    cfg.scm.n_tokens = 8;
    cfg.encoder.d = 32;
    cfg.encoder.n_tokens = 8;
    cfg.encoder.depth = 3;
    cfg.encoder.intervene_layers = {1, 2};
    cfg.train.steps = 40;
    cfg.train.eval_every = 20;
    cfg.ablate_head = cfg.train;
    cfg.n_train = 256;
    cfg.n_test = 128;
    cfg.probe.steps = 50;
    cfg.sweep_grid.ranks = {2, 4};
    cfg.sweep_grid.layer_counts = {1, 2};
    cfg.output_dir = dir / "out";
    write_json_file(dir / "config.json", to_json(cfg));

    const std::vector<std::string> commands{"gen", "train", "eval", "ablate", "probe", "robust", "sweep"};
    auto run_all = [&]() -> std::string {
        for (const auto& c : commands) {
            const std::string line = std::string(bin) + " " + c + " --config " + (dir / "config.json").string() +
                                     " > " + (dir / "stdout.txt").string() + " 2>&1";
            if (std::system(line.c_str()) != 0) return c;
        }
        return {};
    };
    if (auto bad = run_all(); !bad.empty()) return {false, "command '" + bad + "' failed on first run"};
    const auto first = snapshot(cfg.output_dir);
    fs::remove_all(cfg.output_dir);
    if (auto bad = run_all(); !bad.empty()) return {false, "command '" + bad + "' failed on second run"};
    const auto second = snapshot(cfg.output_dir);

    std::string differing;
    for (const auto& [name, bytes] : first) {
        auto it = second.find(name);
        if (it == second.end() || it->second != bytes) differing += " " + name;
    }
    const bool same = differing.empty() && first.size() == second.size();
    fs::remove_all(dir);
    return {same, std::to_string(first.size()) + " report/checkpoint/data files compared across " +
                      std::to_string(commands.size()) + " commands: " +
                      (same ? "bit-identical" : "differ:" + differing)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"orthonormality", orthonormality},   {"qr-gradient", qr_gradient},
        {"rank-structure", rank_structure},   {"subspace-recovery", subspace_recovery},
        {"ablation-pattern", ablation},       {"invariance-probe", invariance_probe},
        {"sweep-pattern", sweep_pattern},     {"metric-oracles", metric_oracles},
        {"parameter-count", parameter_count}, {"determinism", determinism},
    };
    const auto start = std::chrono::steady_clock::now();
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += o.pass ? 0 : 1;
        std::printf("%s %2zu %-18s %6.1fs  %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d of %zu criteria passed in %.1fs\n", static_cast<int>(criteria.size()) - failures, criteria.size(),
                total);
    return failures == 0 ? 0 : 1;
}
