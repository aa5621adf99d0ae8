// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/experiment.hpp"

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "lror/error.hpp"

namespace lror {

void ExperimentConfig::validate() const {
    scm.validate();
    encoder.validate();
    train.validate();
    require(scm.d == encoder.d, ErrorKind::Config,
            "scm.d = " + std::to_string(scm.d) + " differs from encoder.d = " + std::to_string(encoder.d));
    require(scm.n_tokens == encoder.n_tokens, ErrorKind::Config,
            "scm.n_tokens = " + std::to_string(scm.n_tokens) + " differs from encoder.n_tokens = " +
                std::to_string(encoder.n_tokens));
    require(test_rho >= 0.0 && test_rho <= 1.0, ErrorKind::Config, "test_rho must lie in [0, 1]");
    require(n_train >= 1 && n_test >= 1, ErrorKind::Config, "n_train and n_test must be positive");
    require(!output_dir.empty(), ErrorKind::Config, "output_dir must be set");
    ablate_head.validate();
    if (sweep_encoder) {
        sweep_encoder->validate();
        require(sweep_encoder->d == scm.d && sweep_encoder->n_tokens == scm.n_tokens, ErrorKind::Config,
                "sweep encoder dimensions differ from the scm");
    }
    if (sweep_train) {
        sweep_train->validate();
    }
}

namespace {

template <typename T>
void read_field(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string(key) + ": " + e.what());
    }
}

void only_keys(const Json& j, const std::set<std::string>& keys, const std::string& where) {
    require(j.is_object(), ErrorKind::Config, where + " must be a JSON object");
    for (const auto& item : j.items()) {
        require(keys.count(item.key()) == 1, ErrorKind::Config, "unknown key '" + item.key() + "' in " + where);
    }
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
    only_keys(j, {"scm", "encoder", "train", "test_rho", "n_train", "n_test", "output_dir", "probe", "ablate", "sweep",
                  "robust"},
              "experiment config");
    ExperimentConfig c;
    if (j.contains("scm")) c.scm = scm_config_from_json(j.at("scm"));
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    read_field(j, "test_rho", c.test_rho);
    read_field(j, "n_train", c.n_train);
    read_field(j, "n_test", c.n_test);
    std::string out = c.output_dir.string();
    read_field(j, "output_dir", out);
    c.output_dir = out;
    c.ablate_head = c.train;
    if (j.contains("probe")) {
        const Json& p = j.at("probe");
        only_keys(p, {"steps", "learning_rate"}, "probe");
        read_field(p, "steps", c.probe.steps);
        read_field(p, "learning_rate", c.probe.learning_rate);
    }
    if (j.contains("ablate")) {
        const Json& a = j.at("ablate");
        only_keys(a, {"head_train"}, "ablate");
        if (a.contains("head_train")) c.ablate_head = train_config_from_json(a.at("head_train"));
    }
    if (j.contains("sweep")) {
        const Json& s = j.at("sweep");
        only_keys(s, {"ranks", "layer_counts", "encoder", "train"}, "sweep");
        read_field(s, "ranks", c.sweep_grid.ranks);
        read_field(s, "layer_counts", c.sweep_grid.layer_counts);
        if (s.contains("encoder")) c.sweep_encoder = encoder_config_from_json(s.at("encoder"));
        if (s.contains("train")) c.sweep_train = train_config_from_json(s.at("train"));
    }
    if (j.contains("robust")) {
        const Json& r = j.at("robust");
        only_keys(r, {"sigmas", "seed"}, "robust");
        read_field(r, "sigmas", c.robust_sigmas);
        read_field(r, "seed", c.robust_seed);
    }
    return c;
}

Json to_json(const ExperimentConfig& c) {
    Json j{{"scm", to_json(c.scm)},
           {"encoder", to_json(c.encoder)},
           {"train", to_json(c.train)},
           {"test_rho", c.test_rho},
           {"n_train", c.n_train},
           {"n_test", c.n_test},
           {"output_dir", c.output_dir.string()},
           {"probe", Json{{"steps", c.probe.steps}, {"learning_rate", c.probe.learning_rate}}},
           {"ablate", Json{{"head_train", to_json(c.ablate_head)}}},
           {"robust", Json{{"sigmas", c.robust_sigmas}, {"seed", c.robust_seed}}}};
    Json sweep{{"ranks", c.sweep_grid.ranks}, {"layer_counts", c.sweep_grid.layer_counts}};
    if (c.sweep_encoder) sweep["encoder"] = to_json(*c.sweep_encoder);
    if (c.sweep_train) sweep["train"] = to_json(*c.sweep_train);
    j["sweep"] = sweep;
    return j;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::Config, "config file " + path.string() + " does not exist");
    Json j;
    try {
        j = read_json_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
    }
    return experiment_from_json(j);
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) {
        cfg.scm.seed = *o.seed;
        cfg.encoder.seed = *o.seed;
        cfg.train.seed = *o.seed;
        cfg.ablate_head.seed = *o.seed;
        if (cfg.sweep_encoder) cfg.sweep_encoder->seed = *o.seed;
        if (cfg.sweep_train) cfg.sweep_train->seed = *o.seed;
    }
    if (o.out) cfg.output_dir = *o.out;
    if (o.steps) cfg.train.steps = *o.steps;
    if (o.n_train) cfg.n_train = *o.n_train;
    if (o.n_test) cfg.n_test = *o.n_test;
}

std::filesystem::path train_data_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "data" / "train"; }
std::filesystem::path test_data_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "data" / "test"; }
std::filesystem::path checkpoint_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "checkpoint"; }

namespace {

void ensure_output_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    require(!ec && std::filesystem::is_directory(cfg.output_dir), ErrorKind::Io,
            "cannot create output directory " + cfg.output_dir.string());
}

std::string fmt(const std::optional<double>& v) {
    if (!v) {
        return "   n/a";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%6.4f", *v);
    return buf;
}

std::string fmt(double v) { return fmt(std::optional<double>(v)); }

Json report_envelope(const ExperimentConfig& cfg, const char* command) {
    return Json{{"command", command}, {"config", to_json(cfg)}};
}

enc::EncoderState load_trained(const ExperimentConfig& cfg) {
    enc::EncoderState s = enc::load_checkpoint(checkpoint_dir(cfg));
    require(s.config.d == cfg.scm.d && s.config.n_tokens == cfg.scm.n_tokens, ErrorKind::Config,
            "checkpoint dimensions differ from the data config");
    return s;
}

void print_metrics_row(std::ostream& out, const std::string& name, const metrics::MetricsReport& r) {
    out << std::left << std::setw(6) << name << std::right << "  " << fmt(r.auc) << "  " << fmt(r.ap) << "  "
        << fmt(r.eer) << "  " << fmt(r.accuracy) << "\n";
}

}  // namespace

void cmd_gen(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    ensure_output_dir(cfg);
    const scm::SyntheticDataset tr = scm::sample_dataset(cfg.scm, cfg.n_train, scm::Split::Train, cfg.test_rho);
    const scm::SyntheticDataset te = scm::sample_dataset(cfg.scm, cfg.n_test, scm::Split::Test, cfg.test_rho);
    scm::save_dataset(train_data_dir(cfg), tr);
    scm::save_dataset(test_data_dir(cfg), te);
    Json rep = report_envelope(cfg, "gen");
    rep["train"] = Json{{"n", tr.size()}, {"digest", hex_digest(scm::dataset_digest(tr))}};
    rep["test"] = Json{{"n", te.size()}, {"digest", hex_digest(scm::dataset_digest(te))}};
    write_json_file(cfg.output_dir / "gen_report.json", rep);
    out << "train " << shape_string(tr.tokens.shape()) << " digest " << hex_digest(scm::dataset_digest(tr)) << "\n";
    out << "test  " << shape_string(te.tokens.shape()) << " digest " << hex_digest(scm::dataset_digest(te)) << "\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    ensure_output_dir(cfg);
    const scm::SyntheticDataset tr = scm::load_dataset(train_data_dir(cfg));
    const scm::SyntheticDataset te = scm::load_dataset(test_data_dir(cfg));
    enc::EncoderState state = enc::init_frozen_encoder(cfg.encoder);
    train::TrainOptions opt;
    opt.eval_set = &te;
    const train::RunReport rep = train::train(state, tr, cfg.train, opt);
    enc::save_checkpoint(checkpoint_dir(cfg), state);
    Json j = report_envelope(cfg, "train");
    j["run"] = to_json(rep);
    write_json_file(cfg.output_dir / "train_report.json", j);
    out << "steps " << rep.loss.size() << "  loss " << fmt(rep.loss.front()) << " -> " << fmt(rep.loss.back())
        << "  trainable params " << rep.trainable_params << "\n";
    if (!rep.evals.empty()) {
        const auto& e = rep.evals.back().report;
        out << "test  AUC " << fmt(e.auc) << "  AP " << fmt(e.ap) << "  EER " << fmt(e.eer) << "\n";
    }
    for (const auto& a : rep.angles) {
        out << "layer " << a.layer << "  max principal angle to reference " << std::fixed << std::setprecision(2)
            << a.max_angle * 180.0 / 3.14159265358979323846 << " deg\n";
        out.unsetf(std::ios::fixed);
    }
    out << "wall " << std::fixed << std::setprecision(1) << rep.wall_seconds << " s\n";
    out.unsetf(std::ios::fixed);
}

void cmd_eval(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    enc::EncoderState state = load_trained(cfg);
    const scm::SyntheticDataset te = scm::load_dataset(test_data_dir(cfg));
    const metrics::MetricsReport r = train::evaluate(state, te);
    Json j = report_envelope(cfg, "eval");
    j["metrics"] = to_json(r);
    write_json_file(cfg.output_dir / "eval_report.json", j);
    out << "mode  " << "   AUC      AP     EER     ACC\n";
    print_metrics_row(out, enc::mode_name(state.mode), r);
}

void cmd_ablate(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    const enc::EncoderState state = load_trained(cfg);
    const scm::SyntheticDataset tr = scm::load_dataset(train_data_dir(cfg));
    const scm::SyntheticDataset te = scm::load_dataset(test_data_dir(cfg));
    const train::Ablation a = train::ablate_subspace(state, tr, te, cfg.ablate_head);
    Json j = report_envelope(cfg, "ablate");
    j["ablation"] = to_json(a);
    write_json_file(cfg.output_dir / "ablate_report.json", j);
    out << "arm   " << "   AUC      AP     EER     ACC\n";
    print_metrics_row(out, "SP", a.sp);
    print_metrics_row(out, "CA", a.ca);
    print_metrics_row(out, "OFF", a.off);
}

void cmd_sweep(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    ensure_output_dir(cfg);
    train::SweepSetup setup;
    setup.scm = cfg.scm;
    setup.encoder = cfg.sweep_encoder.value_or(cfg.encoder);
    setup.train = cfg.sweep_train.value_or(cfg.train);
    setup.n_train = cfg.n_train;
    setup.n_test = cfg.n_test;
    setup.test_rho = cfg.test_rho;
    const auto cells = train::sweep(cfg.sweep_grid, setup);
    Json j = report_envelope(cfg, "sweep");
    j["cells"] = to_json(cells);
    write_json_file(cfg.output_dir / "sweep_report.json", j);
    out << "test AUC by rank (rows) and intervened layers (columns)\n";
    out << "rank ";
    for (std::size_t k : cfg.sweep_grid.layer_counts) {
        out << "  layers=" << std::setw(2) << k;
    }
    out << "\n";
    std::size_t i = 0;
    for (std::size_t r : cfg.sweep_grid.ranks) {
        out << std::setw(4) << r << " ";
        for (std::size_t k = 0; k < cfg.sweep_grid.layer_counts.size(); ++k, ++i) {
            const auto& c = cells[i];
            out << "     " << (c.report ? fmt(c.report->auc) : std::string("  fail"));
        }
        out << "\n";
    }
    for (const auto& c : cells) {
        if (!c.error.empty()) {
            out << "cell r=" << c.rank << " layers=" << c.layers << ": " << c.error << "\n";
        }
    }
}

void cmd_probe(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    enc::EncoderState state = load_trained(cfg);
    const scm::SyntheticDataset te = scm::load_dataset(test_data_dir(cfg));
    const train::ProbeResult p = train::probe_invariance(state, te, cfg.probe);
    Json j = report_envelope(cfg, "probe");
    j["probe"] = to_json(p);
    write_json_file(cfg.output_dir / "probe_report.json", j);
    out << "domain probe  raw " << fmt(p.raw_domain_acc) << "  complement " << fmt(p.complement_domain_acc)
        << "  chance " << fmt(p.chance) << "\n";
    out << "label probe   raw AUC " << fmt(p.raw_label_auc) << "  complement AUC " << fmt(p.complement_label_auc)
        << "\n";
}

void cmd_robust(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    enc::EncoderState state = load_trained(cfg);
    const scm::SyntheticDataset te = scm::load_dataset(test_data_dir(cfg));
    const auto pts = train::noise_robustness(state, te, cfg.robust_sigmas, cfg.robust_seed);
    Json j = report_envelope(cfg, "robust");
    j["points"] = to_json(pts);
    write_json_file(cfg.output_dir / "robust_report.json", j);
    out << " sigma     AUC\n";
    for (const auto& p : pts) {
        out << std::setw(6) << p.sigma << "  " << fmt(p.report.auc) << "\n";
    }
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Dimension:
        case ErrorKind::Io:
            return 2;
        case ErrorKind::Numeric:
        case ErrorKind::DegenerateBasis:
        case ErrorKind::DegenerateStatistics:
            return 3;
        case ErrorKind::MissingArtifact:
            return 4;
        default:
            return 1;
    }
}

}  // namespace lror
