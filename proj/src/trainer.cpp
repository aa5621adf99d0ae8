// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "lror/error.hpp"
#include "lror/oracle.hpp"
#include "lror/rng.hpp"

namespace lror::train {

void TrainConfig::validate() const {
    require(steps >= 1, ErrorKind::Config, "steps must be at least 1");
    require(batch_size >= 2, ErrorKind::Config, "batch_size must be at least 2");
    require(learning_rate > 0.0, ErrorKind::Config, "learning_rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::Config,
            "adam betas must lie in [0, 1)");
    require(eps > 0.0 && weight_decay >= 0.0 && jitter_scale > 0.0, ErrorKind::Config,
            "eps and jitter_scale must be positive, weight_decay non-negative");
}

namespace {

struct Adam {
    Tensor m;
    Tensor v;

    void step(Tensor& param, const Tensor& grad, std::size_t t, const TrainConfig& cfg, double lr, double decay) {
        if (m.size() == 0) {
            m = Tensor(param.shape());
            v = Tensor(param.shape());
        }
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            param[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + decay * param[i]);
        }
    }
};

// Epoch-wise shuffled mini-batches; a short tail is dropped.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed) : rng_(seed), order_(n), batch_(batch) {
        std::iota(order_.begin(), order_.end(), 0);
        reshuffle();
    }

    std::vector<std::size_t> next() {
        if (pos_ + batch_ > order_.size()) {
            reshuffle();
        }
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
        pos_ += batch_;
        ++batch_in_epoch_;
        return out;
    }

    std::string position() const {
        return "epoch " + std::to_string(epoch_) + ", batch " + std::to_string(batch_in_epoch_ - 1);
    }

private:
    void reshuffle() {
        std::shuffle(order_.begin(), order_.end(), rng_.engine());
        pos_ = 0;
        batch_in_epoch_ = 0;
        ++epoch_;
    }

    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t pos_ = 0;
    std::size_t epoch_ = 0;
    std::size_t batch_in_epoch_ = 0;
};

void check_dims(const enc::EncoderState& state, const scm::SyntheticDataset& ds) {
    require(ds.tokens.ndim() == 3 && ds.tokens.extent(2) == state.config.d &&
                ds.tokens.extent(1) == state.config.tokens(),
            ErrorKind::Dimension,
            "dataset tokens " + shape_string(ds.tokens.shape()) + " do not match the encoder (D = " +
                std::to_string(state.config.d) + ", N_p = " + std::to_string(state.config.n_tokens) + ")");
    require(ds.size() >= 1, ErrorKind::Config, "empty dataset");
}

std::vector<int> pick(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out[i] = v[idx[i]];
    }
    return out;
}

Tensor pick_rows(const Tensor& m, const std::vector<std::size_t>& idx, std::size_t rows_per_item) {
    const std::size_t w = m.cols() * rows_per_item;
    Tensor out({idx.size() * rows_per_item, m.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(m.data() + idx[i] * w, w, out.data() + i * w);
    }
    return out;
}

// Re-orthonormalizes every M after an update; a rank-deficient M gets one
// round of jitter. Returns the largest residual per layer.
void rebuild_bases(enc::EncoderState& state, const TrainConfig& cfg, RunReport& report, Rng& jitter_rng) {
    for (std::size_t i = 0; i < state.lror.size(); ++i) {
        enc::LrorLayer& l = state.lror[i];
        try {
            l.refresh();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateBasis) {
                throw;
            }
            Tensor m = l.m();
            for (double& v : m.values()) {
                v += jitter_rng.normal(0.0, cfg.jitter_scale);
            }
            l.set_m(std::move(m));
            ++report.jitter_events;
            l.refresh();
        }
        auto& slot = report.orthonormality_residual[i].second;
        slot = std::max(slot, ortho::orthonormality_residual(l.basis().q()));
    }
}

std::vector<LayerAngles> final_angles(const enc::EncoderState& state, const scm::ScmConfig& data_cfg,
                                      std::size_t pairs) {
    std::vector<LayerAngles> out;
    if (pairs == 0) {
        return out;
    }
    for (const enc::LrorLayer& l : state.lror) {
        const scm::LayerOracle ref = scm::layer_spurious_oracle(state, data_cfg, l.layer(), pairs, 0x0a11);
        LayerAngles a;
        a.layer = l.layer();
        a.angles = ortho::principal_angles(l.basis(), ref.basis);
        a.max_angle = a.angles.empty() ? 0.0 : a.angles.back();
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace

RunReport train(enc::EncoderState& state, const scm::SyntheticDataset& train_ds, const TrainConfig& cfg,
                const TrainOptions& options) {
    cfg.validate();
    check_dims(state, train_ds);
    const auto started = std::chrono::steady_clock::now();
    RunReport report;
    report.config = cfg;
    report.encoder = state.config;
    report.mode = state.mode;
    report.trainable_params = enc::trainable_params_count(state);
    report.frozen_digest_before = hex_digest(enc::frozen_digest(state.frozen));
    for (const enc::LrorLayer& l : state.lror) {
        report.orthonormality_residual.emplace_back(l.layer(), 0.0);
    }

    const std::size_t n = train_ds.size();
    const std::size_t t = state.config.tokens();
    const std::size_t batch = std::min(cfg.batch_size, n);
    BatchStream stream(n, batch, derive_seed(cfg.seed, 0xba7c));
    Rng jitter_rng(derive_seed(cfg.seed, 0x717));

    // Nothing below the head changes when the bases are frozen or unused, so
    // the final-norm features are computed once. Otherwise the frozen prefix
    // up to the first intervened layer is cached.
    const bool head_only = !state.bases_trainable() || state.mode == enc::Mode::OFF || state.lror.empty();
    Tensor cache;
    std::size_t start = 0;
    if (head_only) {
        cache = enc::forward(state, train_ds.tokens).features;
    } else {
        start = state.first_intervened();
        cache = enc::run_prefix(state, enc::embed(state, train_ds.tokens), n, start);
    }

    std::vector<Adam> m_opt(state.lror.size());
    Adam w_opt;
    Adam b_opt;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const std::vector<std::size_t> idx = stream.next();
        const std::vector<int> labels = pick(train_ds.labels, idx);
        const double lr = cfg.cosine_decay ? cfg.learning_rate * 0.5 *
                                                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) /
                                                                 static_cast<double>(cfg.steps)))
                                           : cfg.learning_rate;
        double loss = 0.0;
        for (int attempt = 0;; ++attempt) {
            try {
                ad::Tape tape;
                enc::Graph g;
                if (head_only) {
                    const ad::Var f = tape.constant(pick_rows(cache, idx, 1));
                    g.head_w = tape.parameter(state.head_w);
                    g.head_b = tape.parameter(state.head_b);
                    g.logits = ad::add_row_bias(ad::matmul(f, g.head_w), g.head_b);
                } else {
                    enc::GraphOptions opt;
                    opt.trainable = true;
                    g = enc::build_forward(tape, state, pick_rows(cache, idx, t), batch, start, opt);
                }
                const ad::Var l = ad::cross_entropy_logits(g.logits, labels);
                loss = l.value().item();
                tape.backward(l);
                for (std::size_t i = 0; i < g.m.size(); ++i) {
                    const Tensor* gm = tape.grad(g.m[i]);
                    if (gm != nullptr) {
                        Tensor m = state.lror[i].m();
                        m_opt[i].step(m, *gm, step, cfg, lr, 0.0);
                        state.lror[i].set_m(std::move(m));
                    }
                }
                if (const Tensor* gw = tape.grad(g.head_w)) {
                    w_opt.step(state.head_w, *gw, step, cfg, lr, cfg.weight_decay);
                }
                if (const Tensor* gb = tape.grad(g.head_b)) {
                    b_opt.step(state.head_b, *gb, step, cfg, lr, 0.0);
                }
                break;
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Numeric) {
                    fail(ErrorKind::Numeric, "non-finite loss at step " + std::to_string(step) + " (" +
                                                 stream.position() + "): " + e.what());
                }
                if (e.kind() != ErrorKind::DegenerateBasis || attempt > 0) {
                    throw;
                }
                // Jitter the rank-deficient M and retry the step once.
                rebuild_bases(state, cfg, report, jitter_rng);
            }
        }
        if (!std::isfinite(loss)) {
            fail(ErrorKind::Numeric, "non-finite loss at step " + std::to_string(step) + " (" + stream.position() + ")");
        }
        report.loss.push_back(loss);
        rebuild_bases(state, cfg, report, jitter_rng);
        const bool last = step == cfg.steps;
        if (options.eval_set != nullptr && (last || (cfg.eval_every > 0 && step % cfg.eval_every == 0))) {
            report.evals.push_back({step, evaluate(state, *options.eval_set)});
        }
    }
    report.angles = final_angles(state, train_ds.config, options.oracle_pairs);
    report.frozen_digest_after = hex_digest(enc::frozen_digest(state.frozen));
    require(report.frozen_digest_after == report.frozen_digest_before, ErrorKind::Consistency,
            "frozen weights changed during training");
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

std::vector<double> predict(enc::EncoderState& state, const Tensor& tokens) {
    const Tensor logits = enc::forward(state, tokens).logits;
    std::vector<double> p(logits.rows());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = enc::positive_probability(logits.at(i, 0), logits.at(i, 1));
    }
    return p;
}

metrics::MetricsReport evaluate(enc::EncoderState& state, const scm::SyntheticDataset& ds) {
    check_dims(state, ds);
    const std::vector<double> p = predict(state, ds.tokens);
    return metrics::summarize({p, ds.labels});
}

Ablation ablate_subspace(const enc::EncoderState& trained, const scm::SyntheticDataset& train_ds,
                         const scm::SyntheticDataset& test_ds, const TrainConfig& head_cfg) {
    auto arm = [&](enc::Mode mode) {
        enc::EncoderState s = trained;
        s.mode = mode;
        s.freeze_bases = true;
        s.head_w.fill(0.0);
        s.head_b.fill(0.0);
        TrainOptions opt;
        opt.oracle_pairs = 0;
        train(s, train_ds, head_cfg, opt);
        return evaluate(s, test_ds);
    };
    Ablation a;
    a.sp = arm(enc::Mode::SP);
    a.ca = arm(enc::Mode::CA);
    a.off = arm(enc::Mode::OFF);
    return a;
}

namespace {

struct Standardized {
    Tensor train;
    Tensor eval;
};

Standardized split_standardize(const Tensor& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t n_train = (n + 1) / 2;
    Standardized s{Tensor({n_train, d}), Tensor({n - n_train, d})};
    for (std::size_t i = 0; i < n; ++i) {
        Tensor& dst = i % 2 == 0 ? s.train : s.eval;
        std::copy_n(x.row(i).data(), d, dst.row(i / 2).data());
    }
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) {
            mean += s.train.at(i, c);
        }
        mean /= static_cast<double>(n_train);
        double var = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) {
            const double z = s.train.at(i, c) - mean;
            var += z * z;
        }
        const double sd = std::sqrt(var / static_cast<double>(n_train));
        const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
        for (Tensor* m : {&s.train, &s.eval}) {
            for (std::size_t i = 0; i < m->rows(); ++i) {
                m->at(i, c) = (m->at(i, c) - mean) * inv;
            }
        }
    }
    return s;
}

// Multinomial logistic regression, full batch; returns eval-half logits.
Tensor fit_probe(const Standardized& x, const std::vector<int>& train_y, std::size_t classes, const ProbeConfig& cfg) {
    const std::size_t d = x.train.cols();
    Tensor w({d, classes});
    Tensor b({classes});
    TrainConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    Adam wo;
    Adam bo;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        ad::Tape tape;
        const ad::Var xw = tape.constant(x.train);
        const ad::Var pw = tape.parameter(w);
        const ad::Var pb = tape.parameter(b);
        const ad::Var loss = ad::cross_entropy_logits(ad::add_row_bias(ad::matmul(xw, pw), pb), train_y);
        tape.backward(loss);
        wo.step(w, *tape.grad(pw), step, adam_cfg, adam_cfg.learning_rate, 0.0);
        bo.step(b, *tape.grad(pb), step, adam_cfg, adam_cfg.learning_rate, 0.0);
    }
    Tensor logits = matmul(x.eval, w);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            logits.at(i, c) += b[c];
        }
    }
    return logits;
}

double argmax_accuracy(const Tensor& logits, const std::vector<int>& y) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        hit += best == y[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(logits.rows());
}

double label_auc(const Tensor& logits, const std::vector<int>& y) {
    std::vector<double> p(logits.rows());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = enc::positive_probability(logits.at(i, 0), logits.at(i, 1));
    }
    return metrics::auc({p, y});
}

std::pair<std::vector<int>, std::vector<int>> split_ints(const std::vector<int>& v) {
    std::pair<std::vector<int>, std::vector<int>> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        (i % 2 == 0 ? out.first : out.second).push_back(v[i]);
    }
    return out;
}

}  // namespace

ProbeResult probe_invariance(enc::EncoderState& state, const scm::SyntheticDataset& ds, const ProbeConfig& cfg) {
    check_dims(state, ds);
    const std::size_t k = ds.config.k_domains;
    require(k >= 2, ErrorKind::MetricUndefined, "domain probe undefined with a single domain");
    require(!state.lror.empty(), ErrorKind::Config, "probe needs at least one intervened layer");
    require(ds.size() >= 4, ErrorKind::Config, "probe needs at least four samples");
    require(cfg.steps >= 1 && cfg.learning_rate > 0.0, ErrorKind::Config, "invalid probe budget");

    const std::size_t n = ds.size();
    const Tensor raw = scm::mean_pooled_visual(ds.tokens);
    const enc::ForwardResult fr = enc::forward(state, ds.tokens, true);
    require(!fr.trace.layers.empty(), ErrorKind::Config, "probe needs an active intervention (mode OFF?)");
    const enc::LayerTrace& last = fr.trace.layers.back();
    // Visual rows only: prepend a dummy CLS slot so the pooling helper applies.
    const std::size_t nv = state.config.n_tokens;
    Tensor post({n, nv + 1, state.config.d});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(last.post.data() + i * nv * state.config.d, nv * state.config.d,
                    post.data() + (i * (nv + 1) + 1) * state.config.d);
    }
    const Tensor complement = scm::mean_pooled_visual(post);

    const auto [dom_train, dom_eval] = split_ints(ds.domains);
    const auto [y_train, y_eval] = split_ints(ds.labels);
    const Standardized raw_s = split_standardize(raw);
    const Standardized comp_s = split_standardize(complement);

    ProbeResult r;
    r.layer = last.layer;
    r.raw_domain_acc = argmax_accuracy(fit_probe(raw_s, dom_train, k, cfg), dom_eval);
    r.complement_domain_acc = argmax_accuracy(fit_probe(comp_s, dom_train, k, cfg), dom_eval);
    std::vector<std::size_t> freq(k, 0);
    for (int g : dom_eval) {
        ++freq[static_cast<std::size_t>(g)];
    }
    r.chance = static_cast<double>(*std::max_element(freq.begin(), freq.end())) / static_cast<double>(dom_eval.size());
    r.raw_label_auc = label_auc(fit_probe(raw_s, y_train, 2, cfg), y_eval);
    r.complement_label_auc = label_auc(fit_probe(comp_s, y_train, 2, cfg), y_eval);
    return r;
}

std::vector<std::size_t> last_layers(std::size_t depth, std::size_t k) {
    require(k >= 1 && k <= depth, ErrorKind::Config,
            "cannot intervene on the last " + std::to_string(k) + " of " + std::to_string(depth) + " layers");
    std::vector<std::size_t> out;
    for (std::size_t l = depth - k; l < depth; ++l) {
        out.push_back(l);
    }
    return out;
}

std::size_t worker_threads() {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LROR_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) {
            n = static_cast<std::size_t>(v);
        }
    }
    return n;
}

std::vector<SweepCell> sweep(const SweepGrid& grid, const SweepSetup& setup) {
    require(!grid.ranks.empty() && !grid.layer_counts.empty(), ErrorKind::Config, "empty sweep grid");
    const scm::SyntheticDataset train_ds = scm::sample_dataset(setup.scm, setup.n_train, scm::Split::Train, setup.test_rho);
    const scm::SyntheticDataset test_ds = scm::sample_dataset(setup.scm, setup.n_test, scm::Split::Test, setup.test_rho);

    std::vector<SweepCell> cells;
    for (std::size_t r : grid.ranks) {
        for (std::size_t k : grid.layer_counts) {
            cells.push_back(SweepCell{r, k, std::nullopt, 0.0, {}});
        }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            SweepCell& c = cells[i];
            try {
                enc::EncoderConfig ec = setup.encoder;
                ec.rank = c.rank;
                ec.intervene_layers = last_layers(ec.depth, c.layers);
                enc::EncoderState state = enc::init_frozen_encoder(ec);
                TrainOptions opt;
                opt.oracle_pairs = 0;
                const RunReport rep = train(state, train_ds, setup.train, opt);
                c.final_loss = rep.loss.back();
                c.report = evaluate(state, test_ds);
            } catch (const std::exception& e) {
                c.error = e.what();
            }
        }
    };
    const std::size_t threads = std::min(worker_threads(), cells.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < threads; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (std::thread& th : pool) {
        th.join();
    }
    return cells;
}

std::vector<RobustnessPoint> noise_robustness(enc::EncoderState& state, const scm::SyntheticDataset& ds,
                                              const std::vector<double>& sigmas, std::uint64_t seed) {
    check_dims(state, ds);
    std::vector<RobustnessPoint> out;
    const std::size_t t = state.config.tokens();
    const std::size_t d = state.config.d;
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
        const double sigma = sigmas[s];
        require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::Config, "noise sigma must be non-negative");
        if (sigma == 0.0) {
            out.push_back({sigma, evaluate(state, ds)});
            continue;
        }
        Rng rng(derive_seed(seed, 0x0015e + s));
        scm::SyntheticDataset noisy = ds;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t k = 1; k < t; ++k) {
                double* row = noisy.tokens.data() + (i * t + k) * d;
                for (std::size_t c = 0; c < d; ++c) {
                    row[c] += rng.normal(0.0, sigma);
                }
            }
        }
        out.push_back({sigma, evaluate(state, noisy)});
    }
    return out;
}

}  // namespace lror::train
