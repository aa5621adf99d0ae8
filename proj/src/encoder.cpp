// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

#include "lror/error.hpp"
#include "lror/json_io.hpp"
#include "lror/rng.hpp"

namespace lror::enc {

const char* backbone_name(Backbone b) {
    switch (b) {
        case Backbone::Transformer:
            return "transformer";
        case Backbone::Linear:
            return "linear";
        case Backbone::Identity:
            return "identity";
    }
    return "?";
}

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::CA:
            return "CA";
        case Mode::SP:
            return "SP";
        case Mode::OFF:
            return "OFF";
    }
    return "?";
}

Backbone parse_backbone(const std::string& s) {
    if (s == "transformer") return Backbone::Transformer;
    if (s == "linear") return Backbone::Linear;
    if (s == "identity") return Backbone::Identity;
    fail(ErrorKind::Config, "unknown backbone '" + s + "' (transformer|linear|identity)");
}

Mode parse_mode(const std::string& s) {
    if (s == "CA" || s == "ca") return Mode::CA;
    if (s == "SP" || s == "sp") return Mode::SP;
    if (s == "OFF" || s == "off") return Mode::OFF;
    fail(ErrorKind::Config, "unknown mode '" + s + "' (CA|SP|OFF)");
}

void EncoderConfig::validate() const {
    require(d >= 2 && n_tokens >= 1 && depth >= 1, ErrorKind::Config, "d, n_tokens and depth must be positive");
    require(heads >= 1 && d % heads == 0, ErrorKind::Config,
            "heads = " + std::to_string(heads) + " does not divide D = " + std::to_string(d));
    require(rank >= 1 && rank < d, ErrorKind::Config, "rank must satisfy 1 ≤ r < D");
    std::set<std::size_t> seen;
    for (std::size_t l : intervene_layers) {
        require(l < depth, ErrorKind::Config, "intervened layer " + std::to_string(l) + " outside depth");
        require(seen.insert(l).second, ErrorKind::Config, "duplicate intervened layer " + std::to_string(l));
    }
    require(init_gain > 0.0, ErrorKind::Config, "init_gain must be positive");
}

std::vector<Tensor> FrozenWeights::flatten() const {
    std::vector<Tensor> out;
    for (const BlockWeights& b : blocks) {
        for (const Tensor* t : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gain, &b.ln2_bias, &b.w1,
                                &b.w2}) {
            out.push_back(*t);
        }
    }
    out.push_back(final_gain);
    out.push_back(final_bias);
    out.push_back(positional);
    return out;
}

FrozenWeights FrozenWeights::unflatten(const std::vector<Tensor>& parts, std::size_t depth) {
    require(parts.size() == depth * 10 + 3, ErrorKind::MissingArtifact,
            "frozen bundle holds " + std::to_string(parts.size()) + " tensors, expected " +
                std::to_string(depth * 10 + 3));
    FrozenWeights w;
    std::size_t i = 0;
    for (std::size_t l = 0; l < depth; ++l) {
        BlockWeights b;
        for (Tensor* t : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gain, &b.ln2_bias, &b.w1,
                          &b.w2}) {
            *t = parts[i++];
        }
        w.blocks.push_back(std::move(b));
    }
    w.final_gain = parts[i++];
    w.final_bias = parts[i++];
    w.positional = parts[i++];
    return w;
}

std::uint64_t frozen_digest(const FrozenWeights& w) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor& t : w.flatten()) {
        h = digest(t, h);
    }
    return h;
}

LrorLayer::LrorLayer(std::size_t layer, Tensor m) : layer_(layer), m_(std::move(m)) {}

void LrorLayer::set_m(Tensor m) {
    require(m.shape() == m_.shape(), ErrorKind::Dimension, "replacement M has a different shape");
    m_ = std::move(m);
}

const ortho::OrthoBasis& LrorLayer::refresh() {
    basis_ = ortho::qr_orthonormalize(m_).basis;
    has_basis_ = true;
    return basis_;
}

const ortho::OrthoBasis& LrorLayer::basis() const {
    require(has_basis_, ErrorKind::Consistency, "layer " + std::to_string(layer_) + " has no cached basis");
    require(basis_.source_hash() == digest(m_), ErrorKind::Consistency,
            "stale cached basis at layer " + std::to_string(layer_) + ": M changed since the last refresh");
    return basis_;
}

void LrorLayer::adopt(ortho::OrthoBasis basis) {
    require(basis.source_hash() == digest(m_), ErrorKind::Consistency,
            "adopted basis at layer " + std::to_string(layer_) + " was not computed from the current M");
    basis_ = std::move(basis);
    has_basis_ = true;
}

LrorLayer* EncoderState::layer_at(std::size_t index) {
    for (LrorLayer& l : lror) {
        if (l.layer() == index) {
            return &l;
        }
    }
    return nullptr;
}

const LrorLayer* EncoderState::layer_at(std::size_t index) const {
    return const_cast<EncoderState*>(this)->layer_at(index);
}

std::size_t EncoderState::first_intervened() const {
    if (mode == Mode::OFF || lror.empty()) {
        return config.depth;
    }
    return lror.front().layer();
}

namespace {

Tensor sinusoidal_table(std::size_t rows, std::size_t d) {
    Tensor t({rows, d});
    for (std::size_t p = 0; p < rows; ++p) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            t.at(p, i) = std::sin(static_cast<double>(p) * freq);
            if (i + 1 < d) {
                t.at(p, i + 1) = std::cos(static_cast<double>(p) * freq);
            }
        }
    }
    return t;
}

}  // namespace

EncoderState init_frozen_encoder(const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d;
    Rng rng(derive_seed(cfg.seed, 0xe1));
    auto he = [&](std::size_t fan_in, std::size_t fan_out) {
        return rng.gaussian({fan_in, fan_out}, cfg.init_gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
    };
    EncoderState s;
    s.config = cfg;
    std::sort(s.config.intervene_layers.begin(), s.config.intervene_layers.end());
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        BlockWeights b;
        b.ln1_gain = Tensor::filled({d}, 1.0);
        b.ln1_bias = Tensor({d});
        b.ln2_gain = Tensor::filled({d}, 1.0);
        b.ln2_bias = Tensor({d});
        b.wq = he(d, d);
        b.wk = he(d, d);
        b.wv = he(d, d);
        b.wo = he(d, d);
        b.w1 = he(d, 4 * d);
        b.w2 = he(4 * d, d);
        s.frozen.blocks.push_back(std::move(b));
    }
    s.frozen.final_gain = Tensor::filled({d}, 1.0);
    s.frozen.final_bias = Tensor({d});
    s.frozen.positional = sinusoidal_table(cfg.tokens(), d);
    for (std::size_t l : s.config.intervene_layers) {
        Rng mr(derive_seed(cfg.seed, 0x4d00 + l));
        s.lror.emplace_back(l, mr.gaussian({d, cfg.rank}, 1.0 / std::sqrt(static_cast<double>(d))));
        s.lror.back().refresh();
    }
    s.head_w = Tensor({d, 2});
    s.head_b = Tensor({2});
    return s;
}

std::size_t lror_param_formula(std::size_t d, std::size_t rank, std::size_t layers) {
    return layers * d * rank + (d * 2 + 2);
}

std::size_t trainable_params_count(const EncoderState& state) {
    const std::size_t head = state.config.d * 2 + 2;
    if (!state.bases_trainable()) {
        return head;
    }
    std::size_t n = head;
    for (const LrorLayer& l : state.lror) {
        n += l.m().size();
    }
    return n;
}

Tensor embed(const EncoderState& state, const Tensor& tokens) {
    const std::size_t t = state.config.tokens();
    const std::size_t d = state.config.d;
    require(tokens.ndim() == 3 && tokens.extent(1) == t && tokens.extent(2) == d, ErrorKind::Dimension,
            "token shape " + shape_string(tokens.shape()) + " does not match encoder [B × " + std::to_string(t) +
                " × " + std::to_string(d) + "]");
    const std::size_t b = tokens.extent(0);
    Tensor x({b * t, d});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < t; ++k) {
            const double* src = tokens.data() + (i * t + k) * d;
            const auto pos = state.frozen.positional.row(k);
            auto dst = x.row(i * t + k);
            for (std::size_t c = 0; c < d; ++c) {
                dst[c] = src[c] + pos[c];
            }
        }
    }
    return x;
}

namespace {

ad::Var apply_block(ad::Tape& tape, const EncoderState& state, std::size_t layer, ad::Var x, std::size_t batch) {
    const std::size_t t = state.config.tokens();
    switch (state.config.backbone) {
        case Backbone::Identity:
            return x;
        case Backbone::Linear:
            return ad::add(x, ad::token_mean(x, t));
        case Backbone::Transformer:
            break;
    }
    const BlockWeights& w = state.frozen.blocks[layer];
    auto c = [&](const Tensor& v) { return tape.constant(v); };
    const ad::Var a = ad::layer_norm(x, c(w.ln1_gain), c(w.ln1_bias));
    const ad::Var q = ad::matmul(a, c(w.wq));
    const ad::Var k = ad::matmul(a, c(w.wk));
    const ad::Var v = ad::matmul(a, c(w.wv));
    const ad::Var ctx = ad::attention(q, k, v, batch, t, state.config.heads);
    x = ad::add(x, ad::matmul(ctx, c(w.wo)));
    const ad::Var h = ad::layer_norm(x, c(w.ln2_gain), c(w.ln2_bias));
    return ad::add(x, ad::matmul(ad::gelu(ad::matmul(h, c(w.w1))), c(w.w2)));
}

Tensor visual_rows(const Tensor& x, std::size_t tokens) {
    const std::size_t n = x.rows() / tokens;
    const std::size_t d = x.cols();
    Tensor out({n * (tokens - 1), d});
    for (std::size_t b = 0; b < n; ++b) {
        std::copy_n(x.data() + (b * tokens + 1) * d, (tokens - 1) * d, out.data() + b * (tokens - 1) * d);
    }
    return out;
}

Tensor cls_rows(const Tensor& x, std::size_t tokens) {
    const std::size_t n = x.rows() / tokens;
    const std::size_t d = x.cols();
    Tensor out({n, d});
    for (std::size_t b = 0; b < n; ++b) {
        std::copy_n(x.data() + b * tokens * d, d, out.data() + b * d);
    }
    return out;
}

ad::ProjectionFlow flow_of(Mode m) {
    switch (m) {
        case Mode::CA:
            return ad::ProjectionFlow::Complement;
        case Mode::SP:
            return ad::ProjectionFlow::Subspace;
        case Mode::OFF:
            break;
    }
    return ad::ProjectionFlow::Identity;
}

}  // namespace

Tensor run_prefix(const EncoderState& state, const Tensor& x, std::size_t batch, std::size_t until) {
    require(until <= state.config.depth, ErrorKind::Index, "prefix longer than the encoder");
    require(x.ndim() == 2 && x.rows() == batch * state.config.tokens(), ErrorKind::Dimension,
            "prefix input must be [B·T × D]");
    if (until == 0 || state.config.backbone == Backbone::Identity) {
        return x;
    }
    // Chunked so one tape never holds the whole set.
    const std::size_t t = state.config.tokens();
    const std::size_t d = state.config.d;
    constexpr std::size_t chunk = 256;
    Tensor out(x.shape());
    for (std::size_t first = 0; first < batch; first += chunk) {
        const std::size_t count = std::min(chunk, batch - first);
        const auto begin = x.storage().begin() + static_cast<std::ptrdiff_t>(first * t * d);
        ad::Tape tape;
        ad::Var v = tape.constant(
            Tensor({count * t, d}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * t * d))));
        for (std::size_t l = 0; l < until; ++l) {
            v = apply_block(tape, state, l, v, count);
        }
        std::copy_n(v.value().data(), count * t * d, out.data() + first * t * d);
    }
    return out;
}

Graph build_forward(ad::Tape& tape, EncoderState& state, const Tensor& x, std::size_t batch, std::size_t start,
                    const GraphOptions& options) {
    const std::size_t t = state.config.tokens();
    require(x.ndim() == 2 && x.rows() == batch * t && x.cols() == state.config.d, ErrorKind::Dimension,
            "forward input " + shape_string(x.shape()) + " is not [B·T × D]");
    require(start <= state.config.depth, ErrorKind::Index, "start layer outside the encoder");
    for (const LrorLayer& l : state.lror) {
        require(l.layer() >= start || state.mode == Mode::OFF, ErrorKind::Contract,
                "forward starts after intervened layer " + std::to_string(l.layer()));
    }
    Graph g;
    const bool train_bases = options.trainable && state.bases_trainable();
    for (const LrorLayer& l : state.lror) {
        g.m.push_back(train_bases ? tape.parameter(l.m()) : tape.constant(l.m()));
    }
    const ad::ProjectionFlow flow = flow_of(state.mode);
    ad::Var h = tape.constant(x);
    std::size_t next = 0;
    for (std::size_t layer = start; layer < state.config.depth; ++layer) {
        while (next < state.lror.size() && state.lror[next].layer() < layer) {
            ++next;
        }
        if (state.mode != Mode::OFF && next < state.lror.size() && state.lror[next].layer() == layer) {
            LrorLayer& lr = state.lror[next];
            const ad::Var q = ad::qr_q(g.m[next]);
            lr.adopt(ortho::OrthoBasis(q.value(), digest(lr.m())));
            const ad::Var out = ad::project_tokens(h, q, t, flow);
            require(lr.basis().source_hash() == digest(g.m[next].value()), ErrorKind::Consistency,
                    "stale cached basis at layer " + std::to_string(layer));
            if (options.trace != nullptr) {
                LayerTrace lt;
                lt.layer = layer;
                lt.pre = visual_rows(h.value(), t);
                lt.post = visual_rows(out.value(), t);
                lt.cls_before = cls_rows(h.value(), t);
                lt.cls_after = cls_rows(out.value(), t);
                options.trace->layers.push_back(std::move(lt));
            }
            h = out;
        }
        h = apply_block(tape, state, layer, h, batch);
    }
    std::vector<std::size_t> cls(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        cls[b] = b * t;
    }
    const ad::Var pooled = ad::gather_rows(h, cls);
    g.features = ad::layer_norm(pooled, tape.constant(state.frozen.final_gain), tape.constant(state.frozen.final_bias));
    g.head_w = options.trainable ? tape.parameter(state.head_w) : tape.constant(state.head_w);
    g.head_b = options.trainable ? tape.parameter(state.head_b) : tape.constant(state.head_b);
    g.logits = ad::add_row_bias(ad::matmul(g.features, g.head_w), g.head_b);
    return g;
}

ForwardResult forward(EncoderState& state, const Tensor& tokens, bool trace) {
    const Tensor x = embed(state, tokens);
    const std::size_t n = tokens.extent(0);
    const std::size_t t = state.config.tokens();
    const std::size_t d = state.config.d;
    constexpr std::size_t chunk = 256;
    ForwardResult r;
    r.logits = Tensor({n, 2});
    r.features = Tensor({n, d});
    std::vector<Trace> parts;
    for (std::size_t first = 0; first < n; first += chunk) {
        const std::size_t count = std::min(chunk, n - first);
        Tensor xs({count * t, d},
                  std::vector<double>(x.storage().begin() + static_cast<std::ptrdiff_t>(first * t * d),
                                      x.storage().begin() + static_cast<std::ptrdiff_t>((first + count) * t * d)));
        ad::Tape tape;
        Trace part;
        GraphOptions opt;
        opt.trace = trace ? &part : nullptr;
        const Graph g = build_forward(tape, state, xs, count, 0, opt);
        std::copy_n(g.logits.value().data(), count * 2, r.logits.data() + first * 2);
        std::copy_n(g.features.value().data(), count * d, r.features.data() + first * d);
        if (trace) {
            parts.push_back(std::move(part));
        }
    }
    if (trace && !parts.empty()) {
        for (std::size_t li = 0; li < parts.front().layers.size(); ++li) {
            LayerTrace merged;
            merged.layer = parts.front().layers[li].layer;
            std::vector<Tensor> pre, post, cb, ca;
            for (const Trace& p : parts) {
                pre.push_back(p.layers[li].pre);
                post.push_back(p.layers[li].post);
                cb.push_back(p.layers[li].cls_before);
                ca.push_back(p.layers[li].cls_after);
            }
            merged.pre = vstack(pre);
            merged.post = vstack(post);
            merged.cls_before = vstack(cb);
            merged.cls_after = vstack(ca);
            r.trace.layers.push_back(std::move(merged));
        }
    }
    return r;
}

double positive_probability(double logit0, double logit1) {
    const double z = logit1 - logit0;
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void save_checkpoint(const std::filesystem::path& dir, const EncoderState& state) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create checkpoint directory " + dir.string());
    save_bundle(dir / "frozen.lrt", state.frozen.flatten());
    for (const LrorLayer& l : state.lror) {
        save_tensor(dir / ("m_layer" + std::to_string(l.layer()) + ".lrt"), l.m());
    }
    const std::size_t d = state.config.d;
    Tensor head({d + 1, 2});
    std::copy_n(state.head_w.data(), d * 2, head.data());
    std::copy_n(state.head_b.data(), 2, head.data() + d * 2);
    save_tensor(dir / "head.lrt", head);
    nlohmann::json cfg;
    cfg["encoder"] = to_json(state.config);
    cfg["mode"] = mode_name(state.mode);
    cfg["freeze_bases"] = state.freeze_bases;
    write_json_file(dir / "config.json", cfg);
    write_text_file(dir / "digest.txt", hex_digest(frozen_digest(state.frozen)) + "\n");
}

EncoderState load_checkpoint(const std::filesystem::path& dir) {
    require(std::filesystem::is_directory(dir), ErrorKind::MissingArtifact,
            "checkpoint directory " + dir.string() + " does not exist");
    const nlohmann::json cfg = read_json_file(dir / "config.json");
    EncoderState s;
    s.config = encoder_config_from_json(cfg.at("encoder"));
    s.config.validate();
    s.mode = parse_mode(cfg.value("mode", "CA"));
    s.freeze_bases = cfg.value("freeze_bases", false);
    s.frozen = FrozenWeights::unflatten(load_bundle(dir / "frozen.lrt"), s.config.depth);
    const std::string recorded = read_text_file(dir / "digest.txt");
    const std::string actual = hex_digest(frozen_digest(s.frozen));
    require(recorded.rfind(actual, 0) == 0, ErrorKind::MissingArtifact,
            "corrupted checkpoint " + (dir / "frozen.lrt").string() + ": digest " + actual + " does not match " +
                (dir / "digest.txt").string());
    const std::size_t d = s.config.d;
    for (const BlockWeights& b : s.frozen.blocks) {
        require(b.wq.shape() == Shape{d, d} && b.w1.shape() == Shape{d, 4 * d}, ErrorKind::MissingArtifact,
                "corrupted checkpoint " + (dir / "frozen.lrt").string() + ": weight shapes disagree with config");
    }
    for (std::size_t l : s.config.intervene_layers) {
        const auto path = dir / ("m_layer" + std::to_string(l) + ".lrt");
        Tensor m = load_tensor(path);
        require(m.shape() == Shape{d, s.config.rank}, ErrorKind::MissingArtifact,
                "corrupted tensor file " + path.string() + ": expected " + std::to_string(d) + "×" +
                    std::to_string(s.config.rank));
        s.lror.emplace_back(l, std::move(m));
        s.lror.back().refresh();
    }
    const auto head_path = dir / "head.lrt";
    const Tensor head = load_tensor(head_path);
    require(head.shape() == Shape{d + 1, 2}, ErrorKind::MissingArtifact,
            "corrupted tensor file " + head_path.string() + ": expected (D+1)×2");
    s.head_w = Tensor({d, 2}, std::vector<double>(head.storage().begin(), head.storage().begin() + d * 2));
    s.head_b = Tensor({2}, std::vector<double>(head.storage().begin() + d * 2, head.storage().end()));
    return s;
}

}  // namespace lror::enc
