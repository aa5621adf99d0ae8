// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lror/error.hpp"
#include "lror/kernels.hpp"
#include "lror/ortho.hpp"

namespace lror::ad {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, false, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var& p : parents) {
        require(p.tape == this, ErrorKind::Contract, "operand recorded on a different tape");
        needs = needs || nodes_[p.id].requires_grad;
    }
    require(value.all_finite(), ErrorKind::Numeric, "non-finite value produced on tape");
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

const Tensor* Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.has_adjoint ? &n.adjoint : nullptr;
}

Tensor* Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) {
        return nullptr;
    }
    if (!n.has_adjoint) {
        n.adjoint = Tensor(n.value.shape());
        n.has_adjoint = true;
    }
    return &n.adjoint;
}

void Tape::backward(Var loss) {
    require(loss.tape == this, ErrorKind::Contract, "loss belongs to a different tape");
    require(nodes_[loss.id].value.size() == 1, ErrorKind::Contract,
            "backward needs a scalar root, got " + shape_string(nodes_[loss.id].value.shape()));
    for (Node& n : nodes_) {
        n.has_adjoint = false;
        n.adjoint = Tensor();
    }
    Tensor* seed = grad_slot(loss.id);
    if (seed == nullptr) {
        return;
    }
    seed->fill(1.0);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.has_adjoint && n.backward) {
            n.backward(*this, id);
        }
    }
}

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
    require(a.shape() == b.shape(), ErrorKind::Dimension,
            std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void accumulate(Tensor* dst, const Tensor& src, double factor = 1.0) {
    if (dst != nullptr) {
        kernels::axpy(src.size(), factor, src.data(), dst->data());
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.ndim() == 2 && bv.ndim() == 2, ErrorKind::Dimension,
            "matmul expects matrices, got " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
    require(av.cols() == bv.rows(), ErrorKind::Dimension,
            "matmul inner extents differ: " + shape_string(av.shape()) + " · " + shape_string(bv.shape()));
    const std::size_t m = av.rows();
    const std::size_t k = av.cols();
    const std::size_t n = bv.cols();
    Tensor out({m, n});
    kernels::gemm_nn(m, n, k, av.data(), bv.data(), out.data(), false);
    const Var parents[] = {a, b};
    return a.tape->record(std::move(out), parents, [a, b, m, n, k](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        if (Tensor* ga = t.grad_slot(a.id)) {
            kernels::gemm_nt(m, k, n, g.data(), t.value(b.id).data(), ga->data(), true);
        }
        if (Tensor* gb = t.grad_slot(b.id)) {
            kernels::gemm_tn(k, n, m, t.value(a.id).data(), g.data(), gb->data(), true);
        }
    });
}

Var add(Var a, Var b) {
    require_same(a, b, "add");
    Tensor out = lror::add(a.value(), b.value());
    const Var parents[] = {a, b};
    return a.tape->record(std::move(out), parents, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        accumulate(t.grad_slot(a.id), g);
        accumulate(t.grad_slot(b.id), g);
    });
}

Var sub(Var a, Var b) {
    require_same(a, b, "sub");
    Tensor out = lror::sub(a.value(), b.value());
    const Var parents[] = {a, b};
    return a.tape->record(std::move(out), parents, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        accumulate(t.grad_slot(a.id), g);
        accumulate(t.grad_slot(b.id), g, -1.0);
    });
}

Var scale(Var a, double factor) {
    Tensor out = lror::scale(a.value(), factor);
    const Var parents[] = {a};
    return a.tape->record(std::move(out), parents, [a, factor](Tape& t, std::size_t self) {
        accumulate(t.grad_slot(a.id), *t.grad(Var{&t, self}), factor);
    });
}

Var mul(Var a, Var b) {
    require_same(a, b, "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i];
    }
    const Var parents[] = {a, b};
    return a.tape->record(std::move(out), parents, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        if (Tensor* ga = t.grad_slot(a.id)) {
            const Tensor& bv = t.value(b.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * bv[i];
            }
        }
        if (Tensor* gb = t.grad_slot(b.id)) {
            const Tensor& av = t.value(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] += g[i] * av[i];
            }
        }
    });
}

Var add_row_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require(bv.ndim() == 1 && bv.size() == xv.cols(), ErrorKind::Dimension,
            "bias " + shape_string(bv.shape()) + " does not match last axis of " + shape_string(xv.shape()));
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += bv[c];
        }
    }
    const Var parents[] = {x, bias};
    return x.tape->record(std::move(out), parents, [x, bias](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        accumulate(t.grad_slot(x.id), g);
        if (Tensor* gb = t.grad_slot(bias.id)) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
                kernels::axpy(g.cols(), 1.0, g.row(r).data(), gb->data());
            }
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) {
        s += v;
    }
    const Var parents[] = {x};
    return x.tape->record(Tensor::scalar(s), parents, [x](Tape& t, std::size_t self) {
        const double g = t.grad(Var{&t, self})->item();
        if (Tensor* gx = t.grad_slot(x.id)) {
            for (double& v : gx->values()) {
                v += g;
            }
        }
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    const Var parents[] = {x};
    return x.tape->record(std::move(out), parents, [x](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(x.id)) {
            const Tensor& g = *t.grad(Var{&t, self});
            kernels::axpy(g.size(), 1.0, g.data(), gx->data());
        }
    });
}

Var gelu(Var x) {
    // Exact form: x·Φ(x). The local derivative is kept for the backward pass.
    Tensor out = x.value();
    const bool keep = x.tape->requires_grad(x);
    Tensor slope = keep ? Tensor(out.shape()) : Tensor();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = out[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        out[i] = v * cdf;
        if (keep) slope[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    }
    const Var parents[] = {x};
    return x.tape->record(std::move(out), parents, [x, slope = std::move(slope)](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_slot(x.id);
        const Tensor& g = *t.grad(Var{&t, self});
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * slope[i];
    });
}

namespace {

void softmax_row(std::span<const double> in, std::span<double> out) {
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - mx);
        z += out[i];
    }
    for (double& v : out) {
        v /= z;
    }
}

}  // namespace

Var softmax_rows(Var x) {
    const Tensor& xv = x.value();
    require(xv.cols() > 0, ErrorKind::Dimension, "softmax over an empty axis");
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        softmax_row(xv.row(r), out.row(r));
    }
    const Var parents[] = {x};
    return x.tape->record(std::move(out), parents, [x](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_slot(x.id);
        const Tensor& g = *t.grad(Var{&t, self});
        const Tensor& y = t.value(self);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const auto yr = y.row(r);
            const auto gr = g.row(r);
            const double d = kernels::dot(yr.size(), yr.data(), gr.data());
            auto out = gx->row(r);
            for (std::size_t c = 0; c < yr.size(); ++c) {
                out[c] += yr[c] * (gr[c] - d);
            }
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const std::size_t d = xv.cols();
    require(xv.ndim() >= 1 && d > 0, ErrorKind::Dimension, "layer_norm over an empty last axis");
    require(gain.value().shape() == Shape{d} && bias.value().shape() == Shape{d}, ErrorKind::Dimension,
            "layer_norm affine parameters must be [" + std::to_string(d) + "]");
    require(eps > 0.0, ErrorKind::Contract, "layer_norm eps must be positive");
    const std::size_t rows = xv.rows();
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(rows);
    Tensor out(xv.shape());
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const auto in = xv.row(r);
        double mean = 0.0;
        for (double v : in) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : in) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        auto xh = xhat.row(r);
        auto o = out.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            xh[c] = (in[c] - mean) * is;
            o[c] = gv[c] * xh[c] + bv[c];
        }
    }
    const Var parents[] = {x, gain, bias};
    return x.tape->record(std::move(out), parents,
                          [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                               std::size_t self) {
                              const Tensor& g = *t.grad(Var{&t, self});
                              const Tensor& gv = t.value(gain.id);
                              const std::size_t d = g.cols();
                              Tensor* gx = t.grad_slot(x.id);
                              Tensor* gg = t.grad_slot(gain.id);
                              Tensor* gb = t.grad_slot(bias.id);
                              std::vector<double> gh(d);
                              for (std::size_t r = 0; r < g.rows(); ++r) {
                                  const auto gr = g.row(r);
                                  const auto xh = xhat.row(r);
                                  if (gg != nullptr) {
                                      for (std::size_t c = 0; c < d; ++c) {
                                          (*gg)[c] += gr[c] * xh[c];
                                      }
                                  }
                                  if (gb != nullptr) {
                                      for (std::size_t c = 0; c < d; ++c) {
                                          (*gb)[c] += gr[c];
                                      }
                                  }
                                  if (gx != nullptr) {
                                      double mean_gh = 0.0;
                                      double mean_ghx = 0.0;
                                      for (std::size_t c = 0; c < d; ++c) {
                                          gh[c] = gr[c] * gv[c];
                                          mean_gh += gh[c];
                                          mean_ghx += gh[c] * xh[c];
                                      }
                                      mean_gh /= static_cast<double>(d);
                                      mean_ghx /= static_cast<double>(d);
                                      auto out = gx->row(r);
                                      for (std::size_t c = 0; c < d; ++c) {
                                          out[c] += inv_std[r] * (gh[c] - mean_gh - xh[c] * mean_ghx);
                                      }
                                  }
                              }
                          });
}

Var cross_entropy_logits(Var logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    require(lv.ndim() == 2, ErrorKind::Dimension, "logits must be [batch × classes]");
    const std::size_t batch = lv.rows();
    const std::size_t classes = lv.cols();
    require(batch >= 1, ErrorKind::Contract, "cross entropy over an empty batch");
    require(labels.size() == batch, ErrorKind::Dimension,
            "label count " + std::to_string(labels.size()) + " differs from batch " + std::to_string(batch));
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            fail(ErrorKind::Index, "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
    Tensor probs(lv.shape());
    double loss = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const auto row = lv.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) {
            z += std::exp(v - mx);
        }
        const double log_z = mx + std::log(z);
        loss += log_z - row[static_cast<std::size_t>(labels[r])];
        auto p = probs.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            p[c] = std::exp(row[c] - log_z);
        }
    }
    loss /= static_cast<double>(batch);
    std::vector<int> y(labels.begin(), labels.end());
    const Var parents[] = {logits};
    return logits.tape->record(Tensor::scalar(loss), parents,
                               [logits, probs = std::move(probs), y = std::move(y)](Tape& t, std::size_t self) {
                                   const double g = t.grad(Var{&t, self})->item();
                                   Tensor* gl = t.grad_slot(logits.id);
                                   const double w = g / static_cast<double>(probs.rows());
                                   for (std::size_t r = 0; r < probs.rows(); ++r) {
                                       auto out = gl->row(r);
                                       const auto p = probs.row(r);
                                       for (std::size_t c = 0; c < p.size(); ++c) {
                                           out[c] += w * (p[c] - (static_cast<int>(c) == y[r] ? 1.0 : 0.0));
                                       }
                                   }
                               });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
    const Tensor& xv = x.value();
    require(xv.ndim() == 2, ErrorKind::Dimension, "gather_rows expects a matrix");
    Tensor out({rows.size(), xv.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= xv.rows()) {
            fail(ErrorKind::Index, "gather_rows index out of range");
        }
        std::copy_n(xv.row(rows[i]).data(), xv.cols(), out.row(i).data());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const Var parents[] = {x};
    return x.tape->record(std::move(out), parents, [x, idx = std::move(idx)](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        Tensor* gx = t.grad_slot(x.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            kernels::axpy(g.cols(), 1.0, g.row(i).data(), gx->row(idx[i]).data());
        }
    });
}

Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t tokens, std::size_t heads) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    require(qv.shape() == kv.shape() && qv.shape() == vv.shape(), ErrorKind::Dimension,
            "attention operands must share a shape");
    require(qv.ndim() == 2 && qv.rows() == batch * tokens, ErrorKind::Dimension,
            "attention operands must be [batch·tokens × d]");
    const std::size_t d = qv.cols();
    require(heads > 0 && d % heads == 0, ErrorKind::Config, "head count must divide the model width");
    const std::size_t dh = d / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // probs[b][h] is tokens×tokens
    Tensor probs({batch, heads, tokens, tokens});
    Tensor out({batch * tokens, d});
    std::vector<double> scores(tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs.data() + ((b * heads + h) * tokens) * tokens;
            for (std::size_t i = 0; i < tokens; ++i) {
                const double* qi = qv.data() + (b * tokens + i) * d + h * dh;
                for (std::size_t j = 0; j < tokens; ++j) {
                    const double* kj = kv.data() + (b * tokens + j) * d + h * dh;
                    scores[j] = kernels::dot(dh, qi, kj) * inv_scale;
                }
                softmax_row(scores, std::span<double>(p + i * tokens, tokens));
                double* oi = out.data() + (b * tokens + i) * d + h * dh;
                for (std::size_t j = 0; j < tokens; ++j) {
                    kernels::axpy(dh, p[i * tokens + j], vv.data() + (b * tokens + j) * d + h * dh, oi);
                }
            }
        }
    }
    const Var parents[] = {q, k, v};
    return q.tape->record(
        std::move(out), parents,
        [q, k, v, batch, tokens, heads, dh, d, inv_scale, probs = std::move(probs)](Tape& t, std::size_t self) {
            const Tensor& g = *t.grad(Var{&t, self});
            const Tensor& qv = t.value(q.id);
            const Tensor& kv = t.value(k.id);
            const Tensor& vv = t.value(v.id);
            Tensor* gq = t.grad_slot(q.id);
            Tensor* gk = t.grad_slot(k.id);
            Tensor* gv = t.grad_slot(v.id);
            std::vector<double> dp(tokens);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const double* p = probs.data() + ((b * heads + h) * tokens) * tokens;
                    for (std::size_t i = 0; i < tokens; ++i) {
                        const double* gi = g.data() + (b * tokens + i) * d + h * dh;
                        const double* pi = p + i * tokens;
                        // dP_ij = gᵢ·vⱼ ; dV_j += P_ij gᵢ
                        double row_dot = 0.0;
                        for (std::size_t j = 0; j < tokens; ++j) {
                            dp[j] = kernels::dot(dh, gi, vv.data() + (b * tokens + j) * d + h * dh);
                            row_dot += dp[j] * pi[j];
                            if (gv != nullptr) {
                                kernels::axpy(dh, pi[j], gi, gv->data() + (b * tokens + j) * d + h * dh);
                            }
                        }
                        // dS_ij = P_ij (dP_ij − Σ_k P_ik dP_ik)
                        for (std::size_t j = 0; j < tokens; ++j) {
                            const double ds = pi[j] * (dp[j] - row_dot) * inv_scale;
                            if (gq != nullptr) {
                                kernels::axpy(dh, ds, kv.data() + (b * tokens + j) * d + h * dh,
                                              gq->data() + (b * tokens + i) * d + h * dh);
                            }
                            if (gk != nullptr) {
                                kernels::axpy(dh, ds, qv.data() + (b * tokens + i) * d + h * dh,
                                              gk->data() + (b * tokens + j) * d + h * dh);
                            }
                        }
                    }
                }
            }
        });
}

Var token_mean(Var x, std::size_t tokens) {
    const Tensor& xv = x.value();
    require(xv.ndim() == 2 && tokens >= 1 && xv.rows() % tokens == 0, ErrorKind::Dimension,
            "token_mean expects [batch·tokens × d]");
    const std::size_t d = xv.cols();
    const std::size_t groups = xv.rows() / tokens;
    const double w = 1.0 / static_cast<double>(tokens);
    Tensor out(xv.shape());
    std::vector<double> mean(d);
    for (std::size_t b = 0; b < groups; ++b) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t i = 0; i < tokens; ++i) {
            kernels::axpy(d, w, xv.row(b * tokens + i).data(), mean.data());
        }
        for (std::size_t i = 0; i < tokens; ++i) {
            std::copy(mean.begin(), mean.end(), out.row(b * tokens + i).begin());
        }
    }
    const Var parents[] = {x};
    return x.tape->record(std::move(out), parents, [x, tokens, groups, d, w](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        Tensor* gx = t.grad_slot(x.id);
        std::vector<double> mean(d);
        for (std::size_t b = 0; b < groups; ++b) {
            std::fill(mean.begin(), mean.end(), 0.0);
            for (std::size_t i = 0; i < tokens; ++i) {
                kernels::axpy(d, w, g.row(b * tokens + i).data(), mean.data());
            }
            for (std::size_t i = 0; i < tokens; ++i) {
                kernels::axpy(d, 1.0, mean.data(), gx->row(b * tokens + i).data());
            }
        }
    });
}

Var project_tokens(Var x, Var q, std::size_t tokens, ProjectionFlow flow) {
    const Tensor& xv = x.value();
    const Tensor& qv = q.value();
    require(xv.ndim() == 2 && qv.ndim() == 2, ErrorKind::Dimension, "project_tokens expects matrices");
    require(qv.rows() == xv.cols(), ErrorKind::Dimension,
            "basis " + shape_string(qv.shape()) + " does not match token width " + std::to_string(xv.cols()));
    require(tokens >= 1 && xv.rows() % tokens == 0, ErrorKind::Dimension, "row count is not a multiple of tokens");
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    const std::size_t r = qv.cols();
    if (flow == ProjectionFlow::Identity || r == 0) {
        Tensor out = flow == ProjectionFlow::Subspace ? Tensor({n, d}) : xv;
        if (flow == ProjectionFlow::Subspace) {
            for (std::size_t i = 0; i < n; i += tokens) {
                std::copy_n(xv.row(i).data(), d, out.row(i).data());
            }
        }
        const Var parents[] = {x};
        return x.tape->record(std::move(out), parents, [x, flow, tokens](Tape& t, std::size_t self) {
            const Tensor& g = *t.grad(Var{&t, self});
            Tensor* gx = t.grad_slot(x.id);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                if (flow != ProjectionFlow::Subspace || i % tokens == 0) {
                    kernels::axpy(g.cols(), 1.0, g.row(i).data(), gx->row(i).data());
                }
            }
        });
    }
    // Coefficients c = XQ for all rows; CLS rows are then restored verbatim.
    Tensor coeff({n, r});
    kernels::gemm_nn(n, r, d, xv.data(), qv.data(), coeff.data(), false);
    Tensor proj({n, d});
    kernels::gemm_nt(n, d, r, coeff.data(), qv.data(), proj.data(), false);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = xv.row(i);
        const auto pi = proj.row(i);
        auto oi = out.row(i);
        if (i % tokens == 0) {
            std::copy(xi.begin(), xi.end(), oi.begin());
        } else if (flow == ProjectionFlow::Complement) {
            for (std::size_t c = 0; c < d; ++c) {
                oi[c] = xi[c] - pi[c];
            }
        } else {
            std::copy(pi.begin(), pi.end(), oi.begin());
        }
    }
    const Var parents[] = {x, q};
    return x.tape->record(std::move(out), parents, [x, q, tokens, flow, coeff = std::move(coeff)](Tape& t,
                                                                                                 std::size_t self) {
        const Tensor& g = *t.grad(Var{&t, self});
        const Tensor& xv = t.value(x.id);
        const Tensor& qv = t.value(q.id);
        const std::size_t n = g.rows();
        const std::size_t d = g.cols();
        const std::size_t r = qv.cols();
        const double sign = flow == ProjectionFlow::Complement ? -1.0 : 1.0;
        // Visual-row adjoint with CLS rows zeroed: the projection only sees those.
        Tensor gvis = g;
        for (std::size_t i = 0; i < n; i += tokens) {
            std::fill_n(gvis.row(i).data(), d, 0.0);
        }
        Tensor gq_coeff({n, r});  // Ḡ·Q
        kernels::gemm_nn(n, r, d, gvis.data(), qv.data(), gq_coeff.data(), false);
        if (Tensor* gx = t.grad_slot(x.id)) {
            // Complement: x̄ = ḡ − (ḡQ)Qᵀ on visual rows, ḡ on CLS rows.
            // Subspace:   x̄ = (ḡQ)Qᵀ on visual rows, ḡ on CLS rows.
            Tensor back({n, d});
            kernels::gemm_nt(n, d, r, gq_coeff.data(), qv.data(), back.data(), false);
            for (std::size_t i = 0; i < n; ++i) {
                auto out = gx->row(i);
                const auto gi = g.row(i);
                if (i % tokens == 0) {
                    for (std::size_t c = 0; c < d; ++c) {
                        out[c] += gi[c];
                    }
                    continue;
                }
                const auto bi = back.row(i);
                if (flow == ProjectionFlow::Complement) {
                    for (std::size_t c = 0; c < d; ++c) {
                        out[c] += gi[c] - bi[c];
                    }
                } else {
                    for (std::size_t c = 0; c < d; ++c) {
                        out[c] += bi[c];
                    }
                }
            }
        }
        if (Tensor* gq = t.grad_slot(q.id)) {
            // ∂/∂Q tr(Ḡᵀ X Q Qᵀ) = Xᵀ Ḡ Q + Ḡᵀ X Q over visual rows.
            Tensor xvis = xv;
            Tensor cvis = coeff;
            for (std::size_t i = 0; i < n; i += tokens) {
                std::fill_n(xvis.row(i).data(), d, 0.0);
                std::fill_n(cvis.row(i).data(), r, 0.0);
            }
            Tensor tmp({d, r});
            kernels::gemm_tn(d, r, n, xvis.data(), gq_coeff.data(), tmp.data(), false);
            kernels::gemm_tn(d, r, n, gvis.data(), cvis.data(), tmp.data(), true);
            kernels::axpy(tmp.size(), sign, tmp.data(), gq->data());
        }
    });
}

Var qr_q(Var m) {
    ortho::QrResult qr = ortho::qr_orthonormalize(m.value());
    Tensor q = qr.basis.q();
    const Var parents[] = {m};
    return m.tape->record(std::move(q), parents, [m, r = std::move(qr.r)](Tape& t, std::size_t self) {
        if (Tensor* gm = t.grad_slot(m.id)) {
            const Tensor gmq = ortho::qr_backward(t.value(m.id), t.value(self), r, *t.grad(Var{&t, self}));
            kernels::axpy(gmq.size(), 1.0, gmq.data(), gm->data());
        }
    });
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x0, double step) {
    require(step > 0.0, ErrorKind::Contract, "finite-difference step must be positive");
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.parameter(x0);
        Var y = f(tape, x);
        require(y.value().size() == 1, ErrorKind::Contract, "finite-difference target must be scalar");
        tape.backward(y);
        const Tensor* g = tape.grad(x);
        analytic = g ? *g : Tensor(x0.shape());
    }
    auto eval = [&](const Tensor& at) {
        Tape tape;
        Var x = tape.constant(at);
        const double v = f(tape, x).value().item();
        require(std::isfinite(v), ErrorKind::Numeric, "non-finite function value during finite differences");
        return v;
    };
    double worst = 0.0;
    Tensor probe = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = eval(probe);
        probe[i] = orig - step;
        const double down = eval(probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

}  // namespace lror::ad
