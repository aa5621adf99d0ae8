// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/ortho.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "lror/error.hpp"
#include "lror/kernels.hpp"

namespace lror::ortho {

OrthoBasis::OrthoBasis(Tensor q, std::uint64_t source_hash, double tol)
    : q_(std::move(q)), source_hash_(source_hash) {
    require(q_.ndim() == 2, ErrorKind::Dimension, "basis must be a matrix, got " + shape_string(q_.shape()));
    require(q_.cols() <= q_.rows(), ErrorKind::Dimension, "basis rank exceeds ambient dimension");
    const double res = orthonormality_residual(q_);
    require(res < tol, ErrorKind::Contract, "basis columns are not orthonormal (residual " + std::to_string(res) + ")");
}

OrthoBasis OrthoBasis::empty(std::size_t d) { return OrthoBasis(Tensor({d, 0})); }

double orthonormality_residual(const Tensor& q) {
    const Tensor g = matmul_tn(q, q);
    double s = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
            const double e = g.at(i, j) - (i == j ? 1.0 : 0.0);
            s += e * e;
        }
    }
    return std::sqrt(s);
}

QrResult qr_orthonormalize(const Tensor& m) {
    require(m.ndim() == 2, ErrorKind::Dimension, "qr expects a matrix, got " + shape_string(m.shape()));
    const std::size_t d = m.rows();
    const std::size_t r = m.cols();
    require(r <= d, ErrorKind::Dimension, "qr needs r ≤ D, got " + shape_string(m.shape()));

    // Column-major working copy: a[j] is column j.
    std::vector<std::vector<double>> a(r, std::vector<double>(d));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            a[j][i] = m.at(i, j);
        }
    }
    std::vector<std::vector<double>> reflectors(r);
    for (std::size_t j = 0; j < r; ++j) {
        std::vector<double>& col = a[j];
        double norm2 = 0.0;
        for (std::size_t i = j; i < d; ++i) {
            norm2 += col[i] * col[i];
        }
        const double norm = std::sqrt(norm2);
        std::vector<double> v(d - j, 0.0);
        if (norm > 0.0) {
            const double alpha = col[j] > 0.0 ? -norm : norm;
            for (std::size_t i = j; i < d; ++i) {
                v[i - j] = col[i];
            }
            v[0] -= alpha;
            double vnorm2 = 0.0;
            for (double x : v) {
                vnorm2 += x * x;
            }
            if (vnorm2 > 0.0) {
                const double inv = 1.0 / std::sqrt(vnorm2);
                for (double& x : v) {
                    x *= inv;
                }
                for (std::size_t c = j; c < r; ++c) {
                    std::vector<double>& target = a[c];
                    double proj = 0.0;
                    for (std::size_t i = j; i < d; ++i) {
                        proj += v[i - j] * target[i];
                    }
                    proj *= 2.0;
                    for (std::size_t i = j; i < d; ++i) {
                        target[i] -= proj * v[i - j];
                    }
                }
            } else {
                std::fill(v.begin(), v.end(), 0.0);
            }
        }
        reflectors[j] = std::move(v);
    }

    Tensor rmat({r, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = i; j < r; ++j) {
            rmat.at(i, j) = a[j][i];
        }
    }
    // Q = H_0 ⋯ H_{r−1} applied to the first r columns of the identity.
    std::vector<std::vector<double>> qcols(r, std::vector<double>(d, 0.0));
    for (std::size_t j = 0; j < r; ++j) {
        qcols[j][j] = 1.0;
    }
    for (std::size_t k = r; k-- > 0;) {
        const std::vector<double>& v = reflectors[k];
        for (std::size_t c = 0; c < r; ++c) {
            std::vector<double>& target = qcols[c];
            double proj = 0.0;
            for (std::size_t i = k; i < d; ++i) {
                proj += v[i - k] * target[i];
            }
            proj *= 2.0;
            if (proj != 0.0) {
                for (std::size_t i = k; i < d; ++i) {
                    target[i] -= proj * v[i - k];
                }
            }
        }
    }
    // Sign convention diag(R) ≥ 0 makes the factorization unique.
    for (std::size_t i = 0; i < r; ++i) {
        if (rmat.at(i, i) < 0.0) {
            for (std::size_t j = i; j < r; ++j) {
                rmat.at(i, j) = -rmat.at(i, j);
            }
            for (double& x : qcols[i]) {
                x = -x;
            }
        }
    }
    const double mnorm = frobenius_norm(m);
    double min_diag = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r; ++i) {
        min_diag = std::min(min_diag, std::abs(rmat.at(i, i)));
    }
    if (r > 0 && !(min_diag >= 1e-10 * mnorm && mnorm > 0.0)) {
        fail(ErrorKind::DegenerateBasis, "matrix " + shape_string(m.shape()) + " has effective column rank below " +
                                             std::to_string(r) + " (min |R_ii| = " + std::to_string(min_diag) + ")");
    }
    Tensor q({d, r});
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            q.at(i, j) = qcols[j][i];
        }
    }
    return QrResult{OrthoBasis(std::move(q), digest(m)), std::move(rmat)};
}

Tensor qr_backward(const Tensor& m, const Tensor& q, const Tensor& r, const Tensor& q_adjoint) {
    require(q.shape() == m.shape() && q_adjoint.shape() == m.shape(), ErrorKind::Dimension,
            "qr_backward: Q, Q̄ and M must share a shape");
    const std::size_t n = r.rows();
    require(r.shape() == Shape{n, n} && n == m.cols(), ErrorKind::Dimension, "qr_backward: R must be r×r");
    if (n == 0) {
        return Tensor(m.shape());
    }
    const double cond = condition_number(r);
    require(cond <= 1e12, ErrorKind::Numeric, "qr_backward: R is ill-conditioned (cond " + std::to_string(cond) + ")");

    // C = copyltu(−Q̄ᵀQ): lower triangle mirrored into the upper.
    Tensor c = matmul_tn(q_adjoint, q);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            c.at(i, j) = -c.at(i, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            c.at(i, j) = c.at(j, i);
        }
    }
    Tensor b = matmul(q, c);
    for (std::size_t i = 0; i < b.size(); ++i) {
        b[i] += q_adjoint[i];
    }
    // Solve X Rᵀ = B row by row: Σ_k x_k R_jk = b_j, R upper triangular.
    Tensor x(m.shape());
    for (std::size_t row = 0; row < b.rows(); ++row) {
        const auto bi = b.row(row);
        auto xi = x.row(row);
        for (std::size_t j = n; j-- > 0;) {
            double s = bi[j];
            for (std::size_t k = j + 1; k < n; ++k) {
                s -= xi[k] * r.at(j, k);
            }
            xi[j] = s / r.at(j, j);
        }
    }
    return x;
}

namespace {

void require_compatible(const Tensor& x, const OrthoBasis& basis) {
    require(x.ndim() == 2 && x.cols() == basis.dim(), ErrorKind::Dimension,
            "rows of " + shape_string(x.shape()) + " do not live in the basis space of dimension " +
                std::to_string(basis.dim()));
}

}  // namespace

Tensor project_subspace(const Tensor& x, const OrthoBasis& basis) {
    require_compatible(x, basis);
    if (basis.rank() == 0) {
        return Tensor(x.shape());
    }
    return matmul_nt(matmul(x, basis.q()), basis.q());
}

Tensor remove_subspace(const Tensor& x, const OrthoBasis& basis) {
    require_compatible(x, basis);
    if (basis.rank() == 0) {
        return x;
    }
    return sub(x, project_subspace(x, basis));
}

Tensor projector(const OrthoBasis& basis) {
    if (basis.rank() == 0) {
        return Tensor({basis.dim(), basis.dim()});
    }
    return matmul_nt(basis.q(), basis.q());
}

Tensor complement_projector(const OrthoBasis& basis) { return sub(Tensor::identity(basis.dim()), projector(basis)); }

Svd svd_jacobi(const Tensor& a) {
    require(a.ndim() == 2, ErrorKind::Dimension, "svd expects a matrix");
    if (a.rows() < a.cols()) {
        Svd t = svd_jacobi(transpose(a));
        return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    // Rows of `w` are the columns of A; rows of `v` the columns of V.
    Tensor w = transpose(a);
    Tensor v = Tensor::identity(n);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* wp = w.row(p).data();
                double* wq = w.row(q).data();
                const double alpha = kernels::dot(m, wp, wp);
                const double beta = kernels::dot(m, wq, wq);
                const double gamma = kernels::dot(m, wp, wq);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i];
                    const double y = wq[i];
                    wp[i] = cs * x - sn * y;
                    wq[i] = sn * x + cs * y;
                }
                double* vp = v.row(p).data();
                double* vq = v.row(q).data();
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = cs * x - sn * y;
                    vq[i] = sn * x + cs * y;
                }
            }
        }
        if (!rotated) {
            break;
        }
    }
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = std::sqrt(kernels::dot(m, w.row(j).data(), w.row(j).data()));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });
    Svd out{Tensor({m, n}), std::vector<double>(n), Tensor({n, n})};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = sigma[j];
        const double inv = sigma[j] > 0.0 ? 1.0 / sigma[j] : 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            out.u.at(i, k) = w.at(j, i) * inv;
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.v.at(i, k) = v.at(j, i);
        }
    }
    return out;
}

std::vector<double> singular_values(const Tensor& a) { return svd_jacobi(a).sigma; }

std::size_t numerical_rank(const Tensor& m, double rel_tol) {
    require(rel_tol > 0.0 && rel_tol < 1.0, ErrorKind::Contract, "rel_tol must lie in (0, 1)");
    const Tensor mat = m.ndim() == 2 ? m : m.reshaped({m.rows(), m.cols()});
    if (mat.size() == 0) {
        return 0;
    }
    const std::vector<double> s = singular_values(mat);
    if (s.empty() || s.front() == 0.0) {
        return 0;
    }
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [&](double v) { return v > rel_tol * s.front(); }));
}

double condition_number(const Tensor& m) {
    const std::vector<double> s = singular_values(m);
    if (s.empty()) {
        return 1.0;
    }
    if (s.back() == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return s.front() / s.back();
}

std::vector<double> principal_angles(const OrthoBasis& a, const OrthoBasis& b) {
    require(a.dim() == b.dim(), ErrorKind::Dimension, "principal angles between subspaces of different spaces");
    // Let `wide` be the larger subspace; sines come from the part of the
    // smaller basis left over after projecting onto the larger one, cosines
    // from the cross-Gram. Small angles use the sine, large ones the cosine.
    const OrthoBasis& wide = a.rank() >= b.rank() ? a : b;
    const OrthoBasis& slim = a.rank() >= b.rank() ? b : a;
    const std::size_t k = slim.rank();
    if (k == 0) {
        return {};
    }
    const Tensor cross = matmul_tn(wide.q(), slim.q());
    std::vector<double> cosines = singular_values(cross);
    const Tensor residual = sub(slim.q(), matmul(wide.q(), cross));
    std::vector<double> sines = singular_values(residual);
    std::sort(cosines.begin(), cosines.end(), std::greater<>());
    std::sort(sines.begin(), sines.end());
    std::vector<double> angles(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double c = std::clamp(cosines[i], 0.0, 1.0);
        const double s = std::clamp(sines[i], 0.0, 1.0);
        angles[i] = c * c >= 0.5 ? std::asin(s) : std::acos(c);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

double max_principal_angle(const OrthoBasis& a, const OrthoBasis& b) {
    const std::vector<double> angles = principal_angles(a, b);
    return angles.empty() ? 0.0 : angles.back();
}

Tensor covariance(const Tensor& samples) {
    require(samples.ndim() == 2, ErrorKind::Dimension, "covariance expects [n × D] samples");
    const std::size_t n = samples.rows();
    const std::size_t d = samples.cols();
    require(n >= 1, ErrorKind::DegenerateStatistics, "covariance of zero samples");
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        kernels::axpy(d, 1.0, samples.row(i).data(), mean.data());
    }
    for (double& v : mean) {
        v /= static_cast<double>(n);
    }
    Tensor centered = samples;
    for (std::size_t i = 0; i < n; ++i) {
        kernels::axpy(d, -1.0, mean.data(), centered.row(i).data());
    }
    return scale(matmul_tn(centered, centered), 1.0 / static_cast<double>(n));
}

Anova anova_decompose(const Tensor& samples, std::span<const int> domains) {
    require(samples.ndim() == 2, ErrorKind::Dimension, "anova expects [n × D] samples");
    const std::size_t n = samples.rows();
    const std::size_t d = samples.cols();
    require(domains.size() == n, ErrorKind::Dimension, "one domain id per sample required");
    require(n >= 2, ErrorKind::DegenerateStatistics, "ANOVA needs at least two samples");

    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        groups[domains[i]].push_back(i);
    }
    Tensor total = covariance(samples);
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        kernels::axpy(d, 1.0 / static_cast<double>(n), samples.row(i).data(), mu.data());
    }
    Tensor within({d, d});
    Tensor between({d, d});
    for (const auto& [id, rows] : groups) {
        const double pi = static_cast<double>(rows.size()) / static_cast<double>(n);
        Tensor block({rows.size(), d});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy_n(samples.row(rows[i]).data(), d, block.row(i).data());
        }
        const Tensor cov_k = covariance(block);
        kernels::axpy(cov_k.size(), pi, cov_k.data(), within.data());
        std::vector<double> delta(d, 0.0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            kernels::axpy(d, 1.0 / static_cast<double>(rows.size()), block.row(i).data(), delta.data());
        }
        for (std::size_t c = 0; c < d; ++c) {
            delta[c] -= mu[c];
        }
        for (std::size_t i = 0; i < d; ++i) {
            kernels::axpy(d, pi * delta[i], delta.data(), between.row(i).data());
        }
    }
    return Anova{std::move(within), std::move(between), std::move(total)};
}

OrthoBasis top_left_singular_basis(const Tensor& a, std::size_t count) {
    const Svd s = svd_jacobi(a);
    require(count <= s.u.cols(), ErrorKind::Dimension, "requested more singular vectors than exist");
    return qr_orthonormalize(slice_cols(s.u, 0, count)).basis;
}

}  // namespace lror::ortho
