// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lror/error.hpp"

namespace lror::metrics {

namespace {

struct Counts {
    std::size_t pos = 0;
    std::size_t neg = 0;
};

Counts check(ScoredLabels s, bool need_both) {
    require(s.scores.size() == s.labels.size(), ErrorKind::Dimension,
            "scores and labels differ in length: " + std::to_string(s.scores.size()) + " vs " +
                std::to_string(s.labels.size()));
    Counts c;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        if (s.labels[i] != 0 && s.labels[i] != 1) {
            fail(ErrorKind::Contract, "labels must be 0 or 1");
        }
        if (!std::isfinite(s.scores[i])) {
            fail(ErrorKind::Numeric, "non-finite score at index " + std::to_string(i));
        }
        (s.labels[i] == 1 ? c.pos : c.neg) += 1;
    }
    if (need_both) {
        require(c.pos > 0 && c.neg > 0, ErrorKind::MetricUndefined,
                "ranking metric needs both classes (positives " + std::to_string(c.pos) + ", negatives " +
                    std::to_string(c.neg) + ")");
    }
    return c;
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(ScoredLabels s) {
    std::vector<std::size_t> idx(s.scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    return idx;
}

// Cumulative (tp, fp) after each group of tied scores, highest group first.
struct Step {
    std::size_t tp;
    std::size_t fp;
};

std::vector<Step> threshold_steps(ScoredLabels s) {
    const auto idx = descending(s);
    std::vector<Step> steps;
    Step cur{0, 0};
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (s.labels[idx[i]] == 1 ? cur.tp : cur.fp) += 1;
        if (i + 1 == idx.size() || s.scores[idx[i + 1]] != s.scores[idx[i]]) {
            steps.push_back(cur);
        }
    }
    return steps;
}

}  // namespace

double auc(ScoredLabels s) {
    const Counts c = check(s, true);
    // Rank-sum with midranks for ties.
    std::vector<std::size_t> idx(s.scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        std::size_t pos_in_group = 0;
        while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
            pos_in_group += static_cast<std::size_t>(s.labels[idx[j]]);
            ++j;
        }
        // Twice the midrank of positions i+1..j keeps everything integral.
        const double twice_mid = static_cast<double>(i + 1 + j);
        pos_rank_sum += twice_mid * static_cast<double>(pos_in_group);
        i = j;
    }
    const double p = static_cast<double>(c.pos);
    const double n = static_cast<double>(c.neg);
    const double u2 = pos_rank_sum - p * (p + 1.0);  // 2·U
    return u2 / (2.0 * p * n);
}

double average_precision(ScoredLabels s) {
    const Counts c = check(s, true);
    double ap = 0.0;
    std::size_t prev_tp = 0;
    for (const Step& st : threshold_steps(s)) {
        if (st.tp > prev_tp) {
            const double recall_step = static_cast<double>(st.tp - prev_tp) / static_cast<double>(c.pos);
            const double precision = static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fp);
            ap += recall_step * precision;
        }
        prev_tp = st.tp;
    }
    return ap;
}

double eer(ScoredLabels s) {
    const Counts c = check(s, true);
    const double p = static_cast<double>(c.pos);
    const double n = static_cast<double>(c.neg);
    // Curve points from the threshold above every score downward.
    double prev_fpr = 0.0;
    double prev_d = 1.0;  // FNR − FPR at the starting point
    for (const Step& st : threshold_steps(s)) {
        const double fpr = static_cast<double>(st.fp) / n;
        const double fnr = 1.0 - static_cast<double>(st.tp) / p;
        const double d = fnr - fpr;
        if (d <= 0.0) {
            if (d == 0.0) {
                return fpr;
            }
            const double lambda = prev_d / (prev_d - d);
            return prev_fpr + lambda * (fpr - prev_fpr);
        }
        prev_fpr = fpr;
        prev_d = d;
    }
    // The last point has FPR = 1, FNR = 0, so the loop always returns.
    fail(ErrorKind::Consistency, "EER sweep did not cross");
}

double accuracy(ScoredLabels s, double threshold) {
    check(s, false);
    require(!s.scores.empty(), ErrorKind::MetricUndefined, "accuracy of an empty set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        const int pred = s.scores[i] >= threshold ? 1 : 0;
        hit += pred == s.labels[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(s.scores.size());
}

MetricsReport summarize(ScoredLabels s) {
    MetricsReport r;
    r.n = s.scores.size();
    r.accuracy = accuracy(s);
    try {
        r.auc = auc(s);
        r.ap = average_precision(s);
        r.eer = eer(s);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::MetricUndefined) {
            throw;
        }
        r.auc.reset();
        r.ap.reset();
        r.eer.reset();
        r.undefined_reason = e.what();
    }
    return r;
}

}  // namespace lror::metrics
