// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>

namespace lror::metrics {

/// Scores paired with {0,1} labels. Non-owning.
struct ScoredLabels {
    std::span<const double> scores;
    std::span<const int> labels;
};

// AUC, AP and EER need both classes present and throw MetricUndefined
// otherwise. Ties: AUC gives half credit; AP and EER sweep thresholds over
// distinct scores so tied samples always move together.
double auc(ScoredLabels s);
double average_precision(ScoredLabels s);
double eer(ScoredLabels s);
/// Fraction of samples where (score ≥ threshold) matches the label.
double accuracy(ScoredLabels s, double threshold = 0.5);

struct MetricsReport {
    std::size_t n = 0;
    double accuracy = 0.0;
    std::optional<double> auc;
    std::optional<double> ap;
    std::optional<double> eer;
    /// Why the ranking metrics are missing, when they are.
    std::string undefined_reason;
};

MetricsReport summarize(ScoredLabels s);

}  // namespace lror::metrics
