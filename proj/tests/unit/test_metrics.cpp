// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../support/oracles.hpp"
#include "lror/error.hpp"
#include "lror/metrics.hpp"

namespace lror::metrics {
namespace {

ScoredLabels view(const std::vector<double>& s, const std::vector<int>& y) { return {s, y}; }

TEST(Auc, HandExamples) {
    EXPECT_DOUBLE_EQ(auc(view({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75);
    EXPECT_DOUBLE_EQ(auc(view({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(auc(view({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1})), 0.0);
    EXPECT_DOUBLE_EQ(auc(view({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1})), 0.5);
}

TEST(Ap, HandExamples) {
    // Ranked: 0.8(+) 0.4(−) 0.35(+) 0.1(−) → (1 + 2/3)/2.
    EXPECT_NEAR(average_precision(view({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 5.0 / 6.0, 1e-15);
    EXPECT_DOUBLE_EQ(average_precision(view({3, 2, 1}, {1, 0, 0})), 1.0);
    EXPECT_NEAR(average_precision(view({3, 2, 1}, {0, 0, 1})), 1.0 / 3.0, 1e-15);
}

TEST(Eer, HandExamples) {
    EXPECT_DOUBLE_EQ(eer(view({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})), 0.0);
    EXPECT_DOUBLE_EQ(eer(view({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1})), 1.0);
    EXPECT_NEAR(eer(view({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.5, 1e-12);
}

TEST(Accuracy, Threshold) {
    EXPECT_DOUBLE_EQ(accuracy(view({0.2, 0.6, 0.5, 0.4}, {0, 1, 1, 1})), 0.75);
    EXPECT_DOUBLE_EQ(accuracy(view({0.2, 0.6}, {0, 1}), 0.7), 0.5);
}

TEST(Metrics, SingleClassIsUndefined) {
    const std::vector<double> s{0.1, 0.2, 0.3};
    const std::vector<int> y{1, 1, 1};
    for (auto f : {auc, average_precision, eer}) {
        try {
            f(view(s, y));
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::MetricUndefined);
        }
    }
    const MetricsReport r = summarize(view(s, y));
    EXPECT_FALSE(r.auc.has_value());
    EXPECT_FALSE(r.ap.has_value());
    EXPECT_FALSE(r.eer.has_value());
    EXPECT_FALSE(r.undefined_reason.empty());
    EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
}

TEST(Metrics, LengthMismatchAndBadLabels) {
    EXPECT_THROW(auc(view({0.1, 0.2}, {0, 1, 1})), Error);
    EXPECT_THROW(auc(view({0.1, 0.2}, {0, 2})), Error);
}

TEST(Metrics, MatchOraclesOnRandomSets) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto set = testing::random_score_set(seed);
        const auto v = view(set.scores, set.labels);
        EXPECT_NEAR(auc(v), testing::oracle_auc(set.scores, set.labels), 1e-12) << seed;
        EXPECT_NEAR(average_precision(v), testing::oracle_ap(set.scores, set.labels), 1e-12) << seed;
        EXPECT_NEAR(eer(v), testing::oracle_eer(set.scores, set.labels), 1e-12) << seed;
    }
}

TEST(Metrics, FlippingLabelsComplementsAuc) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto set = testing::random_score_set(seed);
        const double a = auc(view(set.scores, set.labels));
        for (int& y : set.labels) y = 1 - y;
        EXPECT_NEAR(auc(view(set.scores, set.labels)), 1.0 - a, 1e-12);
    }
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto set = testing::random_score_set(seed);
        std::vector<double> t(set.scores.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(3.0 * set.scores[i]) - 7.0;
        const auto a = view(set.scores, set.labels);
        const auto b = view(t, set.labels);
        EXPECT_NEAR(auc(a), auc(b), 1e-12);
        EXPECT_NEAR(average_precision(a), average_precision(b), 1e-12);
        EXPECT_NEAR(eer(a), eer(b), 1e-12);
    }
}

TEST(Metrics, SummarizeCarriesAll) {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    const MetricsReport r = summarize(view(s, y));
    EXPECT_EQ(r.n, 4u);
    ASSERT_TRUE(r.auc.has_value());
    EXPECT_DOUBLE_EQ(*r.auc, 0.75);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
}

}  // namespace
}  // namespace lror::metrics
