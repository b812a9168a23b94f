#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "travbev/errors.hpp"
#include "travbev/evaluation.hpp"
#include "travbev/rng.hpp"

using namespace travbev;

namespace {

/// Pair-counting reference: P(score_pos > score_neg) with ties half.
double auc_oracle(const std::vector<double>& scores,
                  const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  for (std::uint8_t l : labels) {
    if (l == 0) ++neg;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Step-integration reference built on brute-force threshold counts.
double ap_oracle(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& labels) {
  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double total_pos = 0.0;
  for (std::uint8_t l : labels) total_pos += (l != 0) ? 1.0 : 0.0;

  double ap = 0.0;
  double prev_recall = 0.0;
  for (const double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        predicted += 1.0;
        if (labels[i] != 0) tp += 1.0;
      }
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

/// Exhaustive threshold scan; equal best keeps the higher threshold.
F1Point f1_oracle(const std::vector<double>& scores,
                  const std::vector<std::uint8_t>& labels) {
  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double total_pos = 0.0;
  for (std::uint8_t l : labels) total_pos += (l != 0) ? 1.0 : 0.0;

  F1Point best;
  bool have = false;
  for (const double t : thresholds) {  // ascending: >= keeps the higher t
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        predicted += 1.0;
        if (labels[i] != 0) tp += 1.0;
      }
    }
    const double precision = tp / predicted;
    const double recall = tp / total_pos;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    if (!have || f1 >= best.f1) {
      best = F1Point{f1, t, precision, recall};
      have = true;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("ranking quality matches hand-worked examples") {
  const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> labels = {0, 0, 1, 1};
  // Three of the four positive/negative pairs rank correctly.
  CHECK(roc_auc(scores, labels) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK(roc_auc({0.2, 0.9}, {0, 1}) == doctest::Approx(1.0));
  CHECK(roc_auc({0.9, 0.2}, {0, 1}) == doctest::Approx(0.0));
  // A constant score cannot rank at all.
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // A tie between one positive and one negative counts half.
  CHECK(roc_auc({0.7, 0.7, 0.1}, {1, 0, 0}) ==
        doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("ranking quality matches a pair-counting reference") {
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + rng.uniform_index(180);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // One decimal place forces plenty of exact ties.
      scores[i] = std::round(rng.uniform() * 10.0) / 10.0;
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
      (labels[i] != 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos) labels[0] = 1;
    if (!has_neg) labels[1] = 0;
    CHECK(roc_auc(scores, labels) ==
          doctest::Approx(auc_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("precision-recall area matches hand-worked examples") {
  // Hits at ranks 1 and 3: (1 + 2/3) / 2.
  CHECK(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  // Hits at ranks 1, 3, 4: (1 + 2/3 + 3/4) / 3.
  CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 1}) ==
        doctest::Approx(29.0 / 36.0).epsilon(1e-12));
  CHECK(average_precision({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
  // A tied block is one step: precision 1/2 at full recall.
  CHECK(average_precision({0.5, 0.5}, {1, 0}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Tie handling is order independent.
  CHECK(average_precision({0.5, 0.5}, {0, 1}) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("precision-recall area matches a threshold-counting reference") {
  Rng rng(92);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + rng.uniform_index(180);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    bool has_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform() * 10.0) / 10.0;
      labels[i] = rng.uniform() < 0.3 ? 1 : 0;
      has_pos = has_pos || labels[i] != 0;
    }
    if (!has_pos) labels[0] = 1;
    CHECK(average_precision(scores, labels) ==
          doctest::Approx(ap_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("best threshold search matches hand-worked examples") {
  const F1Point best = optimal_f1({0.9, 0.8, 0.3}, {1, 1, 0});
  CHECK(best.f1 == doctest::Approx(1.0));
  CHECK(best.threshold == doctest::Approx(0.8));
  CHECK(best.precision == doctest::Approx(1.0));
  CHECK(best.recall == doctest::Approx(1.0));

  // Accepting everything beats the stricter cuts here.
  const F1Point loose = optimal_f1({0.9, 0.6, 0.3, 0.2}, {1, 0, 1, 0});
  CHECK(loose.f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(loose.threshold == doctest::Approx(0.3));
}

TEST_CASE("best threshold search matches an exhaustive reference") {
  Rng rng(93);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.uniform_index(90);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    bool has_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform() * 10.0) / 10.0;
      labels[i] = rng.uniform() < 0.5 ? 1 : 0;
      has_pos = has_pos || labels[i] != 0;
    }
    if (!has_pos) labels[0] = 1;
    const F1Point got = optimal_f1(scores, labels);
    const F1Point want = f1_oracle(scores, labels);
    CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
    // Equal-quality thresholds resolve identically (to the higher one).
    CHECK(got.threshold == want.threshold);
    CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
    CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
  }
}

TEST_CASE("metrics reject inputs they are undefined on") {
  CHECK_THROWS_AS(roc_auc({}, {}), MetricError);
  CHECK_THROWS_AS(roc_auc({0.5}, {1, 0}), MetricError);
  CHECK_THROWS_AS(roc_auc({0.5, 0.6}, {1, 1}), MetricError);
  CHECK_THROWS_AS(roc_auc({0.5, 0.6}, {0, 0}), MetricError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(roc_auc({0.5, nan}, {1, 0}), MetricError);
  CHECK_THROWS_AS(average_precision({0.5, 0.6}, {0, 0}), MetricError);
  CHECK_THROWS_AS(optimal_f1({0.5, 0.6}, {0, 0}), MetricError);
  // No negatives is fine for precision-recall style metrics.
  CHECK(average_precision({0.5, 0.6}, {1, 1}) == doctest::Approx(1.0));
  CHECK(optimal_f1({0.5, 0.6}, {1, 1}).f1 == doctest::Approx(1.0));
}

TEST_CASE("the combined summary bundles all three metrics") {
  const std::vector<double> scores = {0.9, 0.8, 0.7, 0.2};
  const std::vector<std::uint8_t> labels = {1, 0, 1, 0};
  const BinaryMetrics m = compute_binary_metrics(scores, labels);
  CHECK(m.positives == 2);
  CHECK(m.negatives == 2);
  CHECK(m.auroc == doctest::Approx(roc_auc(scores, labels)));
  CHECK(m.average_precision ==
        doctest::Approx(average_precision(scores, labels)));
  const F1Point f = optimal_f1(scores, labels);
  CHECK(m.f1 == doctest::Approx(f.f1));
  CHECK(m.threshold == doctest::Approx(f.threshold));
}

TEST_CASE("frame evaluation pools cells and averages healthy frames") {
  const std::vector<std::vector<double>> scores = {
      {0.9, 0.2, 0.8, 0.1},
      {0.7, 0.6, 0.3},
      {0.5, 0.4},  // single-class: excluded from the macro means
  };
  const std::vector<std::vector<std::uint8_t>> labels = {
      {1, 0, 1, 0},
      {1, 0, 0},
      {1, 1},
  };

  const EvalReport report = evaluate_frames(scores, labels);
  REQUIRE(report.frames.size() == 3);
  CHECK(report.frames_scored == 2);
  CHECK(report.frames_degenerate == 1);
  CHECK_FALSE(report.frames[0].degenerate);
  CHECK_FALSE(report.frames[1].degenerate);
  CHECK(report.frames[2].degenerate);
  CHECK(report.frames[2].auroc == 0.0);

  CHECK(report.frames[0].auroc ==
        doctest::Approx(roc_auc(scores[0], labels[0])));
  CHECK(report.frames[1].auroc ==
        doctest::Approx(roc_auc(scores[1], labels[1])));
  CHECK(report.macro_auroc ==
        doctest::Approx(0.5 * (report.frames[0].auroc +
                               report.frames[1].auroc)));
  CHECK(report.macro_f1 ==
        doctest::Approx(0.5 * (report.frames[0].f1 + report.frames[1].f1)));

  // The pooled summary sees every cell, including the degenerate frame's.
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_labels;
  for (std::size_t f = 0; f < scores.size(); ++f) {
    all_scores.insert(all_scores.end(), scores[f].begin(), scores[f].end());
    all_labels.insert(all_labels.end(), labels[f].begin(), labels[f].end());
  }
  CHECK(report.pooled.positives == 5);
  CHECK(report.pooled.negatives == 4);
  CHECK(report.pooled.auroc ==
        doctest::Approx(roc_auc(all_scores, all_labels)));
  CHECK(report.pooled.average_precision ==
        doctest::Approx(average_precision(all_scores, all_labels)));

  CHECK_THROWS_AS(evaluate_frames({{0.5}}, {{1}, {0}}), MetricError);
  CHECK_THROWS_AS(evaluate_frames({{0.5, 0.6}}, {{1}}), MetricError);
  // Pooled single-class input cannot be summarized.
  CHECK_THROWS_AS(evaluate_frames({{0.5}, {0.6}}, {{1}, {1}}), MetricError);
}
