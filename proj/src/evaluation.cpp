#include "travbev/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "travbev/errors.hpp"

namespace travbev {

namespace {

void check_inputs(const std::vector<double>& scores,
                  const std::vector<std::uint8_t>& is_positive) {
  if (scores.size() != is_positive.size()) {
    throw MetricError("score and label counts differ");
  }
  if (scores.empty()) {
    throw MetricError("no samples to score");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw MetricError("non-finite score");
    }
  }
}

std::size_t count_positives(const std::vector<std::uint8_t>& is_positive) {
  std::size_t n = 0;
  for (std::uint8_t v : is_positive) {
    if (v != 0) ++n;
  }
  return n;
}

}  // namespace

double roc_auc(const std::vector<double>& scores,
               const std::vector<std::uint8_t>& is_positive) {
  check_inputs(scores, is_positive);
  const std::size_t n = scores.size();
  const std::size_t pos = count_positives(is_positive);
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw MetricError("ranking needs both classes present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average 1-based ranks within each tie group, then sum the ranks that
  // land on positives.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(neg));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& is_positive) {
  check_inputs(scores, is_positive);
  const std::size_t n = scores.size();
  const std::size_t pos = count_positives(is_positive);
  if (pos == 0) {
    throw MetricError("average precision needs a positive sample");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double block_tp = 0.0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (is_positive[order[j]] != 0) {
        block_tp += 1.0;
      }
      ++j;
    }
    const double block_fp = static_cast<double>(j - i) - block_tp;
    tp += block_tp;
    fp += block_fp;
    if (block_tp > 0.0) {
      const double precision_here = tp / (tp + fp);
      ap += precision_here * block_tp / static_cast<double>(pos);
    }
    i = j;
  }
  return ap;
}

F1Point optimal_f1(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& is_positive) {
  check_inputs(scores, is_positive);
  const std::size_t n = scores.size();
  const std::size_t pos = count_positives(is_positive);
  if (pos == 0) {
    throw MetricError("f1 needs a positive sample");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  F1Point best;
  bool have_best = false;
  double tp = 0.0;
  double predicted = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const double threshold = scores[order[i]];
    std::size_t j = i;
    while (j < n && scores[order[j]] == threshold) {
      if (is_positive[order[j]] != 0) tp += 1.0;
      predicted += 1.0;
      ++j;
    }
    const double precision = tp / predicted;
    const double recall = tp / static_cast<double>(pos);
    const double denom = precision + recall;
    const double f1 = denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
    // Strict > keeps the highest threshold among ties because the scan
    // visits thresholds in descending order.
    if (!have_best || f1 > best.f1) {
      best = F1Point{f1, threshold, precision, recall};
      have_best = true;
    }
    i = j;
  }
  return best;
}

BinaryMetrics compute_binary_metrics(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& is_positive) {
  BinaryMetrics m;
  m.positives = count_positives(is_positive);
  check_inputs(scores, is_positive);
  m.negatives = scores.size() - m.positives;
  m.auroc = roc_auc(scores, is_positive);
  m.average_precision = average_precision(scores, is_positive);
  const F1Point f = optimal_f1(scores, is_positive);
  m.f1 = f.f1;
  m.threshold = f.threshold;
  m.precision = f.precision;
  m.recall = f.recall;
  return m;
}

EvalReport evaluate_frames(
    const std::vector<std::vector<double>>& frame_scores,
    const std::vector<std::vector<std::uint8_t>>& frame_labels) {
  if (frame_scores.size() != frame_labels.size()) {
    throw MetricError("frame score and label counts differ");
  }
  EvalReport report;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_labels;
  double sum_auroc = 0.0;
  double sum_ap = 0.0;
  double sum_f1 = 0.0;
  for (std::size_t f = 0; f < frame_scores.size(); ++f) {
    const auto& s = frame_scores[f];
    const auto& l = frame_labels[f];
    if (s.size() != l.size()) {
      throw MetricError("frame score and label sizes differ");
    }
    pooled_scores.insert(pooled_scores.end(), s.begin(), s.end());
    pooled_labels.insert(pooled_labels.end(), l.begin(), l.end());

    FrameMetrics fm;
    fm.positives = count_positives(l);
    fm.negatives = l.size() - fm.positives;
    if (fm.positives == 0 || fm.negatives == 0) {
      fm.degenerate = true;
      ++report.frames_degenerate;
    } else {
      fm.auroc = roc_auc(s, l);
      fm.average_precision = average_precision(s, l);
      fm.f1 = optimal_f1(s, l).f1;
      sum_auroc += fm.auroc;
      sum_ap += fm.average_precision;
      sum_f1 += fm.f1;
      ++report.frames_scored;
    }
    report.frames.push_back(fm);
  }
  report.pooled = compute_binary_metrics(pooled_scores, pooled_labels);
  if (report.frames_scored > 0) {
    const double k = static_cast<double>(report.frames_scored);
    report.macro_auroc = sum_auroc / k;
    report.macro_average_precision = sum_ap / k;
    report.macro_f1 = sum_f1 / k;
  }
  return report;
}

}  // namespace travbev
