#ifndef TRAVBEV_EVALUATION_HPP
#define TRAVBEV_EVALUATION_HPP

#include <cstdint>
#include <vector>

namespace travbev {

/// Threshold-free and best-threshold summary of one score set.
struct BinaryMetrics {
  double auroc = 0.0;
  double average_precision = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;  // the argmax threshold behind `f1`
  double precision = 0.0;
  double recall = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Probability that a random positive outranks a random negative, with
/// ties counted half (average-rank form). Throws MetricError unless both
/// classes are present.
double roc_auc(const std::vector<double>& scores,
               const std::vector<std::uint8_t>& is_positive);

/// Step-wise area under the precision-recall curve; tied scores are
/// grouped into one step. Throws MetricError unless a positive exists.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& is_positive);

struct F1Point {
  double f1 = 0.0;
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Best F1 over the rule "predict positive when score >= threshold",
/// scanning the distinct scores; equal F1 resolves to the higher
/// threshold. Throws MetricError when no positive exists.
F1Point optimal_f1(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& is_positive);

/// All three metrics over one pooled score set.
BinaryMetrics compute_binary_metrics(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& is_positive);

struct FrameMetrics {
  double auroc = 0.0;
  double average_precision = 0.0;
  double f1 = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  bool degenerate = false;  // missing class; excluded from macro means
};

/// Micro (pooled) metrics plus per-frame macro means over the frames that
/// carry both classes. Throws MetricError when the pooled set is
/// single-class or empty.
struct EvalReport {
  BinaryMetrics pooled;
  double macro_auroc = 0.0;
  double macro_average_precision = 0.0;
  double macro_f1 = 0.0;
  std::size_t frames_scored = 0;      // frames entering the macro means
  std::size_t frames_degenerate = 0;  // skipped single-class frames
  std::vector<FrameMetrics> frames;
};

EvalReport evaluate_frames(
    const std::vector<std::vector<double>>& frame_scores,
    const std::vector<std::vector<std::uint8_t>>& frame_labels);

}  // namespace travbev

#endif  // TRAVBEV_EVALUATION_HPP
