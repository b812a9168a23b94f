#ifndef TRAVBEV_TRAINING_HPP
#define TRAVBEV_TRAINING_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "travbev/autolabel.hpp"
#include "travbev/bev_builder.hpp"
#include "travbev/nn.hpp"
#include "travbev/rng.hpp"

namespace travbev {

/// FIFO queue of fixed-dimension feature vectors (one column each).
class FeatureQueue {
 public:
  FeatureQueue(int dim, std::size_t capacity);

  void push(const Eigen::VectorXd& f);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int dim() const { return static_cast<int>(storage_.rows()); }
  /// Current contents, oldest first (dim x size).
  Eigen::MatrixXd snapshot() const;

 private:
  Eigen::MatrixXd storage_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;    // dim x k, unit columns
  std::vector<int> assignment;  // per input column
  int iterations = 0;
  bool converged = false;
};

/// Spherical Lloyd iteration with k-means++ seeding. Centroids are
/// renormalized every round; empty clusters restart from the point
/// farthest from its centroid. Ties always resolve to the lowest index.
/// Throws ClusterError when there are fewer points than clusters.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng,
                    int max_iterations = 100);

/// Independent clusterings of one feature set at several granularities.
struct PrototypeHierarchy {
  std::vector<Eigen::MatrixXd> levels;  // dim x k_m, unit columns

  std::size_t level_count() const { return levels.size(); }
  bool empty() const { return levels.empty(); }
};

/// One k-means pass per entry of `cluster_counts`; counts larger than the
/// point set are skipped (warm-up behavior).
PrototypeHierarchy build_hierarchy(const Eigen::MatrixXd& points,
                                   const std::vector<int>& cluster_counts,
                                   Rng& rng);

/// Index of the prototype most cosine-similar to z; ties resolve to the
/// lowest index. `prototypes` columns must be nonempty.
int nearest_prototype(const Eigen::VectorXd& z,
                      const Eigen::MatrixXd& prototypes);

/// Pre-drawn negative prototype indices, [level][sample][j]. Freezing the
/// draws keeps the loss a pure function of its feature inputs.
using NegativeDraws = std::vector<std::vector<std::vector<int>>>;

NegativeDraws draw_negatives(std::size_t n_samples,
                             const PrototypeHierarchy& negatives,
                             int count_per_sample, Rng& rng);

/// Anchor-positive alignment against the untraversable set, averaged over
/// ordered anchor/positive pairs; the normalizer sums only over the
/// opposing class. Requires >= 2 anchors and >= 1 opposing feature.
double contrast_loss(const Eigen::MatrixXd& z_trav,
                     const Eigen::MatrixXd& z_untrav, double tau,
                     Eigen::MatrixXd* grad_trav = nullptr,
                     Eigen::MatrixXd* grad_untrav = nullptr);

/// Prototype alignment at every granularity. In the default form the
/// normalizer is the positive term plus `draws` negatives; the literal
/// form uses the drawn negatives alone (draw one extra for it).
double proto_loss(const Eigen::MatrixXd& z,
                  const PrototypeHierarchy& positives,
                  const PrototypeHierarchy& negatives,
                  const NegativeDraws& draws, double tau,
                  bool literal_denominator,
                  Eigen::MatrixXd* grad = nullptr);

/// Pseudo-label assignment over the union of both hierarchies at level m:
/// trav prototypes first, then untrav; returns the union index.
int assign_unlabeled(const Eigen::VectorXd& z, const Eigen::MatrixXd& trav,
                     const Eigen::MatrixXd& untrav);

/// Alignment of perturbed features v = z + noise toward each sample's
/// pseudo-label prototype; assignment always uses the unperturbed z.
double unlabel_loss(const Eigen::MatrixXd& z_unlabel,
                    const PrototypeHierarchy& trav,
                    const PrototypeHierarchy& untrav,
                    const Eigen::MatrixXd& noise,
                    Eigen::MatrixXd* grad = nullptr);

/// Ablation switch over the combined objective.
enum class LossMode {
  kFull,           // alignment + both prototype terms
  kContrastOnly,   // drop the prototype terms
  kPrototypeOnly,  // drop the pairwise alignment term
};

struct TrainConfig {
  double tau = 0.05;
  double lambda_max = 1.0;
  int lambda_ramp_epochs = 60;
  std::vector<int> cluster_counts = {50, 100, 500};
  int negatives_per_sample = 8;  // r
  double sigma = 0.1;
  int pixels_per_class = 256;
  std::size_t queue_capacity = 4096;
  int epochs = 60;
  int batch_frames = 4;
  double learning_rate = 1e-4;
  double lr_decay_power = 0.9;
  bool literal_proto_denominator = false;
  LossMode loss_mode = LossMode::kFull;
  double divergence_limit = 1e6;
  std::uint64_t seed = 0;
};

/// One BEV frame ready for the optimizer.
struct TrainFrame {
  BevGrid bev;
  LabelMask labels;
};

/// Input planes for the network: RGB scaled to [0, 1], black where
/// unoccupied.
Tensor bev_to_tensor(const BevGrid& bev);

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_contrast = 0.0;
  double loss_cluster = 0.0;
  double loss_unlabel = 0.0;
  double lambda = 0.0;
  double learning_rate = 0.0;
  int skipped_contrast = 0;
  int skipped_cluster = 0;
  int skipped_unlabel = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

/// First-moment / second-moment adaptive step on float-stored parameters.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n_params, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::vector<float>& params, const std::vector<double>& grads,
            double lr);

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

/// Full optimization loop. Per epoch: rebuild both prototype hierarchies
/// from the feature queues, shuffle the frames, then take one adaptive
/// step per mini-batch with the ramped combined loss. Appends one CSV row
/// per epoch when `metrics_csv` is given. Throws DivergenceError when the
/// loss leaves the configured range.
TrainResult train_model(FeatureNet& net, const std::vector<TrainFrame>& frames,
                        const TrainConfig& config,
                        const std::filesystem::path* metrics_csv = nullptr);

}  // namespace travbev

#endif  // TRAVBEV_TRAINING_HPP
