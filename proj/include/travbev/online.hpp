#ifndef TRAVBEV_ONLINE_HPP
#define TRAVBEV_ONLINE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

#include "travbev/autolabel.hpp"
#include "travbev/bev_builder.hpp"
#include "travbev/nn.hpp"
#include "travbev/rng.hpp"

namespace travbev {

struct PrototypeQueueConfig {
  double alpha = 0.9;      // cosine threshold for opening a new prototype
  double momentum = 0.99;  // blend weight kept by the matched prototype
  std::size_t capacity = 64;  // FIFO bound on stored prototypes
};

/// Ordered set of unit-norm direction prototypes grown online: a sample
/// either refines its best match (momentum blend, renormalized) or opens
/// a new prototype when no match reaches the threshold. At capacity the
/// oldest prototype is evicted to make room.
class PrototypeQueue {
 public:
  enum class Update {
    kInserted,  // first prototype of an empty queue
    kAppended,  // best match was below threshold
    kMerged,    // momentum blend into the best match
    kRejected,  // non-finite input, counted and ignored
  };

  explicit PrototypeQueue(int dim, const PrototypeQueueConfig& config = {});

  /// Folds one unit-norm sample into the queue.
  Update update(const Eigen::VectorXd& z);

  int dim() const { return dim_; }
  std::size_t size() const { return prototypes_.size(); }
  bool empty() const { return prototypes_.empty(); }
  const PrototypeQueueConfig& config() const { return config_; }
  /// Bumps on every accepted update; serves as the snapshot version.
  std::uint64_t version() const { return version_; }
  std::size_t rejected_count() const { return rejected_; }

  /// Prototypes as columns, oldest first (dim x size).
  Eigen::MatrixXd snapshot() const;
  const Eigen::VectorXd& at(std::size_t i) const { return prototypes_[i]; }

 private:
  friend PrototypeQueue load_queue(const std::filesystem::path& path,
                                   std::size_t capacity);
  int dim_;
  PrototypeQueueConfig config_;
  std::deque<Eigen::VectorXd> prototypes_;
  std::uint64_t version_ = 0;
  std::size_t rejected_ = 0;
};

/// Header {D, alpha, momentum, count} as length-prefixed JSON followed by
/// the prototype block as little-endian float32, oldest first.
void save_queue(const PrototypeQueue& queue,
                const std::filesystem::path& path);
/// Rebuilds a queue from `save_queue` output; `capacity` restores the
/// FIFO bound, which the file does not carry. Throws FormatError on
/// malformed files and ConfigError when the stored count exceeds the
/// capacity.
PrototypeQueue load_queue(const std::filesystem::path& path,
                          std::size_t capacity = 64);

/// Per-cell traversability in [0, 1] aligned to a BEV grid; unobserved
/// cells are forced to 0.
struct TraversabilityMap {
  GridSpec spec;
  double timestamp = 0.0;
  std::vector<double> values;  // row-major height x width
  bool cold_start = false;     // produced before any prototype existed

  static TraversabilityMap make(const GridSpec& spec, double timestamp = 0.0);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * spec.width_cells + col;
  }
  double at(int row, int col) const { return values[index(row, col)]; }
};

/// Best-match cosine against the queue, clamped to [0, 1], for every
/// occupied cell; an empty queue yields the all-zero cold-start map.
/// `features` must hold one embedding column per grid cell.
TraversabilityMap traversability_map(const Tensor& features,
                                     const PrototypeQueue& queue,
                                     const BevGrid& bev);

/// Embeddings under the recently driven footprint: cells swept within
/// `window_s` seconds before `pose_now`, restricted to observed cells,
/// subsampled to at most `max_samples` while preserving temporal order.
std::vector<Eigen::VectorXd> extract_traversed_features(
    const Tensor& features, const BevGrid& bev,
    const std::vector<Pose>& trajectory, const WheelFootprint& fp,
    const Pose& pose_now, double window_s, int max_samples, Rng& rng);

struct OnlineConfig {
  PrototypeQueueConfig queue;
  double window_s = 5.0;   // how far back the traversed-cell sweep looks
  int max_samples = 64;    // per-frame cap on queue updates
  bool frozen = false;     // keep the queue fixed (evaluation mode)
  std::uint64_t seed = 0;  // subsampling reproducibility
};

/// Immutable per-frame output: the map plus the queue state it was
/// computed against.
struct OnlineSnapshot {
  TraversabilityMap map;
  std::uint64_t queue_version = 0;
  std::size_t queue_size = 0;
};

/// Single-writer streaming loop: embed the frame, fold the traversed-cell
/// features into the prototype queue (unless frozen), then score every
/// observed cell against the queue.
class OnlineEngine {
 public:
  OnlineEngine(FeatureNet net, const WheelFootprint& fp,
               const OnlineConfig& config);

  OnlineSnapshot step(const BevGrid& bev, const Pose& pose,
                      const std::vector<Pose>& trajectory);

  const PrototypeQueue& queue() const { return queue_; }
  /// Replaces the queue wholesale (e.g. with a deserialized one).
  void set_queue(PrototypeQueue queue);
  const OnlineConfig& config() const { return config_; }

 private:
  FeatureNet net_;
  WheelFootprint fp_;
  OnlineConfig config_;
  PrototypeQueue queue_;
  Rng rng_;
};

}  // namespace travbev

#endif  // TRAVBEV_ONLINE_HPP
