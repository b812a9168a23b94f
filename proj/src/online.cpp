#include "travbev/online.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <string>

#include "travbev/errors.hpp"
#include "travbev/training.hpp"

namespace travbev {

namespace {

constexpr double kUnitTolerance = 1e-5;

bool is_finite(const Eigen::VectorXd& v) {
  return v.allFinite();
}

}  // namespace

PrototypeQueue::PrototypeQueue(int dim, const PrototypeQueueConfig& config)
    : dim_(dim), config_(config) {
  if (dim < 1) {
    throw ConfigError("prototype dimension must be positive");
  }
  if (!(config.alpha > 0.0) || !(config.alpha <= 1.0)) {
    throw ConfigError("similarity threshold must lie in (0, 1]");
  }
  if (!(config.momentum >= 0.0) || !(config.momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (config.capacity < 1) {
    throw ConfigError("queue capacity must be positive");
  }
}

PrototypeQueue::Update PrototypeQueue::update(const Eigen::VectorXd& z) {
  if (z.size() != dim_) {
    throw ConfigError("sample dimension does not match the queue");
  }
  if (!is_finite(z)) {
    ++rejected_;
    return Update::kRejected;
  }
  if (std::abs(z.norm() - 1.0) > kUnitTolerance) {
    throw ConfigError("queue samples must be unit length");
  }

  if (prototypes_.empty()) {
    prototypes_.push_back(z);
    ++version_;
    return Update::kInserted;
  }

  std::size_t best = 0;
  double best_sim = prototypes_[0].dot(z);
  for (std::size_t i = 1; i < prototypes_.size(); ++i) {
    const double s = prototypes_[i].dot(z);
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }

  if (best_sim < config_.alpha) {
    if (prototypes_.size() == config_.capacity) {
      prototypes_.pop_front();
    }
    prototypes_.push_back(z);
    ++version_;
    return Update::kAppended;
  }

  Eigen::VectorXd blended =
      config_.momentum * prototypes_[best] + (1.0 - config_.momentum) * z;
  // The momentum share dominates, so the blend can never vanish.
  blended /= blended.norm();
  prototypes_[best] = blended;
  ++version_;
  return Update::kMerged;
}

Eigen::MatrixXd PrototypeQueue::snapshot() const {
  Eigen::MatrixXd out(dim_, static_cast<Eigen::Index>(prototypes_.size()));
  for (std::size_t i = 0; i < prototypes_.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = prototypes_[i];
  }
  return out;
}

void save_queue(const PrototypeQueue& queue,
                const std::filesystem::path& path) {
  const nlohmann::json header = {
      {"D", queue.dim()},
      {"alpha", queue.config().alpha},
      {"momentum", queue.config().momentum},
      {"count", queue.size()},
  };
  const std::string meta = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open queue file for writing: " + path.string());
  }
  const std::uint32_t len = static_cast<std::uint32_t>(meta.size());
  unsigned char len_le[4] = {
      static_cast<unsigned char>(len & 0xff),
      static_cast<unsigned char>((len >> 8) & 0xff),
      static_cast<unsigned char>((len >> 16) & 0xff),
      static_cast<unsigned char>((len >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(len_le), 4);
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  std::vector<float> block;
  block.reserve(queue.size() * static_cast<std::size_t>(queue.dim()));
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const Eigen::VectorXd& v = queue.at(i);
    for (Eigen::Index r = 0; r < v.size(); ++r) {
      block.push_back(static_cast<float>(v[r]));
    }
  }
  out.write(reinterpret_cast<const char*>(block.data()),
            static_cast<std::streamsize>(block.size() * sizeof(float)));
  if (!out) {
    throw IoError("failed writing queue file: " + path.string());
  }
}

PrototypeQueue load_queue(const std::filesystem::path& path,
                          std::size_t capacity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open queue file: " + path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 4) {
    throw FormatError("queue file is truncated");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t len = static_cast<std::uint32_t>(u[0]) |
                            (static_cast<std::uint32_t>(u[1]) << 8) |
                            (static_cast<std::uint32_t>(u[2]) << 16) |
                            (static_cast<std::uint32_t>(u[3]) << 24);
  if (bytes.size() < 4 + static_cast<std::size_t>(len)) {
    throw FormatError("queue header is truncated");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
  } catch (const nlohmann::json::exception&) {
    throw FormatError("queue header is not valid JSON");
  }
  int dim = 0;
  std::size_t count = 0;
  PrototypeQueueConfig config;
  config.capacity = capacity;
  try {
    dim = header.at("D").get<int>();
    config.alpha = header.at("alpha").get<double>();
    config.momentum = header.at("momentum").get<double>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("queue header is missing a required field");
  }
  if (dim < 1) {
    throw FormatError("queue header has a non-positive dimension");
  }
  if (count > capacity) {
    throw ConfigError("stored queue exceeds the requested capacity");
  }

  const std::size_t expected =
      count * static_cast<std::size_t>(dim) * sizeof(float);
  const std::size_t have = bytes.size() - 4 - len;
  if (have != expected) {
    throw FormatError("queue block size does not match the header");
  }

  PrototypeQueue queue(dim, config);
  const char* cursor = bytes.data() + 4 + len;
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::VectorXd v(dim);
    for (int r = 0; r < dim; ++r) {
      float f;
      std::memcpy(&f, cursor, sizeof(float));
      cursor += sizeof(float);
      v[r] = static_cast<double>(f);
    }
    if (!v.allFinite()) {
      throw FormatError("queue file holds a non-finite prototype");
    }
    if (std::abs(v.norm() - 1.0) > kUnitTolerance) {
      throw FormatError("queue file holds a non-unit prototype");
    }
    queue.prototypes_.push_back(std::move(v));
  }
  queue.version_ = count;
  return queue;
}

TraversabilityMap TraversabilityMap::make(const GridSpec& spec,
                                          double timestamp) {
  TraversabilityMap map;
  map.spec = spec;
  map.timestamp = timestamp;
  map.values.assign(spec.cell_count(), 0.0);
  return map;
}

TraversabilityMap traversability_map(const Tensor& features,
                                     const PrototypeQueue& queue,
                                     const BevGrid& bev) {
  if (features.height != bev.spec.height_cells ||
      features.width != bev.spec.width_cells) {
    throw ConfigError("feature map does not match the grid");
  }
  TraversabilityMap map = TraversabilityMap::make(bev.spec, bev.timestamp);
  if (queue.empty()) {
    map.cold_start = true;
    return map;
  }
  if (features.channels != queue.dim()) {
    throw ConfigError("feature dimension does not match the queue");
  }

  const Eigen::MatrixXd protos = queue.snapshot();
  // Unit features against unit prototypes: the dot product is the cosine.
  const Eigen::MatrixXd sims = protos.transpose() * features.data;
  const Eigen::RowVectorXd best = sims.colwise().maxCoeff();
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!bev.occupancy[i]) continue;
    map.values[i] =
        std::clamp(best[static_cast<Eigen::Index>(i)], 0.0, 1.0);
  }
  return map;
}

std::vector<Eigen::VectorXd> extract_traversed_features(
    const Tensor& features, const BevGrid& bev,
    const std::vector<Pose>& trajectory, const WheelFootprint& fp,
    const Pose& pose_now, double window_s, int max_samples, Rng& rng) {
  if (features.height != bev.spec.height_cells ||
      features.width != bev.spec.width_cells) {
    throw ConfigError("feature map does not match the grid");
  }
  if (window_s < 0.0) {
    throw ConfigError("trajectory window must be non-negative");
  }
  if (max_samples < 0) {
    throw ConfigError("sample cap must be non-negative");
  }

  // Only the recent past drives the queue; future poses are ignored.
  std::vector<Pose> recent;
  for (const Pose& p : trajectory) {
    const double dt = pose_now.timestamp - p.timestamp;
    if (dt >= 0.0 && dt <= window_s) {
      recent.push_back(p);
    }
  }
  if (recent.empty() || max_samples == 0) {
    return {};
  }

  const CellList swept =
      footprint_cells(recent, fp, pose_now, bev.spec, window_s);
  std::vector<std::pair<int, int>> observed;
  for (const auto& [row, col] : swept) {
    if (bev.occupied(row, col)) {
      observed.push_back({row, col});
    }
  }
  if (observed.empty()) {
    return {};
  }

  std::vector<std::size_t> chosen;
  if (observed.size() > static_cast<std::size_t>(max_samples)) {
    chosen = rng.sample_without_replacement(
        observed.size(), static_cast<std::size_t>(max_samples));
    std::sort(chosen.begin(), chosen.end());  // keep temporal order
  } else {
    chosen.resize(observed.size());
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  }

  std::vector<Eigen::VectorXd> out;
  out.reserve(chosen.size());
  for (const std::size_t i : chosen) {
    const auto& [row, col] = observed[i];
    out.push_back(features.data.col(features.column(row, col)));
  }
  return out;
}

OnlineEngine::OnlineEngine(FeatureNet net, const WheelFootprint& fp,
                           const OnlineConfig& config)
    : net_(std::move(net)),
      fp_(fp),
      config_(config),
      queue_(net_.arch().embed_dim, config.queue),
      rng_(config.seed) {
  if (!fp_.is_valid()) {
    throw ConfigError("invalid wheel footprint");
  }
  if (config_.window_s < 0.0 || config_.max_samples < 0) {
    throw ConfigError("invalid online configuration");
  }
}

void OnlineEngine::set_queue(PrototypeQueue queue) {
  if (queue.dim() != net_.arch().embed_dim) {
    throw ConfigError("queue dimension does not match the model");
  }
  queue_ = std::move(queue);
}

OnlineSnapshot OnlineEngine::step(const BevGrid& bev, const Pose& pose,
                                  const std::vector<Pose>& trajectory) {
  const Tensor input = bev_to_tensor(bev);
  const Tensor z = net_.forward(input, /*train=*/false);

  const std::vector<Eigen::VectorXd> traversed = extract_traversed_features(
      z, bev, trajectory, fp_, pose, config_.window_s, config_.max_samples,
      rng_);
  if (!config_.frozen) {
    for (const Eigen::VectorXd& f : traversed) {
      queue_.update(f);
    }
  }

  OnlineSnapshot snap;
  snap.map = traversability_map(z, queue_, bev);
  snap.queue_version = queue_.version();
  snap.queue_size = queue_.size();
  return snap;
}

}  // namespace travbev
