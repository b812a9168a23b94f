#ifndef TRAVBEV_CHECKPOINT_HPP
#define TRAVBEV_CHECKPOINT_HPP

#include <filesystem>
#include <nlohmann/json.hpp>

#include "travbev/nn.hpp"

namespace travbev {

/// Binary model file: "TRAVBEV1" magic, uint32 little-endian metadata
/// length, metadata JSON (the architecture plus optional training info),
/// float32 parameter block, then a CRC32 over everything before it.
struct Checkpoint {
  NetArch arch;
  std::vector<float> parameters;
  nlohmann::json extra;  // optional training metadata, may be null

  static Checkpoint from_net(const FeatureNet& net,
                             nlohmann::json extra = nullptr);
  FeatureNet to_net() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, truncation, CRC mismatch, or a
/// parameter block that does not match the declared architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace travbev

#endif  // TRAVBEV_CHECKPOINT_HPP
