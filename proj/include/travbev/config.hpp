#ifndef TRAVBEV_CONFIG_HPP
#define TRAVBEV_CONFIG_HPP

#include <filesystem>

#include "travbev/bev_builder.hpp"
#include "travbev/geometry.hpp"
#include "travbev/io.hpp"
#include "travbev/nn.hpp"
#include "travbev/online.hpp"
#include "travbev/synth.hpp"
#include "travbev/training.hpp"

namespace travbev {

/// Everything the pipeline stages need, bundled. The JSON config file has
/// one optional section per member; omitted sections and fields keep
/// their defaults, unknown keys are rejected.
struct PipelineConfig {
  GridSpec grid;                 // "grid"
  AccumulatorParams accumulator; // "accumulator"
  WheelFootprint footprint = WheelFootprint::box(1.0, 0.8);  // "footprint"
  double label_horizon_s = 10.0; // "autolabel"
  NetArch arch;                  // "model"
  TrainConfig train;             // "train"
  OnlineConfig online;           // "online"
  SceneSpec scene;               // "scene"
  DriveSpec drive;               // "drive"  (its grid follows "grid")
};

/// Parses a config JSON document over the defaults. Throws ConfigError on
/// unknown keys or invalid values and FormatError on non-object input.
PipelineConfig config_from_json(const Json& j);

/// Loads and parses a config file; a missing path throws IoError.
PipelineConfig load_config(const std::filesystem::path& path);

/// Full echo of a config, section by section; round-trips through
/// config_from_json.
Json config_to_json(const PipelineConfig& config);

}  // namespace travbev

#endif  // TRAVBEV_CONFIG_HPP
