#ifndef TRAVBEV_PIPELINE_HPP
#define TRAVBEV_PIPELINE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "travbev/config.hpp"
#include "travbev/evaluation.hpp"
#include "travbev/training.hpp"

namespace travbev {

// File-level stages behind the command-line interface. On-disk layout:
//
//   dataset dir   poses.csv, camera.json, dataset.json,
//                 clouds/NNNNNN.pts, images/NNNNNN.png,
//                 obstacles/NNNNNN.png, gt/NNNNNN.png
//   bev dir       bev/NNNNNN.png (RGB), bev/NNNNNN.json (timestamp, grid,
//                 pose), occupancy/NNNNNN.png
//   labels dir    labels/NNNNNN.png (palette), labels/NNNNNN.json
//   infer dir     costmaps/NNNNNN.png (16-bit, score * 65535),
//                 costmaps/NNNNNN.json, queue.bin
//
// When a dataset manifest (dataset.json) carries a grid, that grid wins
// over the configured one so every derived raster stays aligned to the
// recorded masks. Each stage writes only inside its output directory.

/// Frame index window [begin, end); end < 0 means "through the last frame".
struct FrameRange {
  int begin = 0;
  int end = -1;
};

/// Generates the synthetic drive configured by `scene` and `drive` and
/// writes the dataset layout. Returns the frame count.
int run_synth_stage(const PipelineConfig& config,
                    const std::filesystem::path& out_dir);

/// Folds each recorded cloud through the sliding-window accumulator and
/// writes per-frame BEV rasters plus sidecars. Returns the frame count.
int run_bev_stage(const PipelineConfig& config,
                  const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir);

struct AutolabelStats {
  int frames = 0;
  std::size_t conflict_cells = 0;  // traversed yet obstacle-flagged
};

/// Projects the driven footprint into every frame's grid and merges it
/// with the recorded obstacle masks into trichotomy label rasters.
AutolabelStats run_autolabel_stage(const PipelineConfig& config,
                                   const std::filesystem::path& data_dir,
                                   const std::filesystem::path& out_dir);

/// Trains the embedding network on the selected BEV/label frames, writing
/// model.ckpt and metrics.csv into out_dir. With zero epochs the
/// checkpoint holds the untouched initialization.
TrainResult run_train_stage(const PipelineConfig& config,
                            const std::filesystem::path& bev_dir,
                            const std::filesystem::path& labels_dir,
                            const std::filesystem::path& out_dir,
                            const FrameRange& range = {});

struct InferOptions {
  FrameRange range;
  bool frozen = false;  // disable prototype-queue updates
  std::optional<std::filesystem::path> initial_queue;  // seed queue file
};

struct InferStats {
  int frames = 0;
  std::size_t queue_size = 0;
  std::uint64_t queue_version = 0;
};

/// Streams the BEV frames through the online engine, writing 16-bit cost
/// maps, per-frame sidecars, and the final queue state (queue.bin).
InferStats run_infer_stage(const PipelineConfig& config,
                           const std::filesystem::path& bev_dir,
                           const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out_dir,
                           const InferOptions& options = {});

struct EvalStageResult {
  EvalReport report;
  Json json;  // serialized report, one entry per scored frame
};

/// Scores prediction rasters against label rasters, stem by stem. `pred_dir`
/// holds either 16-bit cost maps or palette label images (scored 1/0);
/// `gt_dir` holds palette label images. Unlabeled cells are excluded.
EvalStageResult run_eval_stage(const std::filesystem::path& pred_dir,
                               const std::filesystem::path& gt_dir,
                               const FrameRange& range = {});

/// Per-stage latency percentiles (milliseconds) over the first
/// `max_frames` BEV frames: network forward pass, prototype-queue update,
/// and cost-map computation, plus their per-frame combinations.
Json run_bench_stage(const PipelineConfig& config,
                     const std::filesystem::path& bev_dir,
                     const std::filesystem::path& checkpoint, int max_frames);

/// Sorted zero-padded frame stems of the `NNNNNN.ext` files in `dir`.
std::vector<std::string> list_frame_stems(const std::filesystem::path& dir,
                                          const std::string& extension);

}  // namespace travbev

#endif  // TRAVBEV_PIPELINE_HPP
