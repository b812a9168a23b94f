#include "travbev/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <regex>
#include <utility>

#include "travbev/autolabel.hpp"
#include "travbev/checkpoint.hpp"
#include "travbev/errors.hpp"
#include "travbev/online.hpp"
#include "travbev/png_io.hpp"
#include "travbev/synth.hpp"

namespace travbev {
namespace {

namespace fs = std::filesystem;

GridSpec dataset_grid(const fs::path& data_dir, const GridSpec& fallback) {
  const fs::path manifest = data_dir / "dataset.json";
  if (!fs::exists(manifest)) return fallback;
  const Json j = load_json(manifest);
  auto it = j.find("grid");
  if (it == j.end()) return fallback;
  GridSpec grid;
  grid.width_cells = it->at("width_cells").get<int>();
  grid.height_cells = it->at("height_cells").get<int>();
  grid.resolution = it->at("resolution").get<double>();
  validate_grid(grid);
  return grid;
}

Json pose_to_json(const Pose& pose) {
  Json r = Json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(pose.rotation(i, k));
  }
  for (int i = 0; i < 3; ++i) r.push_back(pose.translation(i));
  return r;
}

Pose pose_from_json(const Json& r, double timestamp) {
  if (!r.is_array() || r.size() != 12) {
    throw FormatError("pose entry must hold 12 numbers");
  }
  Pose pose;
  pose.timestamp = timestamp;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      pose.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)].get<double>();
    }
  }
  for (int i = 0; i < 3; ++i) {
    pose.translation(i) = r[static_cast<std::size_t>(9 + i)].get<double>();
  }
  return pose;
}

struct BevFrameRef {
  std::string stem;
  double timestamp = 0.0;
  Pose pose;
  GridSpec spec;
};

/// Sidecar index of a BEV directory, sorted by stem.
std::vector<BevFrameRef> load_bev_index(const fs::path& bev_dir) {
  const std::vector<std::string> stems =
      list_frame_stems(bev_dir / "bev", ".json");
  if (stems.empty()) {
    throw IoError("no BEV frames found under " + bev_dir.string());
  }
  std::vector<BevFrameRef> refs;
  refs.reserve(stems.size());
  for (const std::string& stem : stems) {
    const Json j = load_json(bev_dir / "bev" / (stem + ".json"));
    BevFrameRef ref;
    ref.stem = stem;
    try {
      ref.timestamp = j.at("timestamp").get<double>();
      ref.spec.width_cells = j.at("width").get<int>();
      ref.spec.height_cells = j.at("height").get<int>();
      ref.spec.resolution = j.at("resolution").get<double>();
      ref.pose = pose_from_json(j.at("pose"), ref.timestamp);
    } catch (const Json::exception&) {
      throw FormatError("malformed BEV sidecar for frame " + stem);
    }
    validate_grid(ref.spec);
    refs.push_back(std::move(ref));
  }
  return refs;
}

BevGrid load_bev_frame(const fs::path& bev_dir, const BevFrameRef& ref) {
  const ImageU8 rgb = read_png_rgb8(bev_dir / "bev" / (ref.stem + ".png"));
  const ImageU8 occ =
      read_png_gray8(bev_dir / "occupancy" / (ref.stem + ".png"));
  return bev_from_images(rgb, occ, ref.spec, ref.timestamp);
}

void apply_range(const FrameRange& range, std::size_t total,
                 std::size_t* begin, std::size_t* end) {
  if (range.begin < 0) throw ConfigError("frame range begin must be >= 0");
  *begin = std::min<std::size_t>(static_cast<std::size_t>(range.begin), total);
  *end = range.end < 0
             ? total
             : std::min<std::size_t>(static_cast<std::size_t>(range.end), total);
  if (*end < *begin) throw ConfigError("frame range end precedes begin");
}

void create_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
}

Json metrics_to_json(const BinaryMetrics& m) {
  return {{"auroc", m.auroc},
          {"average_precision", m.average_precision},
          {"f1", m.f1},
          {"threshold", m.threshold},
          {"precision", m.precision},
          {"recall", m.recall},
          {"positives", m.positives},
          {"negatives", m.negatives}};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

Json latency_summary(const std::vector<double>& ms) {
  double total = 0.0;
  double peak = 0.0;
  for (double v : ms) {
    total += v;
    peak = std::max(peak, v);
  }
  return {{"p50_ms", percentile(ms, 0.50)},
          {"p90_ms", percentile(ms, 0.90)},
          {"mean_ms", ms.empty() ? 0.0 : total / static_cast<double>(ms.size())},
          {"max_ms", peak}};
}

}  // namespace

std::vector<std::string> list_frame_stems(const fs::path& dir,
                                          const std::string& extension) {
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  const std::regex name_re("^([0-9]{6})\\" + extension + "$");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, name_re)) stems.push_back(m[1].str());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

int run_synth_stage(const PipelineConfig& config, const fs::path& out_dir) {
  const Scene scene = generate_scene(config.scene);
  const SyntheticSequence seq = simulate_drive(scene, config.drive);
  create_output_dir(out_dir);
  write_dataset(seq, out_dir);
  return static_cast<int>(seq.frames.size());
}

int run_bev_stage(const PipelineConfig& config, const fs::path& data_dir,
                  const fs::path& out_dir) {
  const std::vector<Pose> poses = load_pose_log(data_dir / "poses.csv");
  const CameraModel cam = load_camera_json(data_dir / "camera.json");
  const GridSpec grid = dataset_grid(data_dir, config.grid);

  create_output_dir(out_dir / "bev");
  create_output_dir(out_dir / "occupancy");

  BevAccumulator acc(grid, config.accumulator);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const std::string stem = frame_stem(static_cast<int>(i));
    const PointCloud cloud = load_point_cloud(
        data_dir / "clouds" / (stem + ".pts"), /*expect_colors=*/false);
    const ImageU8 image = read_png_rgb8(data_dir / "images" / (stem + ".png"));
    const BevGrid bev = acc.step(poses[i], cloud, image, cam);

    write_png_rgb8(out_dir / "bev" / (stem + ".png"), bev_to_image(bev));
    write_png_gray8(out_dir / "occupancy" / (stem + ".png"),
                    occupancy_to_image(bev));
    const Json sidecar = {{"timestamp", bev.timestamp},
                          {"resolution", grid.resolution},
                          {"width", grid.width_cells},
                          {"height", grid.height_cells},
                          {"pose", pose_to_json(poses[i])}};
    save_json(out_dir / "bev" / (stem + ".json"), sidecar);
  }
  return static_cast<int>(poses.size());
}

AutolabelStats run_autolabel_stage(const PipelineConfig& config,
                                   const fs::path& data_dir,
                                   const fs::path& out_dir) {
  const std::vector<Pose> poses = load_pose_log(data_dir / "poses.csv");
  const GridSpec grid = dataset_grid(data_dir, config.grid);
  create_output_dir(out_dir / "labels");

  AutolabelStats stats;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const std::string stem = frame_stem(static_cast<int>(i));
    const ImageU8 obstacle_img =
        read_png_gray8(data_dir / "obstacles" / (stem + ".png"));
    if (obstacle_img.width != grid.width_cells ||
        obstacle_img.height != grid.height_cells) {
      throw FormatError("obstacle mask " + stem +
                        " does not match the dataset grid");
    }
    ObstacleMask mask = ObstacleMask::make(grid);
    for (std::size_t c = 0; c < mask.cells.size(); ++c) {
      mask.cells[c] = obstacle_img.data[c] != 0 ? 1 : 0;
    }

    const CellList traversed = footprint_cells(
        poses, config.footprint, poses[i], grid, config.label_horizon_s);
    const LabelResult result =
        build_label_mask(traversed, mask, poses[i].timestamp);
    stats.conflict_cells += result.conflict_cells;

    write_png_indexed(out_dir / "labels" / (stem + ".png"),
                      label_to_image(result.mask), label_palette());
    const Json sidecar = {{"timestamp", poses[i].timestamp},
                          {"bev_frame", stem},
                          {"conflict_cells", result.conflict_cells}};
    save_json(out_dir / "labels" / (stem + ".json"), sidecar);
  }
  stats.frames = static_cast<int>(poses.size());
  return stats;
}

TrainResult run_train_stage(const PipelineConfig& config,
                            const fs::path& bev_dir, const fs::path& labels_dir,
                            const fs::path& out_dir, const FrameRange& range) {
  const std::vector<BevFrameRef> index = load_bev_index(bev_dir);
  std::size_t begin = 0, end = 0;
  apply_range(range, index.size(), &begin, &end);

  std::vector<TrainFrame> frames;
  frames.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const BevFrameRef& ref = index[i];
    TrainFrame frame;
    frame.bev = load_bev_frame(bev_dir, ref);
    const ImageU8 label_img =
        read_png_indexed(labels_dir / "labels" / (ref.stem + ".png"));
    frame.labels = label_from_image(label_img, ref.spec, ref.timestamp);
    frames.push_back(std::move(frame));
  }

  create_output_dir(out_dir);
  FeatureNet net(config.arch, config.train.seed);
  const fs::path csv = out_dir / "metrics.csv";
  const TrainResult result = train_model(net, frames, config.train, &csv);

  Json extra = {{"trained_epochs", config.train.epochs},
                {"frames", frames.size()},
                {"seed", config.train.seed}};
  if (!result.history.empty()) {
    extra["final_loss"] = result.history.back().loss_total;
  }
  save_checkpoint(out_dir / "model.ckpt",
                  Checkpoint::from_net(net, std::move(extra)));
  return result;
}

InferStats run_infer_stage(const PipelineConfig& config,
                           const fs::path& bev_dir, const fs::path& checkpoint,
                           const fs::path& out_dir,
                           const InferOptions& options) {
  const std::vector<BevFrameRef> index = load_bev_index(bev_dir);
  std::size_t begin = 0, end = 0;
  apply_range(options.range, index.size(), &begin, &end);

  OnlineConfig online = config.online;
  online.frozen = options.frozen;
  OnlineEngine engine(load_checkpoint(checkpoint).to_net(), config.footprint,
                      online);
  if (options.initial_queue) {
    engine.set_queue(
        load_queue(*options.initial_queue, online.queue.capacity));
  }

  create_output_dir(out_dir / "costmaps");

  std::vector<Pose> trajectory;
  trajectory.reserve(end);
  for (std::size_t i = 0; i < end; ++i) {
    trajectory.push_back(index[i].pose);
    if (i < begin) continue;  // poses before the window still form history

    const BevGrid bev = load_bev_frame(bev_dir, index[i]);
    const OnlineSnapshot snap = engine.step(bev, index[i].pose, trajectory);

    ImageU16 raster = ImageU16::make(bev.spec.width_cells,
                                     bev.spec.height_cells);
    for (std::size_t c = 0; c < snap.map.values.size(); ++c) {
      raster.data[c] =
          static_cast<std::uint16_t>(std::lround(snap.map.values[c] * 65535.0));
    }
    write_png_gray16(out_dir / "costmaps" / (index[i].stem + ".png"), raster);
    const Json sidecar = {{"timestamp", bev.timestamp},
                          {"queue_size", snap.queue_size},
                          {"queue_version", snap.queue_version},
                          {"cold_start", snap.map.cold_start}};
    save_json(out_dir / "costmaps" / (index[i].stem + ".json"), sidecar);
  }

  save_queue(engine.queue(), out_dir / "queue.bin");
  InferStats stats;
  stats.frames = static_cast<int>(end - begin);
  stats.queue_size = engine.queue().size();
  stats.queue_version = engine.queue().version();
  return stats;
}

EvalStageResult run_eval_stage(const fs::path& pred_dir, const fs::path& gt_dir,
                               const FrameRange& range) {
  const std::vector<std::string> stems = list_frame_stems(gt_dir, ".png");
  if (stems.empty()) {
    throw IoError("no label frames found under " + gt_dir.string());
  }
  std::size_t begin = 0, end = 0;
  apply_range(range, stems.size(), &begin, &end);

  std::vector<std::vector<double>> frame_scores;
  std::vector<std::vector<std::uint8_t>> frame_labels;
  std::vector<std::string> scored_stems;
  for (std::size_t i = begin; i < end; ++i) {
    const std::string& stem = stems[i];
    const ImageU8 gt = read_png_indexed(gt_dir / (stem + ".png"));

    // Cost maps are 16-bit grayscale; label rasters double as hard 1/0
    // predictions so labels can be scored against labels.
    std::vector<double> pred(static_cast<std::size_t>(gt.width) * gt.height);
    const fs::path pred_path = pred_dir / (stem + ".png");
    bool pred_is_labels = false;
    ImageU16 scores16;
    try {
      scores16 = read_png_gray16(pred_path);
    } catch (const FormatError&) {
      pred_is_labels = true;
    }
    if (pred_is_labels) {
      const ImageU8 pred_labels = read_png_indexed(pred_path);
      if (pred_labels.width != gt.width || pred_labels.height != gt.height) {
        throw FormatError("prediction " + stem + " does not match label size");
      }
      for (std::size_t c = 0; c < pred.size(); ++c) {
        pred[c] = pred_labels.data[c] ==
                          static_cast<std::uint8_t>(CellLabel::kTraversable)
                      ? 1.0
                      : 0.0;
      }
    } else {
      if (scores16.width != gt.width || scores16.height != gt.height) {
        throw FormatError("prediction " + stem + " does not match label size");
      }
      for (std::size_t c = 0; c < pred.size(); ++c) {
        pred[c] = scores16.data[c] / 65535.0;
      }
    }

    std::vector<double> s;
    std::vector<std::uint8_t> l;
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const CellLabel label = static_cast<CellLabel>(gt.data[c]);
      if (label == CellLabel::kUnlabeled) continue;
      s.push_back(pred[c]);
      l.push_back(label == CellLabel::kTraversable ? 1 : 0);
    }
    frame_scores.push_back(std::move(s));
    frame_labels.push_back(std::move(l));
    scored_stems.push_back(stem);
  }

  EvalStageResult out;
  out.report = evaluate_frames(frame_scores, frame_labels);

  Json frames = Json::array();
  for (std::size_t f = 0; f < out.report.frames.size(); ++f) {
    const FrameMetrics& fm = out.report.frames[f];
    frames.push_back({{"frame", scored_stems[f]},
                      {"auroc", fm.auroc},
                      {"average_precision", fm.average_precision},
                      {"f1", fm.f1},
                      {"positives", fm.positives},
                      {"negatives", fm.negatives},
                      {"degenerate", fm.degenerate}});
  }
  out.json = {{"pooled", metrics_to_json(out.report.pooled)},
              {"macro",
               {{"auroc", out.report.macro_auroc},
                {"average_precision", out.report.macro_average_precision},
                {"f1", out.report.macro_f1}}},
              {"frames_scored", out.report.frames_scored},
              {"frames_degenerate", out.report.frames_degenerate},
              {"frames", std::move(frames)}};
  return out;
}

Json run_bench_stage(const PipelineConfig& config, const fs::path& bev_dir,
                     const fs::path& checkpoint, int max_frames) {
  if (max_frames <= 0) throw ConfigError("bench needs at least one frame");
  const std::vector<BevFrameRef> index = load_bev_index(bev_dir);
  const std::size_t count =
      std::min<std::size_t>(index.size(), static_cast<std::size_t>(max_frames));

  FeatureNet net = load_checkpoint(checkpoint).to_net();
  PrototypeQueue queue(net.arch().embed_dim, config.online.queue);
  Rng rng(config.online.seed);
  const OnlineConfig& online = config.online;

  using Clock = std::chrono::steady_clock;
  const auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  std::vector<double> forward_ms, update_ms, map_ms, non_network_ms, total_ms;
  std::vector<Pose> trajectory;
  for (std::size_t i = 0; i < count; ++i) {
    trajectory.push_back(index[i].pose);
    const BevGrid bev = load_bev_frame(bev_dir, index[i]);

    const auto t0 = Clock::now();
    const Tensor input = bev_to_tensor(bev);
    const Tensor z = net.forward(input, /*train=*/false);
    const double t_forward = ms_since(t0);

    const auto t1 = Clock::now();
    const std::vector<Eigen::VectorXd> traversed =
        extract_traversed_features(z, bev, trajectory, config.footprint,
                                   index[i].pose, online.window_s,
                                   online.max_samples, rng);
    for (const Eigen::VectorXd& f : traversed) queue.update(f);
    const double t_update = ms_since(t1);

    const auto t2 = Clock::now();
    const TraversabilityMap map = traversability_map(z, queue, bev);
    const double t_map = ms_since(t2);
    (void)map;

    forward_ms.push_back(t_forward);
    update_ms.push_back(t_update);
    map_ms.push_back(t_map);
    non_network_ms.push_back(t_update + t_map);
    total_ms.push_back(t_forward + t_update + t_map);
  }

  return {{"frames", count},
          {"grid",
           {{"width_cells", index.front().spec.width_cells},
            {"height_cells", index.front().spec.height_cells}}},
          {"embed_dim", net.arch().embed_dim},
          {"queue_size", queue.size()},
          {"forward", latency_summary(forward_ms)},
          {"prototype_update", latency_summary(update_ms)},
          {"costmap", latency_summary(map_ms)},
          {"non_network", latency_summary(non_network_ms)},
          {"total", latency_summary(total_ms)}};
}

}  // namespace travbev
