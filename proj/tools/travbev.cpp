#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "travbev/config.hpp"
#include "travbev/errors.hpp"
#include "travbev/pipeline.hpp"

namespace {

using namespace travbev;

PipelineConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return PipelineConfig{};
  return load_config(config_path);
}

struct RangeFlags {
  int begin = 0;
  int end = -1;

  void attach(CLI::App* sub) {
    sub->add_option("--begin", begin, "First frame index (inclusive)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--end", end,
                    "Frame index past the last one; -1 runs to the end");
  }
  FrameRange range() const { return {begin, end}; }
};

void print_metric_block(const char* title, const Json& m) {
  std::printf("  %-8s auroc %.6f  ap %.6f  f1 %.6f\n", title,
              m.at("auroc").get<double>(),
              m.at("average_precision").get<double>(), m.at("f1").get<double>());
}

void print_latency_line(const char* title, const Json& j) {
  std::printf("  %-18s p50 %9.3f ms   p90 %9.3f ms   mean %9.3f ms\n", title,
              j.at("p50_ms").get<double>(), j.at("p90_ms").get<double>(),
              j.at("mean_ms").get<double>());
}

int run_cli(int argc, char** argv) {
  CLI::App app{
      "travbev: self-supervised bird's-eye-view traversability pipeline"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- synth ------------------------------------------------------------
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic drive dataset (clouds, images, masks)");
  struct {
    std::string config, out, season;
    std::optional<std::uint64_t> seed;
    std::optional<int> frames;
    std::optional<double> duration;
  } synth_args;
  synth->add_option("--config", synth_args.config, "Pipeline config JSON");
  synth->add_option("--out", synth_args.out, "Output dataset directory")
      ->required();
  synth->add_option("--seed", synth_args.seed,
                    "Scene seed; the drive uses seed+1");
  synth->add_option("--season", synth_args.season,
                    "Palette season: spring or winter");
  synth->add_option("--frames", synth_args.frames,
                    "Frame count (overrides the drive duration)")
      ->check(CLI::PositiveNumber);
  synth->add_option("--duration", synth_args.duration, "Drive duration [s]");
  synth->callback([&] {
    action = [&] {
      PipelineConfig cfg = load_or_default(synth_args.config);
      if (synth_args.seed) {
        cfg.scene.seed = *synth_args.seed;
        cfg.drive.seed = *synth_args.seed + 1;
      }
      if (!synth_args.season.empty()) {
        if (synth_args.season == "spring") {
          cfg.scene.season = Season::kSpring;
        } else if (synth_args.season == "winter") {
          cfg.scene.season = Season::kWinter;
        } else {
          throw ConfigError("season must be 'spring' or 'winter'");
        }
      }
      if (synth_args.duration) cfg.drive.duration = *synth_args.duration;
      if (synth_args.frames) {
        cfg.drive.duration = *synth_args.frames / cfg.drive.frame_rate;
      }
      const int n = run_synth_stage(cfg, synth_args.out);
      std::printf("synth: wrote %d frames to %s\n", n, synth_args.out.c_str());
    };
  });

  // ---- bev --------------------------------------------------------------
  auto* bev = app.add_subcommand(
      "bev", "Accumulate clouds into per-frame BEV rasters");
  struct {
    std::string config, data, out;
  } bev_args;
  bev->add_option("--config", bev_args.config, "Pipeline config JSON");
  bev->add_option("--data", bev_args.data, "Dataset directory")->required();
  bev->add_option("--out", bev_args.out, "Output directory")->required();
  bev->callback([&] {
    action = [&] {
      const int n = run_bev_stage(load_or_default(bev_args.config),
                                  bev_args.data, bev_args.out);
      std::printf("bev: wrote %d frames to %s\n", n, bev_args.out.c_str());
    };
  });

  // ---- autolabel --------------------------------------------------------
  auto* autolabel = app.add_subcommand(
      "autolabel", "Derive trichotomy labels from the driven trajectory");
  struct {
    std::string config, data, out;
  } al_args;
  autolabel->add_option("--config", al_args.config, "Pipeline config JSON");
  autolabel->add_option("--data", al_args.data, "Dataset directory")
      ->required();
  autolabel->add_option("--out", al_args.out, "Output directory")->required();
  autolabel->callback([&] {
    action = [&] {
      const AutolabelStats stats = run_autolabel_stage(
          load_or_default(al_args.config), al_args.data, al_args.out);
      std::printf("autolabel: wrote %d frames to %s (%zu conflict cells)\n",
                  stats.frames, al_args.out.c_str(), stats.conflict_cells);
    };
  });

  // ---- train ------------------------------------------------------------
  auto* train = app.add_subcommand(
      "train", "Fit the embedding network on BEV frames and labels");
  struct {
    std::string config, bev, labels, out, loss_mode;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool literal_proto = false;
    RangeFlags range;
  } train_args;
  train->add_option("--config", train_args.config, "Pipeline config JSON");
  train->add_option("--bev", train_args.bev, "BEV directory")->required();
  train->add_option("--labels", train_args.labels, "Label directory")
      ->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--epochs", train_args.epochs, "Epoch count")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", train_args.seed, "Training seed");
  train->add_option("--loss-mode", train_args.loss_mode,
                    "full, contrast_only, or prototype_only");
  train->add_flag("--literal-proto-denominator", train_args.literal_proto,
                  "Normalize the prototype loss over the drawn negatives only");
  train_args.range.attach(train);
  train->callback([&] {
    action = [&] {
      PipelineConfig cfg = load_or_default(train_args.config);
      if (train_args.epochs) cfg.train.epochs = *train_args.epochs;
      if (train_args.seed) cfg.train.seed = *train_args.seed;
      if (train_args.literal_proto) cfg.train.literal_proto_denominator = true;
      if (!train_args.loss_mode.empty()) {
        Json j = {{"train", {{"loss_mode", train_args.loss_mode}}}};
        cfg.train.loss_mode = config_from_json(j).train.loss_mode;
      }
      const TrainResult result =
          run_train_stage(cfg, train_args.bev, train_args.labels,
                          train_args.out, train_args.range.range());
      if (result.history.empty()) {
        std::printf("train: 0 epochs, checkpoint %s/model.ckpt\n",
                    train_args.out.c_str());
      } else {
        std::printf("train: %zu epochs, final loss %.6f, checkpoint "
                    "%s/model.ckpt\n",
                    result.history.size(), result.history.back().loss_total,
                    train_args.out.c_str());
      }
    };
  });

  // ---- infer ------------------------------------------------------------
  auto* infer = app.add_subcommand(
      "infer", "Stream BEV frames into adaptive traversability cost maps");
  struct {
    std::string config, bev, checkpoint, out, frozen_queue, initial_queue;
    std::optional<std::uint64_t> seed;
    bool frozen = false;
    RangeFlags range;
  } infer_args;
  infer->add_option("--config", infer_args.config, "Pipeline config JSON");
  infer->add_option("--bev", infer_args.bev, "BEV directory")->required();
  infer->add_option("--checkpoint", infer_args.checkpoint, "Model checkpoint")
      ->required();
  infer->add_option("--out", infer_args.out, "Output directory")->required();
  infer->add_option("--frozen-queue", infer_args.frozen_queue,
                    "Load this queue file and disable updates");
  infer->add_option("--initial-queue", infer_args.initial_queue,
                    "Load this queue file but keep adapting");
  infer->add_flag("--frozen", infer_args.frozen,
                  "Disable prototype-queue updates");
  infer->add_option("--seed", infer_args.seed, "Subsampling seed");
  infer_args.range.attach(infer);
  infer->callback([&] {
    action = [&] {
      PipelineConfig cfg = load_or_default(infer_args.config);
      if (infer_args.seed) cfg.online.seed = *infer_args.seed;
      if (!infer_args.frozen_queue.empty() &&
          !infer_args.initial_queue.empty()) {
        throw ConfigError(
            "--frozen-queue and --initial-queue are mutually exclusive");
      }
      InferOptions options;
      options.range = infer_args.range.range();
      options.frozen = infer_args.frozen || !infer_args.frozen_queue.empty();
      if (!infer_args.frozen_queue.empty()) {
        options.initial_queue = infer_args.frozen_queue;
      } else if (!infer_args.initial_queue.empty()) {
        options.initial_queue = infer_args.initial_queue;
      }
      const InferStats stats =
          run_infer_stage(cfg, infer_args.bev, infer_args.checkpoint,
                          infer_args.out, options);
      std::printf("infer: wrote %d cost maps to %s (queue size %zu, "
                  "version %llu)\n",
                  stats.frames, infer_args.out.c_str(), stats.queue_size,
                  static_cast<unsigned long long>(stats.queue_version));
    };
  });

  // ---- eval -------------------------------------------------------------
  auto* eval = app.add_subcommand(
      "eval", "Score predicted cost maps against label rasters");
  struct {
    std::string pred, gt, out;
    RangeFlags range;
  } eval_args;
  eval->add_option("--pred", eval_args.pred,
                   "Directory of prediction rasters (cost maps or labels)")
      ->required();
  eval->add_option("--gt", eval_args.gt, "Directory of label rasters")
      ->required();
  eval->add_option("--out", eval_args.out, "Report JSON path");
  eval_args.range.attach(eval);
  eval->callback([&] {
    action = [&] {
      const EvalStageResult result =
          run_eval_stage(eval_args.pred, eval_args.gt,
                         eval_args.range.range());
      std::printf("eval: %zu frames scored, %zu degenerate\n",
                  result.report.frames_scored,
                  result.report.frames_degenerate);
      print_metric_block("pooled", result.json.at("pooled"));
      print_metric_block("macro", result.json.at("macro"));
      if (eval_args.out.empty()) {
        std::cout << result.json.dump(2) << "\n";
      } else {
        save_json(eval_args.out, result.json);
        std::printf("eval: report written to %s\n", eval_args.out.c_str());
      }
    };
  });

  // ---- bench ------------------------------------------------------------
  auto* bench = app.add_subcommand(
      "bench", "Measure per-stage inference latency percentiles");
  struct {
    std::string config, bev, checkpoint, out;
    int frames = 30;
  } bench_args;
  bench->add_option("--config", bench_args.config, "Pipeline config JSON");
  bench->add_option("--bev", bench_args.bev, "BEV directory")->required();
  bench->add_option("--checkpoint", bench_args.checkpoint, "Model checkpoint")
      ->required();
  bench->add_option("--frames", bench_args.frames, "Frames to measure")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_args.out, "Latency JSON path");
  bench->callback([&] {
    action = [&] {
      const Json report =
          run_bench_stage(load_or_default(bench_args.config), bench_args.bev,
                          bench_args.checkpoint, bench_args.frames);
      std::printf("bench: %zu frames at %dx%d, embed dim %d\n",
                  report.at("frames").get<std::size_t>(),
                  report.at("grid").at("width_cells").get<int>(),
                  report.at("grid").at("height_cells").get<int>(),
                  report.at("embed_dim").get<int>());
      print_latency_line("forward", report.at("forward"));
      print_latency_line("prototype_update", report.at("prototype_update"));
      print_latency_line("costmap", report.at("costmap"));
      print_latency_line("non_network", report.at("non_network"));
      print_latency_line("total", report.at("total"));
      if (!bench_args.out.empty()) save_json(bench_args.out, report);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    action();
    return 0;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const SequenceError& e) {
    std::cerr << "sequence error: " << e.what() << "\n";
    return 5;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 6;
  } catch (const MetricError& e) {
    std::cerr << "metric error: " << e.what() << "\n";
    return 7;
  } catch (const ClusterError& e) {
    std::cerr << "cluster error: " << e.what() << "\n";
    return 8;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence error: " << e.what() << "\n";
    return 9;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
