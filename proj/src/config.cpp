#include "travbev/config.hpp"

#include <initializer_list>
#include <string>

#include "travbev/errors.hpp"

namespace travbev {
namespace {

void reject_unknown_keys(const Json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in config section '" +
                        section + "'");
    }
  }
}

const Json* find_section(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) return nullptr;
  if (!it->is_object()) {
    throw ConfigError(std::string("config section '") + name +
                      "' must be an object");
  }
  return &*it;
}

template <typename T>
void read_field(const Json& j, const std::string& section, const char* key,
                T* out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    *out = it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "' in section '" +
                      section + "'");
  }
}

void parse_grid(const Json& j, GridSpec* grid) {
  reject_unknown_keys(j, "grid", {"width_cells", "height_cells", "resolution"});
  read_field(j, "grid", "width_cells", &grid->width_cells);
  read_field(j, "grid", "height_cells", &grid->height_cells);
  read_field(j, "grid", "resolution", &grid->resolution);
}

void parse_accumulator(const Json& j, AccumulatorParams* acc) {
  reject_unknown_keys(j, "accumulator",
                      {"window_frames", "max_range", "per_cell_cap"});
  read_field(j, "accumulator", "window_frames", &acc->window_frames);
  read_field(j, "accumulator", "max_range", &acc->max_range);
  read_field(j, "accumulator", "per_cell_cap", &acc->per_cell_cap);
}

void parse_footprint(const Json& j, WheelFootprint* fp) {
  reject_unknown_keys(j, "footprint", {"length", "width"});
  double length = 1.0;
  double width = 0.8;
  read_field(j, "footprint", "length", &length);
  read_field(j, "footprint", "width", &width);
  if (!(length > 0.0) || !(width > 0.0)) {
    throw ConfigError("footprint length and width must be positive");
  }
  *fp = WheelFootprint::box(length, width);
}

void parse_autolabel(const Json& j, double* horizon_s) {
  reject_unknown_keys(j, "autolabel", {"horizon_s"});
  read_field(j, "autolabel", "horizon_s", horizon_s);
}

void parse_model(const Json& j, NetArch* arch) {
  reject_unknown_keys(j, "model",
                      {"input_channels", "embed_dim", "encoder", "decoder"});
  read_field(j, "model", "input_channels", &arch->input_channels);
  read_field(j, "model", "embed_dim", &arch->embed_dim);
  read_field(j, "model", "encoder", &arch->encoder);
  read_field(j, "model", "decoder", &arch->decoder);
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "full") return LossMode::kFull;
  if (s == "contrast_only") return LossMode::kContrastOnly;
  if (s == "prototype_only") return LossMode::kPrototypeOnly;
  throw ConfigError("loss_mode must be one of full, contrast_only, "
                    "prototype_only; got '" + s + "'");
}

std::string loss_mode_to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kFull: return "full";
    case LossMode::kContrastOnly: return "contrast_only";
    case LossMode::kPrototypeOnly: return "prototype_only";
  }
  throw ConfigError("unhandled loss mode");
}

void parse_train(const Json& j, TrainConfig* train) {
  reject_unknown_keys(
      j, "train",
      {"tau", "lambda_max", "lambda_ramp_epochs", "cluster_counts",
       "negatives_per_sample", "sigma", "pixels_per_class", "queue_capacity",
       "epochs", "batch_frames", "learning_rate", "lr_decay_power",
       "literal_proto_denominator", "loss_mode", "divergence_limit", "seed"});
  read_field(j, "train", "tau", &train->tau);
  read_field(j, "train", "lambda_max", &train->lambda_max);
  read_field(j, "train", "lambda_ramp_epochs", &train->lambda_ramp_epochs);
  read_field(j, "train", "cluster_counts", &train->cluster_counts);
  read_field(j, "train", "negatives_per_sample", &train->negatives_per_sample);
  read_field(j, "train", "sigma", &train->sigma);
  read_field(j, "train", "pixels_per_class", &train->pixels_per_class);
  read_field(j, "train", "queue_capacity", &train->queue_capacity);
  read_field(j, "train", "epochs", &train->epochs);
  read_field(j, "train", "batch_frames", &train->batch_frames);
  read_field(j, "train", "learning_rate", &train->learning_rate);
  read_field(j, "train", "lr_decay_power", &train->lr_decay_power);
  read_field(j, "train", "literal_proto_denominator",
             &train->literal_proto_denominator);
  read_field(j, "train", "divergence_limit", &train->divergence_limit);
  read_field(j, "train", "seed", &train->seed);
  if (j.contains("loss_mode")) {
    std::string mode;
    read_field(j, "train", "loss_mode", &mode);
    train->loss_mode = loss_mode_from_string(mode);
  }
}

void parse_online(const Json& j, OnlineConfig* online) {
  reject_unknown_keys(j, "online",
                      {"alpha", "momentum", "capacity", "window_s",
                       "max_samples", "seed"});
  read_field(j, "online", "alpha", &online->queue.alpha);
  read_field(j, "online", "momentum", &online->queue.momentum);
  read_field(j, "online", "capacity", &online->queue.capacity);
  read_field(j, "online", "window_s", &online->window_s);
  read_field(j, "online", "max_samples", &online->max_samples);
  read_field(j, "online", "seed", &online->seed);
}

Season season_from_string(const std::string& s) {
  if (s == "spring") return Season::kSpring;
  if (s == "winter") return Season::kWinter;
  throw ConfigError("season must be 'spring' or 'winter'; got '" + s + "'");
}

std::string season_to_string(Season season) {
  return season == Season::kSpring ? "spring" : "winter";
}

void parse_scene(const Json& j, SceneSpec* scene) {
  reject_unknown_keys(
      j, "scene",
      {"extent", "cell_size", "obstacle_count", "obstacle_min_radius",
       "obstacle_max_radius", "obstacle_min_height", "obstacle_max_height",
       "road_half_width", "road_amplitude", "road_wavelength",
       "corridor_clearance", "noise_scale", "rock_tint", "season", "seed"});
  read_field(j, "scene", "extent", &scene->extent);
  read_field(j, "scene", "cell_size", &scene->cell_size);
  read_field(j, "scene", "obstacle_count", &scene->obstacle_count);
  read_field(j, "scene", "obstacle_min_radius", &scene->obstacle_min_radius);
  read_field(j, "scene", "obstacle_max_radius", &scene->obstacle_max_radius);
  read_field(j, "scene", "obstacle_min_height", &scene->obstacle_min_height);
  read_field(j, "scene", "obstacle_max_height", &scene->obstacle_max_height);
  read_field(j, "scene", "road_half_width", &scene->road_half_width);
  read_field(j, "scene", "road_amplitude", &scene->road_amplitude);
  read_field(j, "scene", "road_wavelength", &scene->road_wavelength);
  read_field(j, "scene", "corridor_clearance", &scene->corridor_clearance);
  read_field(j, "scene", "noise_scale", &scene->noise_scale);
  read_field(j, "scene", "rock_tint", &scene->rock_tint);
  read_field(j, "scene", "seed", &scene->seed);
  if (j.contains("season")) {
    std::string season;
    read_field(j, "scene", "season", &season);
    scene->season = season_from_string(season);
  }
}

void parse_drive(const Json& j, DriveSpec* drive) {
  reject_unknown_keys(
      j, "drive",
      {"speed", "frame_rate", "duration", "start_x", "weave_amplitude",
       "weave_wavelength", "vehicle_half_width", "sensor_range",
       "points_per_frame", "pose_noise", "seed"});
  read_field(j, "drive", "speed", &drive->speed);
  read_field(j, "drive", "frame_rate", &drive->frame_rate);
  read_field(j, "drive", "duration", &drive->duration);
  read_field(j, "drive", "start_x", &drive->start_x);
  read_field(j, "drive", "weave_amplitude", &drive->weave_amplitude);
  read_field(j, "drive", "weave_wavelength", &drive->weave_wavelength);
  read_field(j, "drive", "vehicle_half_width", &drive->vehicle_half_width);
  read_field(j, "drive", "sensor_range", &drive->sensor_range);
  read_field(j, "drive", "points_per_frame", &drive->points_per_frame);
  read_field(j, "drive", "pose_noise", &drive->pose_noise);
  read_field(j, "drive", "seed", &drive->seed);
}

}  // namespace

PipelineConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("config root must be a JSON object");
  reject_unknown_keys(j, "<root>",
                      {"grid", "accumulator", "footprint", "autolabel",
                       "model", "train", "online", "scene", "drive"});
  PipelineConfig cfg;
  if (const Json* s = find_section(j, "grid")) parse_grid(*s, &cfg.grid);
  if (const Json* s = find_section(j, "accumulator")) {
    parse_accumulator(*s, &cfg.accumulator);
  }
  if (const Json* s = find_section(j, "footprint")) {
    parse_footprint(*s, &cfg.footprint);
  }
  if (const Json* s = find_section(j, "autolabel")) {
    parse_autolabel(*s, &cfg.label_horizon_s);
  }
  if (const Json* s = find_section(j, "model")) parse_model(*s, &cfg.arch);
  if (const Json* s = find_section(j, "train")) parse_train(*s, &cfg.train);
  if (const Json* s = find_section(j, "online")) parse_online(*s, &cfg.online);
  if (const Json* s = find_section(j, "scene")) parse_scene(*s, &cfg.scene);
  if (const Json* s = find_section(j, "drive")) parse_drive(*s, &cfg.drive);
  validate_grid(cfg.grid);
  cfg.drive.grid = cfg.grid;
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return config_from_json(load_json(path));
}

Json config_to_json(const PipelineConfig& config) {
  Json j;
  j["grid"] = {{"width_cells", config.grid.width_cells},
               {"height_cells", config.grid.height_cells},
               {"resolution", config.grid.resolution}};
  j["accumulator"] = {{"window_frames", config.accumulator.window_frames},
                      {"max_range", config.accumulator.max_range},
                      {"per_cell_cap", config.accumulator.per_cell_cap}};
  const double length =
      config.footprint.left_front.x() - config.footprint.left_rear.x();
  const double width =
      config.footprint.left_front.y() - config.footprint.right_front.y();
  j["footprint"] = {{"length", length}, {"width", width}};
  j["autolabel"] = {{"horizon_s", config.label_horizon_s}};
  j["model"] = {{"input_channels", config.arch.input_channels},
                {"embed_dim", config.arch.embed_dim},
                {"encoder", config.arch.encoder},
                {"decoder", config.arch.decoder}};
  j["train"] = {
      {"tau", config.train.tau},
      {"lambda_max", config.train.lambda_max},
      {"lambda_ramp_epochs", config.train.lambda_ramp_epochs},
      {"cluster_counts", config.train.cluster_counts},
      {"negatives_per_sample", config.train.negatives_per_sample},
      {"sigma", config.train.sigma},
      {"pixels_per_class", config.train.pixels_per_class},
      {"queue_capacity", config.train.queue_capacity},
      {"epochs", config.train.epochs},
      {"batch_frames", config.train.batch_frames},
      {"learning_rate", config.train.learning_rate},
      {"lr_decay_power", config.train.lr_decay_power},
      {"literal_proto_denominator", config.train.literal_proto_denominator},
      {"loss_mode", loss_mode_to_string(config.train.loss_mode)},
      {"divergence_limit", config.train.divergence_limit},
      {"seed", config.train.seed}};
  j["online"] = {{"alpha", config.online.queue.alpha},
                 {"momentum", config.online.queue.momentum},
                 {"capacity", config.online.queue.capacity},
                 {"window_s", config.online.window_s},
                 {"max_samples", config.online.max_samples},
                 {"seed", config.online.seed}};
  j["scene"] = {{"extent", config.scene.extent},
                {"cell_size", config.scene.cell_size},
                {"obstacle_count", config.scene.obstacle_count},
                {"obstacle_min_radius", config.scene.obstacle_min_radius},
                {"obstacle_max_radius", config.scene.obstacle_max_radius},
                {"obstacle_min_height", config.scene.obstacle_min_height},
                {"obstacle_max_height", config.scene.obstacle_max_height},
                {"road_half_width", config.scene.road_half_width},
                {"road_amplitude", config.scene.road_amplitude},
                {"road_wavelength", config.scene.road_wavelength},
                {"corridor_clearance", config.scene.corridor_clearance},
                {"noise_scale", config.scene.noise_scale},
                {"rock_tint", config.scene.rock_tint},
                {"season", season_to_string(config.scene.season)},
                {"seed", config.scene.seed}};
  j["drive"] = {{"speed", config.drive.speed},
                {"frame_rate", config.drive.frame_rate},
                {"duration", config.drive.duration},
                {"start_x", config.drive.start_x},
                {"weave_amplitude", config.drive.weave_amplitude},
                {"weave_wavelength", config.drive.weave_wavelength},
                {"vehicle_half_width", config.drive.vehicle_half_width},
                {"sensor_range", config.drive.sensor_range},
                {"points_per_frame", config.drive.points_per_frame},
                {"pose_noise", config.drive.pose_noise},
                {"seed", config.drive.seed}};
  return j;
}

}  // namespace travbev
