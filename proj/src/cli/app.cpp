#include "canopy/cli/app.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <iostream>
#include <json.hpp>
#include <set>

#include "canopy/cli/pipeline.hpp"
#include "canopy/error.hpp"

namespace canopy::cli {

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::vector<std::string> json_inputs(const nlohmann::json& v, const std::string& key) {
  auto scalar = [&](const nlohmann::json& s) -> std::string {
    if (s.is_string()) return s.get<std::string>();
    if (s.is_boolean()) return s.get<bool>() ? "true" : "false";
    if (s.is_number()) return s.dump();
    throw ConfigError("config key '" + key + "' must hold a string, number, boolean or list of those");
  };
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(scalar(e));
  } else {
    out.push_back(scalar(v));
  }
  return out;
}

// JSON pipeline config. Top-level scalars are shared settings: they apply
// to the running subcommand when it has an option of that name. Objects
// named after a subcommand hold settings for that subcommand only and must
// name existing options.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing configs is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    const auto active = root_->get_subcommands();
    const CLI::App* sub = active.empty() ? nullptr : active.front();

    std::vector<CLI::ConfigItem> items;
    for (const auto& [raw_key, value] : doc.items()) {
      const std::string key = dashed(raw_key);
      if (value.is_object()) {
        const CLI::App* target = root_->get_subcommand_no_throw(key);
        if (!target) throw ConfigError("config section '" + raw_key + "' names no subcommand");
        if (target != sub) continue;
        for (const auto& [opt, v] : value.items()) {
          items.push_back({{key}, dashed(opt), json_inputs(v, raw_key + "." + opt)});
        }
        continue;
      }
      bool known = false;
      for (const CLI::App* s : root_->get_subcommands({})) {
        known = known || s->get_option_no_throw("--" + key) != nullptr;
      }
      if (!known) throw ConfigError("config key '" + raw_key + "' matches no option of any subcommand");
      if (sub && sub->get_option_no_throw("--" + key)) items.push_back({{sub->get_name()}, key, json_inputs(value, raw_key)});
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Urban tree canopy mapping from LiDAR and multispectral imagery", "canopy"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON pipeline config; command-line flags override it");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages on stderr");

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", seed, "Random seed")->capture_default_str(); };

  // synth
  synth::SceneOptions scene;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene with known trees");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--n-trees", scene.n_trees, "Trees to plant")->capture_default_str();
  synth_cmd->add_option("--width", scene.width_m, "Extent east-west, metres")->capture_default_str();
  synth_cmd->add_option("--height", scene.height_m, "Extent north-south, metres")->capture_default_str();
  synth_cmd->add_option("--pulse-spacing", scene.pulse_spacing, "LiDAR pulse spacing, metres")->capture_default_str();
  synth_cmd->add_option("--min-separation", scene.min_separation, "Minimum apex spacing, metres")->capture_default_str();
  synth_cmd->add_option("--zones-x", scene.zones_x, "Zone columns")->capture_default_str();
  synth_cmd->add_option("--zones-y", scene.zones_y, "Zone rows")->capture_default_str();
  add_seed(synth_cmd);

  // ground-truth
  GroundTruthPaths gt_paths;
  GroundTruthOptions gt_opt;
  auto* gt_cmd = app.add_subcommand("ground-truth", "Build tree-mask and pixel-height rasters from LiDAR");
  gt_cmd->add_option("--lidar", gt_paths.lidar, "LAS/CSV files or directories")->required();
  gt_cmd->add_option("--naip", gt_paths.naip, "NAIP GeoTIFF (R, G, B, NIR)")->required();
  gt_cmd->add_option("--out", gt_paths.out_dir, "Output directory")->required();
  gt_cmd->add_option("--ndvi-threshold", gt_opt.ndvi_threshold, "Minimum NDVI of kept returns")->capture_default_str();
  gt_cmd->add_option("--zmin", gt_opt.zmin, "Minimum return height, feet")->capture_default_str();
  gt_cmd->add_option("--zmax", gt_opt.zmax, "Maximum return height, feet")->capture_default_str();
  gt_cmd->add_option("--window-radius", gt_opt.window_radius, "Local-maximum radius, metres")->capture_default_str();
  gt_cmd->add_option("--th-seed", gt_opt.dalponte.th_seed, "Crown growth seed threshold")->capture_default_str();
  gt_cmd->add_option("--th-cr", gt_opt.dalponte.th_cr, "Crown growth mean threshold")->capture_default_str();
  gt_cmd->add_option("--th-tree", gt_opt.dalponte.th_tree, "Minimum crown pixel height, feet")->capture_default_str();
  gt_cmd->add_option("--max-cr", gt_opt.dalponte.max_crown_pixels, "Maximum crown radius, pixels")->capture_default_str();
  gt_cmd->add_option("--tile-pixels", gt_opt.tile_pixels, "Tile edge in pixels; 0 = whole raster")->capture_default_str();
  gt_cmd->add_option("--buffer-pixels", gt_opt.buffer_pixels, "Tile overlap in pixels")->capture_default_str();
  add_seed(gt_cmd);

  // prepare
  PreparePaths prep_paths;
  PrepareOptions prep_opt;
  std::string bands = "ms";
  auto* prep_cmd = app.add_subcommand("prepare", "Stack imagery and cut training patches");
  prep_cmd->add_option("--naip", prep_paths.naip, "NAIP GeoTIFF")->required();
  prep_cmd->add_option("--s2-10m", prep_paths.s2_10m, "Sentinel-2 10 m bands (B2, B3, B4, B8)");
  prep_cmd->add_option("--s2-20m", prep_paths.s2_20m, "Sentinel-2 20 m bands (B5, B6, B7, B8A, B11, B12)");
  prep_cmd->add_option("--tree-mask", prep_paths.tree_mask, "Ground-truth tree mask")->required();
  prep_cmd->add_option("--pixel-height", prep_paths.pixel_height, "Ground-truth pixel height, feet")->required();
  prep_cmd->add_option("--aux-mask", prep_paths.aux_mask, "Impervious mask; default NDVI < 0");
  prep_cmd->add_option("--out", prep_paths.out, "Patch container path")->required();
  prep_cmd->add_option("--bands", bands, "ms (14 bands) or rgb (3 bands)")->capture_default_str();
  prep_cmd->add_option("--patch-size", prep_opt.patch_size, "Patch edge, pixels")->capture_default_str();
  prep_cmd->add_option("--test-fraction", prep_opt.test_fraction, "Holdout fraction")->capture_default_str();
  prep_cmd->add_option("--split-block", prep_opt.split_block, "Spatial split block, pixels; 0 = random")
      ->capture_default_str();
  prep_cmd->add_option("--height-max", prep_opt.height_max, "Height normaliser, feet")->capture_default_str();
  add_seed(prep_cmd);

  // train
  TrainPaths train_paths;
  train::TrainConfig tc;
  std::string variant = "fully_shared";
  std::vector<std::string> tasks{"tree_mask", "pixel_height", "aux_mask"};
  std::size_t in_bands = 0;
  tc.model.depth = 4;
  tc.model.base_channels = 32;
  auto* train_cmd = app.add_subcommand("train", "Train a UNet on a patch container");
  train_cmd->add_option("--patches", train_paths.patches, "Patch container")->required();
  train_cmd->add_option("--out", train_paths.out_dir, "Output directory")->required();
  train_cmd->add_option("--variant", variant, "fully_shared, partially_shared or single_task")->capture_default_str();
  train_cmd->add_option("--tasks", tasks, "tree_mask, pixel_height, aux_mask")->capture_default_str();
  train_cmd->add_option("--in-bands", in_bands, "Input bands; 0 = from the patches")->capture_default_str();
  train_cmd->add_option("--depth", tc.model.depth, "UNet depth")->capture_default_str();
  train_cmd->add_option("--base-channels", tc.model.base_channels, "Channels at the first level")
      ->capture_default_str();
  train_cmd->add_option("--lr", tc.adam.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tc.batch, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--test-fraction", tc.test_fraction, "Holdout fraction; 0 trains on all")
      ->capture_default_str();
  train_cmd->add_option("--split-block", tc.split_block, "Spatial split block, pixels; 0 = random")
      ->capture_default_str();
  train_cmd->add_option("--w-tree", tc.weights.tree, "Tree-mask loss weight")->capture_default_str();
  train_cmd->add_option("--w-height", tc.weights.height, "Pixel-height loss weight")->capture_default_str();
  train_cmd->add_option("--w-aux", tc.weights.aux, "Auxiliary loss weight")->capture_default_str();
  train_cmd->add_option("--jaccard-smooth", tc.jaccard_smooth, "Soft Jaccard smoothing")->capture_default_str();
  add_seed(train_cmd);

  // eval
  std::vector<std::string> eval_models, eval_patches;
  std::string eval_out;
  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Score models and write the results table");
  eval_cmd->add_option("--model", eval_models, "Model files")->required();
  eval_cmd->add_option("--patches", eval_patches, "One patch container, or one per model")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();
  eval_cmd->add_option("--test-fraction", eval_opt.test_fraction, "Holdout fraction; 0 scores all patches")
      ->capture_default_str();
  eval_cmd->add_flag("--masked-mae", eval_opt.masked_mae, "Height MAE over true tree pixels only");
  add_seed(eval_cmd);

  // predict
  PredictPaths pred_paths;
  std::size_t pred_patch = 240;
  double threshold = 0.5;
  auto* pred_cmd = app.add_subcommand("predict", "Run a model over full imagery rasters");
  pred_cmd->add_option("--model", pred_paths.model, "Model file")->required();
  pred_cmd->add_option("--stats", pred_paths.stats, "Normalisation stats written by prepare")->required();
  pred_cmd->add_option("--naip", pred_paths.naip, "NAIP GeoTIFF")->required();
  pred_cmd->add_option("--s2-10m", pred_paths.s2_10m, "Sentinel-2 10 m bands");
  pred_cmd->add_option("--s2-20m", pred_paths.s2_20m, "Sentinel-2 20 m bands");
  pred_cmd->add_option("--out", pred_paths.out_dir, "Output directory")->required();
  pred_cmd->add_option("--patch-size", pred_patch, "Window edge, pixels")->capture_default_str();
  pred_cmd->add_option("--threshold", threshold, "Tree probability threshold")->capture_default_str();
  add_seed(pred_cmd);

  // aggregate
  AggregatePaths agg_paths;
  double height_scale = 1.0;
  auto* agg_cmd = app.add_subcommand("aggregate", "City-wide cover and per-zone statistics");
  agg_cmd->add_option("--tree-mask", agg_paths.tree_mask, "Tree mask raster")->required();
  agg_cmd->add_option("--height", agg_paths.height, "Pixel height raster")->required();
  agg_cmd->add_option("--zones", agg_paths.zones, "Zone polygons, GeoJSON")->required();
  agg_cmd->add_option("--out", agg_paths.out_dir, "Output directory")->required();
  agg_cmd->add_option("--height-scale", height_scale, "Multiplier on mean height, e.g. 80 for feet")
      ->capture_default_str();
  add_seed(agg_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "canopy: configuration error: " << e.what() << '\n';
    return 2;
  }

  set_verbose(!quiet);
  try {
    if (synth_cmd->parsed()) {
      scene.seed = seed;
      cmd_synth(scene, synth_out);
    } else if (gt_cmd->parsed()) {
      cmd_ground_truth(gt_paths, gt_opt);
    } else if (prep_cmd->parsed()) {
      prep_opt.bands = parse_band_set(bands);
      prep_opt.seed = seed;
      cmd_prepare(prep_paths, prep_opt);
    } else if (train_cmd->parsed()) {
      tc.seed = seed;
      tc.model.variant = nn::parse_variant(variant);
      tc.model.tasks.clear();
      for (const auto& t : tasks) tc.model.tasks.push_back(nn::parse_task(t));
      tc.model.in_bands = in_bands;
      cmd_train(train_paths, tc);
    } else if (eval_cmd->parsed()) {
      if (eval_patches.size() != 1 && eval_patches.size() != eval_models.size()) {
        throw ConfigError("eval: give one --patches file, or one per --model");
      }
      eval_opt.seed = seed;
      std::vector<EvalRun> runs;
      for (std::size_t i = 0; i < eval_models.size(); ++i) {
        runs.push_back({eval_models[i], eval_patches.size() == 1 ? eval_patches[0] : eval_patches[i]});
      }
      log("eval: results\n" + eval::results_markdown(cmd_eval(runs, eval_opt, eval_out)));
    } else if (pred_cmd->parsed()) {
      cmd_predict(pred_paths, pred_patch, threshold);
    } else if (agg_cmd->parsed()) {
      cmd_aggregate(agg_paths, height_scale);
    }
  } catch (const ConfigError& e) {
    std::cerr << "canopy: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "canopy: input error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "canopy: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "canopy: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace canopy::cli
