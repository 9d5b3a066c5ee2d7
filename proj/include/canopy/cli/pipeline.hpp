#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "canopy/eval/metrics.hpp"
#include "canopy/geo/ops.hpp"
#include "canopy/geo/raster.hpp"
#include "canopy/lidar/chm.hpp"
#include "canopy/lidar/point_cloud.hpp"
#include "canopy/lidar/segment.hpp"
#include "canopy/synth/scene.hpp"
#include "canopy/train/train.hpp"

// Library side of the command-line subcommands. Each cmd_* reads its
// inputs from files and writes its outputs to files; the in-memory
// functions underneath are what the tests drive.
namespace canopy::cli {

// Progress messages go to stderr unless silenced.
void set_verbose(bool on);
void log(const std::string& message);

// ---- ground truth -------------------------------------------------------

struct GroundTruthOptions {
  double ndvi_threshold = 0.05;
  double zmin = 6.0;  // feet
  double zmax = 80.0;
  double window_radius = 3.0;  // local-maximum search radius, map units
  lidar::DalponteParams dalponte;
  lidar::PitFreeOptions pitfree;
  std::size_t tile_pixels = 250;  // core tile edge; 0 = one tile
  std::size_t buffer_pixels = 20;
  std::size_t red_band = 0;  // NAIP band order R, G, B, NIR
  std::size_t nir_band = 3;

  void validate() const;
};

struct GroundTruth {
  geo::Raster tree_mask;     // on the NAIP grid
  geo::Raster pixel_height;  // feet
  std::vector<lidar::TreeTop> tops;  // rows/cols on the NAIP grid, ids renumbered
};

// NDVI mask -> height filter -> pit-free CHM -> treetops -> crowns ->
// truth layers, per buffered tile, with the tile cores mosaicked.
GroundTruth ground_truth(const lidar::PointCloud& cloud, const geo::Raster& naip, const GroundTruthOptions& options);

struct GroundTruthPaths {
  std::vector<std::string> lidar;  // files, or directories scanned for .las / .csv
  std::string naip;
  std::string out_dir;
};
// Writes tree_mask.tif, pixel_height.tif and treetops.csv.
GroundTruth cmd_ground_truth(const GroundTruthPaths& paths, const GroundTruthOptions& options);

// ---- prepare ------------------------------------------------------------

enum class BandSet { ms, rgb };
BandSet parse_band_set(const std::string& text);
std::size_t band_count(BandSet set);

struct ImagerySources {
  geo::Raster naip;  // R, G, B, NIR
  std::optional<geo::Raster> s2_10m;  // B2, B3, B4, B8; required for ms
  std::optional<geo::Raster> s2_20m;  // B5, B6, B7, B8A, B11, B12; required for ms
};

// Input stack on the NAIP grid: 3 NAIP bands for rgb, all 14 for ms.
// Sentinel bands are resampled bilinearly. Throws InputError when a source
// carries the wrong number of bands.
geo::RasterStack build_stack(const ImagerySources& sources, BandSet bands);

// Impervious proxy for the auxiliary task when no mask is supplied:
// NDVI < 0 on the NAIP bands.
geo::Raster impervious_from_ndvi(const geo::Raster& naip);

struct PrepareOptions {
  BandSet bands = BandSet::ms;
  std::size_t patch_size = 240;
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  std::size_t split_block = 0;
  double height_max = 80.0;
};

struct Prepared {
  geo::PatchSet patches;
  geo::NormalizationStats stats;
  std::vector<std::string> warnings;
};

// Tiles the stack and targets into patch_size windows. Normalisation
// statistics come from the training windows of the split that train()
// will draw with the same seed and test fraction (all windows when there
// are too few to split).
Prepared prepare(const geo::RasterStack& stack, const geo::Raster& tree_mask, const geo::Raster& pixel_height,
                 const geo::Raster& aux_mask, const PrepareOptions& options);

struct PreparePaths {
  std::string naip, s2_10m, s2_20m;
  std::string tree_mask, pixel_height;
  std::string aux_mask;  // optional
  std::string out;       // patch container; stats go to <out>.stats.json
};
Prepared cmd_prepare(const PreparePaths& paths, const PrepareOptions& options);

// ---- train / eval -------------------------------------------------------

struct TrainPaths {
  std::string patches;
  std::string out_dir;  // model.cnpm, history.csv, train_config.json
};
// config.model.in_bands == 0 takes the band count from the patches.
train::TrainResult cmd_train(const TrainPaths& paths, train::TrainConfig config);

struct EvalRun {
  std::string model;
  std::string patches;
};
struct EvalOptions {
  // Score the holdout drawn with this seed/fraction; fraction 0 scores all.
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  bool masked_mae = false;
};
// Writes results.csv and results.md to out_dir.
std::vector<eval::MetricsRow> cmd_eval(const std::vector<EvalRun>& runs, const EvalOptions& options,
                                       const std::string& out_dir);

// ---- predict ------------------------------------------------------------

struct Prediction {
  std::optional<geo::Raster> tree_prob, tree_mask, pixel_height, canopy_height, aux_prob;
};

// Normalises the stack with stats, runs the model over non-overlapping
// patch_size windows (edge windows zero-padded) and re-assembles full
// rasters. Heights stay in normalised units.
Prediction predict(const nn::UNetModel<float>& model, const geo::RasterStack& stack,
                   const geo::NormalizationStats& stats, std::size_t patch_size = 240, double threshold = 0.5);

struct PredictPaths {
  std::string model, stats;
  std::string naip, s2_10m, s2_20m;
  std::string out_dir;
};
Prediction cmd_predict(const PredictPaths& paths, std::size_t patch_size, double threshold);

// ---- aggregate ----------------------------------------------------------

struct AggregatePaths {
  std::string tree_mask;
  std::string height;  // pixel height; masked by tree_mask before use
  std::string zones;
  std::string out_dir;  // zones.csv, summary.json
};
struct AggregateResult {
  double citywide_cover = 0.0;
  std::vector<aggregate::ZoneStats> zones;
  std::vector<std::string> zone_errors;
};
AggregateResult cmd_aggregate(const AggregatePaths& paths, double height_scale);

// ---- synth --------------------------------------------------------------

synth::Scene cmd_synth(const synth::SceneOptions& options, const std::string& out_dir);

}  // namespace canopy::cli
