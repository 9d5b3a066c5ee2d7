#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canopy/aggregate/aggregate.hpp"
#include "canopy/geo/raster.hpp"
#include "canopy/lidar/point_cloud.hpp"

namespace canopy::synth {

// Desk-scale stand-in for a city tile. Map units are metres, heights are
// feet above ground, imagery is on a 1 m grid.
struct SceneOptions {
  std::size_t n_trees = 5;
  std::size_t width_m = 120;
  std::size_t height_m = 120;
  double origin_x = 440000.0;
  double origin_y = 4640000.0;
  std::string crs_tag = "EPSG:26916";
  std::uint64_t seed = 0;

  double pulse_spacing = 0.35;    // metres between returns
  double radius_min = 5.0;        // crown radius range, metres
  double radius_max = 7.5;
  double height_min = 30.0;       // apex height range, feet
  double height_max = 70.0;
  double crown_slope = 1.0;       // max cone flank slope, feet per metre
  double min_separation = 22.0;   // apex-to-apex, metres
  double z_noise = 0.05;          // return height jitter, feet

  std::size_t road_spacing = 100;  // metres between road centre lines; 0 = none
  std::size_t road_width = 8;
  double buildings_per_ha = 2.0;

  std::size_t zones_x = 2;  // zone grid partitioning the extent
  std::size_t zones_y = 2;
  bool make_points = true;

  void validate() const;
};

struct PlantedTree {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;   // metres
  double height = 0.0;   // apex, feet
  double base = 0.0;     // crown rim height, feet
};

struct Scene {
  SceneOptions options;
  geo::GridGeometry grid;  // 1 m imagery / truth grid
  std::vector<PlantedTree> trees;
  geo::Raster naip;          // R, G, B, NIR at 1 m
  geo::Raster s2_10m;        // B2, B3, B4, B8
  geo::Raster s2_20m;        // B5, B6, B7, B8A, B11, B12
  geo::Raster planted_mask;  // 1 where the pixel centre is inside a crown disk
  geo::Raster planted_height;  // cone height at the pixel centre inside crowns, else 0
  geo::Raster impervious;    // roads and roofs
  lidar::PointCloud cloud;   // first returns
  std::vector<aggregate::ZonePolygon> zones;
  std::size_t planted_pixels = 0;
  double planted_fraction = 0.0;
};

Scene generate_scene(const SceneOptions& options);

// Cone surface of one tree at (x, y); negative outside the crown.
double crown_height(const PlantedTree& tree, double x, double y);

std::string manifest_json(const Scene& scene);

// Writes naip.tif, s2_10m.tif, s2_20m.tif, planted_mask.tif,
// planted_height.tif, impervious.tif, zones.geojson, manifest.json and
// (when points were made) cloud.las into dir, creating it if needed.
void write_scene(const Scene& scene, const std::string& dir);

}  // namespace canopy::synth
