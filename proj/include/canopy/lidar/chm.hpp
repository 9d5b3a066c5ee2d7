#pragma once

#include <vector>

#include "canopy/geo/raster.hpp"
#include "canopy/lidar/point_cloud.hpp"

namespace canopy::lidar {

// Per-pixel maximum return height; empty pixels are nodata.
geo::Raster naive_chm(const PointCloud& cloud, const geo::GridGeometry& geometry);

// Height ladder {0, 2, 5, 10, 15} m expressed in feet.
std::vector<double> default_pitfree_thresholds_ft();

struct PitFreeOptions {
  std::vector<double> thresholds = default_pitfree_thresholds_ft();  // ascending, z units
  double max_edge_base = 1.5;   // map units, applied to the first layer; <= 0 disables
  double max_edge_upper = 5.0;  // map units, applied to every higher layer
};

// Pit-free CHM. For each threshold t the points with z >= t are
// triangulated, triangles with an edge longer than the layer's max_edge are
// dropped, and the surface is sampled at every covered pixel centre and at
// the layer's own returns. The result is the per-pixel maximum over layers;
// pixels sampled by no layer are nodata.
//
// Throws DegenerateInputError when the cloud holds fewer than three points
// or only collinear ones.
geo::Raster pitfree_chm(const PointCloud& cloud, const geo::GridGeometry& geometry,
                        const PitFreeOptions& options = {});

// One triangulated layer of the ladder (exposed for tests and benchmarks).
geo::Raster rasterize_layer(const PointCloud& cloud, const geo::GridGeometry& geometry,
                            double threshold, double max_edge);

}  // namespace canopy::lidar
