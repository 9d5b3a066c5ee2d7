#pragma once

#include "canopy/geo/raster.hpp"
#include "canopy/lidar/point_cloud.hpp"

namespace canopy::lidar {

// Keeps points whose containing NDVI pixel is strictly above threshold.
// Points over nodata or outside the raster are dropped.
PointCloud mask_by_ndvi(const PointCloud& cloud, const geo::Raster& ndvi, double threshold = 0.05);

// Keeps points with zmin <= z <= zmax.
PointCloud filter_height(const PointCloud& cloud, double zmin = 6.0, double zmax = 80.0);

// Points whose x/y fall inside [min_x, max_x) x (min_y, max_y].
PointCloud crop(const PointCloud& cloud, double min_x, double min_y, double max_x, double max_y);

}  // namespace canopy::lidar
