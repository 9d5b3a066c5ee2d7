#include "canopy/lidar/filters.hpp"

#include <cmath>

#include "canopy/error.hpp"

namespace canopy::lidar {

PointCloud mask_by_ndvi(const PointCloud& cloud, const geo::Raster& ndvi, double threshold) {
  if (ndvi.bands() != 1) throw InputError("mask_by_ndvi: NDVI raster must be single-band");
  const geo::GridGeometry& g = ndvi.geometry();
  PointCloud out;
  out.points.reserve(cloud.size() / 2);
  for (const Point& p : cloud.points) {
    const auto cell = g.locate(p.x, p.y);
    if (!cell) continue;
    const float v = ndvi.at(static_cast<std::size_t>(cell->row), static_cast<std::size_t>(cell->col));
    if (ndvi.is_nodata(v)) continue;
    if (v > static_cast<float>(threshold)) out.points.push_back(p);
  }
  return out;
}

PointCloud filter_height(const PointCloud& cloud, double zmin, double zmax) {
  if (zmin > zmax) throw ConfigError("filter_height: zmin exceeds zmax");
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    if (p.z >= zmin && p.z <= zmax) out.points.push_back(p);
  }
  return out;
}

PointCloud crop(const PointCloud& cloud, double min_x, double min_y, double max_x, double max_y) {
  PointCloud out;
  for (const Point& p : cloud.points) {
    if (p.x >= min_x && p.x < max_x && p.y > min_y && p.y <= max_y) out.points.push_back(p);
  }
  return out;
}

}  // namespace canopy::lidar
