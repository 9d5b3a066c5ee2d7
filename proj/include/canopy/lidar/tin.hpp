#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "canopy/lidar/point_cloud.hpp"

namespace canopy::lidar {

// Delaunay triangulation of the x/y footprint of a point set (incremental
// Bowyer-Watson). Coordinates are snapped to a 2^20 lattice over the
// bounding box and all orientation/in-circle tests are evaluated exactly in
// 128-bit integers, so co-circular and collinear inputs are handled
// consistently. Sites that snap to the same lattice node are merged, keeping
// the highest z.
class Tin {
 public:
  using Triangle = std::array<std::uint32_t, 3>;  // indices into the input span, CCW

  explicit Tin(std::span<const Point> points);

  const std::vector<Triangle>& triangles() const { return triangles_; }
  // Number of distinct sites after merging duplicates.
  std::size_t site_count() const { return site_count_; }

 private:
  std::vector<Triangle> triangles_;
  std::size_t site_count_ = 0;
};

}  // namespace canopy::lidar
