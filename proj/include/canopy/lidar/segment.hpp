#pragma once

#include <cstdint>
#include <vector>

#include "canopy/geo/raster.hpp"

namespace canopy::lidar {

struct TreeTop {
  std::size_t row = 0;
  std::size_t col = 0;
  double height = 0.0;
  std::int32_t id = 0;  // 1-based, row-major detection order
};

// A pixel is a treetop when it is at least min_height and no pixel within
// window_radius (map units, circular) is higher. Among equal pixels in one
// window only the first in row-major order survives. Nodata pixels neither
// qualify nor suppress.
std::vector<TreeTop> local_maxima(const geo::Raster& chm, double window_radius,
                                  double min_height = 6.0);

// Per-pixel crown labels: 0 = no tree, k > 0 = crown of the treetop with id k.
struct CrownMap {
  geo::GridGeometry geometry;
  std::vector<std::int32_t> labels;

  std::int32_t at(std::size_t row, std::size_t col) const {
    return labels[row * geometry.width + col];
  }
};

struct DalponteParams {
  double th_seed = 0.45;
  double th_cr = 0.55;
  double th_tree = 6.0;
  double max_crown_pixels = 10.0;  // Euclidean distance from the seed, in pixels
};

// Seeded region growing. Crowns grow one 4-connected ring per iteration; a
// pixel joins crown k when it is unclaimed and its height exceeds
// th_seed * seed height and th_cr * the crown's mean height at the start of
// the iteration, is at least th_tree, and lies within max_crown_pixels of
// the seed. Crowns are visited in descending seed height, so contested
// pixels go to the taller tree.
CrownMap dalponte_segment(const geo::Raster& chm, const std::vector<TreeTop>& tops,
                          const DalponteParams& params = {});

struct TruthLayers {
  geo::Raster tree_mask;     // 1 inside a crown, 0 elsewhere
  geo::Raster pixel_height;  // CHM value where defined, else 0
};

TruthLayers rasterize_truth(const CrownMap& crowns, const geo::Raster& chm);

}  // namespace canopy::lidar
