#include "canopy/lidar/segment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "canopy/error.hpp"

namespace canopy::lidar {

namespace {

struct Offset {
  std::ptrdiff_t dr, dc;
};

std::vector<Offset> disk_offsets(double radius_pixels) {
  std::vector<Offset> out;
  const auto r = static_cast<std::ptrdiff_t>(std::floor(radius_pixels));
  const double r2 = radius_pixels * radius_pixels;
  for (std::ptrdiff_t dr = -r; dr <= r; ++dr) {
    for (std::ptrdiff_t dc = -r; dc <= r; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (static_cast<double>(dr * dr + dc * dc) <= r2 + 1e-9) out.push_back({dr, dc});
    }
  }
  return out;
}

}  // namespace

std::vector<TreeTop> local_maxima(const geo::Raster& chm, double window_radius, double min_height) {
  const geo::GridGeometry& g = chm.geometry();
  if (window_radius < g.pixel_size) {
    throw ConfigError("local_maxima: window radius must be at least one pixel");
  }
  const auto offsets = disk_offsets(window_radius / g.pixel_size);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  const auto v = chm.band(0);

  std::vector<std::vector<TreeTop>> per_row(g.height);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t row = 0; row < h; ++row) {
    for (std::ptrdiff_t col = 0; col < w; ++col) {
      const float center = v[row * w + col];
      if (chm.is_nodata(center) || center < min_height) continue;
      bool top = true;
      for (const Offset& o : offsets) {
        const std::ptrdiff_t r = row + o.dr, c = col + o.dc;
        if (r < 0 || c < 0 || r >= h || c >= w) continue;
        const float other = v[r * w + c];
        if (chm.is_nodata(other)) continue;
        const bool earlier = o.dr < 0 || (o.dr == 0 && o.dc < 0);
        if (other > center || (other == center && earlier)) {
          top = false;
          break;
        }
      }
      if (top) {
        per_row[row].push_back({static_cast<std::size_t>(row), static_cast<std::size_t>(col), center, 0});
      }
    }
  }
  std::vector<TreeTop> tops;
  for (auto& row : per_row) {
    for (TreeTop& t : row) {
      t.id = static_cast<std::int32_t>(tops.size() + 1);
      tops.push_back(t);
    }
  }
  return tops;
}

CrownMap dalponte_segment(const geo::Raster& chm, const std::vector<TreeTop>& tops,
                          const DalponteParams& params) {
  if (!(params.th_seed > 0.0 && params.th_seed < 1.0)) {
    throw ConfigError("dalponte_segment: th_seed must lie in (0, 1)");
  }
  if (!(params.th_cr > 0.0 && params.th_cr < 1.0)) {
    throw ConfigError("dalponte_segment: th_cr must lie in (0, 1)");
  }
  if (!(params.max_crown_pixels > 0.0)) {
    throw ConfigError("dalponte_segment: max crown distance must be positive");
  }
  const geo::GridGeometry& g = chm.geometry();
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  CrownMap map{g, std::vector<std::int32_t>(g.pixel_count(), 0)};
  const auto v = chm.band(0);

  struct Crown {
    const TreeTop* top;
    std::vector<std::ptrdiff_t> pixels;
    double sum = 0.0;
  };
  std::vector<Crown> crowns;
  for (const TreeTop& t : tops) {
    if (t.row >= g.height || t.col >= g.width) throw InputError("treetop outside CHM");
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t.row) * w + static_cast<std::ptrdiff_t>(t.col);
    if (chm.is_nodata(v[idx]) || map.labels[idx] != 0) continue;
    map.labels[idx] = t.id;
    crowns.push_back({&t, {idx}, v[idx]});
  }
  std::stable_sort(crowns.begin(), crowns.end(),
                   [](const Crown& a, const Crown& b) { return a.top->height > b.top->height; });

  const double max_d2 = params.max_crown_pixels * params.max_crown_pixels;
  const std::ptrdiff_t dr[4] = {-1, 0, 0, 1};
  const std::ptrdiff_t dc[4] = {0, -1, 1, 0};
  std::vector<std::vector<std::ptrdiff_t>> claimed(crowns.size());
  bool grown = true;
  while (grown) {
    grown = false;
    for (std::size_t k = 0; k < crowns.size(); ++k) {
      Crown& crown = crowns[k];
      const double seed_h = crown.top->height;
      const double mean = crown.sum / static_cast<double>(crown.pixels.size());
      const auto sr = static_cast<std::ptrdiff_t>(crown.top->row);
      const auto sc = static_cast<std::ptrdiff_t>(crown.top->col);
      for (std::ptrdiff_t idx : crown.pixels) {
        const std::ptrdiff_t row = idx / w, col = idx % w;
        for (int n = 0; n < 4; ++n) {
          const std::ptrdiff_t r = row + dr[n], c = col + dc[n];
          if (r < 0 || c < 0 || r >= h || c >= w) continue;
          const std::ptrdiff_t q = r * w + c;
          if (map.labels[q] != 0) continue;
          const float z = v[q];
          if (chm.is_nodata(z)) continue;
          const double d2 = static_cast<double>((r - sr) * (r - sr) + (c - sc) * (c - sc));
          if (z > params.th_seed * seed_h && z > params.th_cr * mean && z >= params.th_tree &&
              d2 <= max_d2) {
            map.labels[q] = crown.top->id;
            claimed[k].push_back(q);
          }
        }
      }
    }
    // Means are refreshed only after the whole ring has been assigned.
    for (std::size_t k = 0; k < crowns.size(); ++k) {
      for (std::ptrdiff_t q : claimed[k]) {
        crowns[k].pixels.push_back(q);
        crowns[k].sum += v[q];
        grown = true;
      }
      claimed[k].clear();
    }
  }
  return map;
}

TruthLayers rasterize_truth(const CrownMap& crowns, const geo::Raster& chm) {
  geo::require_same_geometry(crowns.geometry, chm.geometry(), "rasterize_truth");
  TruthLayers out{geo::Raster(chm.geometry(), 1, 0.0f, geo::kMaskNoData),
                  geo::Raster(chm.geometry(), 1, 0.0f, geo::kNoData)};
  const auto v = chm.band(0);
  auto mask = out.tree_mask.band(0);
  auto height = out.pixel_height.band(0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool defined = !chm.is_nodata(v[i]);
    height[i] = defined ? v[i] : 0.0f;
    mask[i] = (defined && crowns.labels[i] > 0) ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace canopy::lidar
