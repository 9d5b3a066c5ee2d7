#include "canopy/lidar/chm.hpp"

#include <algorithm>
#include <cmath>

#include "canopy/error.hpp"
#include "canopy/lidar/tin.hpp"

namespace canopy::lidar {

namespace {

constexpr double kFeetPerMetre = 1.0 / 0.3048;

void splat_returns(const PointCloud& cloud, geo::Raster& out) {
  const geo::GridGeometry& g = out.geometry();
  for (const Point& p : cloud.points) {
    const auto cell = g.locate(p.x, p.y);
    if (!cell) continue;
    float& v = out.at(static_cast<std::size_t>(cell->row), static_cast<std::size_t>(cell->col));
    const auto z = static_cast<float>(p.z);
    if (out.is_nodata(v) || z > v) v = z;
  }
}

double edge2(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool collinear(const PointCloud& cloud) {
  const Point& a = cloud.points.front();
  const Point* far = &a;
  double best = 0.0;
  for (const Point& p : cloud.points) {
    const double d = edge2(a, p);
    if (d > best) {
      best = d;
      far = &p;
    }
  }
  if (best == 0.0) return true;
  const double len = std::sqrt(best);
  const double ux = (far->x - a.x) / len, uy = (far->y - a.y) / len;
  for (const Point& p : cloud.points) {
    if (std::abs((p.x - a.x) * uy - (p.y - a.y) * ux) > 1e-9 * len) return false;
  }
  return true;
}

}  // namespace

geo::Raster naive_chm(const PointCloud& cloud, const geo::GridGeometry& geometry) {
  geo::Raster out(geometry, 1, geo::kNoData, geo::kNoData);
  splat_returns(cloud, out);
  return out;
}

std::vector<double> default_pitfree_thresholds_ft() {
  return {0.0, 2.0 * kFeetPerMetre, 5.0 * kFeetPerMetre, 10.0 * kFeetPerMetre,
          15.0 * kFeetPerMetre};
}

geo::Raster rasterize_layer(const PointCloud& cloud, const geo::GridGeometry& g, double threshold,
                            double max_edge) {
  PointCloud layer;
  for (const Point& p : cloud.points) {
    if (p.z >= threshold) layer.points.push_back(p);
  }
  geo::Raster out(g, 1, geo::kNoData, geo::kNoData);
  splat_returns(layer, out);
  if (layer.size() < 3) return out;

  const Tin tin(layer.points);
  const double limit2 = max_edge > 0.0 ? max_edge * max_edge : -1.0;
  const double ps = g.pixel_size;
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  const auto h = static_cast<std::ptrdiff_t>(g.height);

  for (const auto& tri : tin.triangles()) {
    const Point& a = layer.points[tri[0]];
    const Point& b = layer.points[tri[1]];
    const Point& c = layer.points[tri[2]];
    if (limit2 > 0.0 && (edge2(a, b) > limit2 || edge2(b, c) > limit2 || edge2(c, a) > limit2)) {
      continue;
    }
    const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (det == 0.0) continue;
    // Pixel centres inside the triangle's bounding box.
    const double lo_x = std::min({a.x, b.x, c.x}), hi_x = std::max({a.x, b.x, c.x});
    const double lo_y = std::min({a.y, b.y, c.y}), hi_y = std::max({a.y, b.y, c.y});
    const auto c0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((lo_x - g.origin_x) / ps - 0.5)));
    const auto c1 = std::min<std::ptrdiff_t>(w - 1, static_cast<std::ptrdiff_t>(std::floor((hi_x - g.origin_x) / ps - 0.5)));
    const auto r0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((g.origin_y - hi_y) / ps - 0.5)));
    const auto r1 = std::min<std::ptrdiff_t>(h - 1, static_cast<std::ptrdiff_t>(std::floor((g.origin_y - lo_y) / ps - 0.5)));
    const double tol = -1e-12;
    for (std::ptrdiff_t row = r0; row <= r1; ++row) {
      const double y = g.center_y(row);
      for (std::ptrdiff_t col = c0; col <= c1; ++col) {
        const double x = g.center_x(col);
        const double l1 = ((x - a.x) * (c.y - a.y) - (c.x - a.x) * (y - a.y)) / det;
        const double l2 = ((b.x - a.x) * (y - a.y) - (x - a.x) * (b.y - a.y)) / det;
        const double l0 = 1.0 - l1 - l2;
        if (l0 < tol || l1 < tol || l2 < tol) continue;
        const auto z = static_cast<float>(l0 * a.z + l1 * b.z + l2 * c.z);
        float& v = out.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
        if (out.is_nodata(v) || z > v) v = z;
      }
    }
  }
  return out;
}

geo::Raster pitfree_chm(const PointCloud& cloud, const geo::GridGeometry& geometry,
                        const PitFreeOptions& options) {
  geometry.validate();
  if (options.thresholds.empty()) throw ConfigError("pitfree_chm: empty threshold ladder");
  if (!std::is_sorted(options.thresholds.begin(), options.thresholds.end())) {
    throw ConfigError("pitfree_chm: thresholds must be ascending");
  }
  if (cloud.size() < 3) {
    throw DegenerateInputError("pitfree_chm: need at least 3 points, got " +
                               std::to_string(cloud.size()));
  }
  if (collinear(cloud)) {
    throw DegenerateInputError("pitfree_chm: points are collinear");
  }

  const auto n = static_cast<std::ptrdiff_t>(options.thresholds.size());
  std::vector<geo::Raster> layers(options.thresholds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double edge = i == 0 ? options.max_edge_base : options.max_edge_upper;
    layers[i] = rasterize_layer(cloud, geometry, options.thresholds[i], edge);
  }

  geo::Raster out(geometry, 1, geo::kNoData, geo::kNoData);
  for (const geo::Raster& layer : layers) {
    auto dst = out.band(0);
    auto src = layer.band(0);
    for (std::size_t k = 0; k < dst.size(); ++k) {
      if (layer.is_nodata(src[k])) continue;
      if (out.is_nodata(dst[k]) || src[k] > dst[k]) dst[k] = src[k];
    }
  }
  return out;
}

}  // namespace canopy::lidar
