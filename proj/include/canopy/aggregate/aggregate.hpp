#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/geo/raster.hpp"

namespace canopy::aggregate {

// height where mask >= 0.5, 0 where the mask is below; nodata where either
// input is nodata.
geo::Raster canopy_height(const geo::Raster& mask, const geo::Raster& height);

// Ones over valid (non-nodata) pixels; a pixel counts as one when >= 0.5.
// Throws InputError when no pixel is valid.
double citywide_cover(const geo::Raster& mask);

// 0.059 -> "5.9%".
std::string format_percent(double fraction);

using Ring = std::vector<std::array<double, 2>>;

struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;
};

// One zone may hold several polygons (a GeoJSON MultiPolygon).
struct ZonePolygon {
  std::string id;
  std::vector<Polygon> parts;
};

// Throws InputError when a ring is not closed, has fewer than three
// distinct vertices, or intersects itself.
void validate_zone(const ZonePolygon& zone);

// Even-odd test against every ring of every part.
bool contains(const ZonePolygon& zone, double x, double y);

struct ZoneStats {
  std::string zone_id;
  std::size_t pixel_count = 0;
  std::optional<double> tree_cover;          // absent when pixel_count is 0
  std::optional<double> mean_canopy_height;  // absent without tree pixels
  std::string error;                         // non-empty for an invalid zone
};

struct ZonalOptions {
  // Multiply mean heights by this (80 turns normalised units into feet).
  double height_scale = 1.0;
};

// A valid pixel belongs to a zone when its centre is inside (even-odd).
// Zones may overlap; each counts shared pixels. Invalid zones come back
// with error set and zero counts. Output order follows the input.
std::vector<ZoneStats> zonal_stats(const geo::Raster& mask, const geo::Raster& height,
                                   std::span<const ZonePolygon> zones, const ZonalOptions& options = {});

// Header zone_id,pixel_count,tree_cover,mean_canopy_height. Zones with an
// error are left out; absent statistics are empty fields.
std::string zone_stats_csv(std::span<const ZoneStats> stats);

struct ZoneReadResult {
  std::vector<ZonePolygon> zones;
  // Features that could not be turned into a zone, one message each.
  std::vector<std::string> errors;
};

// FeatureCollection of Polygon / MultiPolygon features. The zone id is the
// feature's "id" property (strings kept, numbers printed), falling back to
// the feature-level id.
ZoneReadResult read_zones_geojson(const std::string& path);
void write_zones_geojson(const std::string& path, std::span<const ZonePolygon> zones);

}  // namespace canopy::aggregate
