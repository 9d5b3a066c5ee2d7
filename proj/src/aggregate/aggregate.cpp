#include "canopy/aggregate/aggregate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "canopy/error.hpp"

namespace canopy::aggregate {

geo::Raster canopy_height(const geo::Raster& mask, const geo::Raster& height) {
  geo::require_same_geometry(mask.geometry(), height.geometry(), "canopy_height");
  geo::Raster out(height.geometry(), 1, 0.0f, height.nodata());
  const auto m = mask.band(0);
  const auto h = height.band(0);
  auto o = out.band(0);
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (mask.is_nodata(m[i]) || height.is_nodata(h[i])) {
      o[i] = out.nodata();
    } else {
      o[i] = m[i] >= 0.5f ? h[i] : 0.0f;
    }
  }
  return out;
}

double citywide_cover(const geo::Raster& mask) {
  std::size_t ones = 0, valid = 0;
  for (float v : mask.band(0)) {
    if (mask.is_nodata(v)) continue;
    ++valid;
    ones += v >= 0.5f;
  }
  if (valid == 0) throw InputError("citywide_cover: mask has no valid pixels");
  return double(ones) / double(valid);
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

namespace {

using Pt = std::array<double, 2>;

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

bool on_segment(const Pt& a, const Pt& b, const Pt& p) {
  return std::min(a[0], b[0]) <= p[0] && p[0] <= std::max(a[0], b[0]) && std::min(a[1], b[1]) <= p[1] &&
         p[1] <= std::max(a[1], b[1]);
}

bool segments_intersect(const Pt& a, const Pt& b, const Pt& c, const Pt& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  return (d1 == 0 && on_segment(c, d, a)) || (d2 == 0 && on_segment(c, d, b)) ||
         (d3 == 0 && on_segment(a, b, c)) || (d4 == 0 && on_segment(a, b, d));
}

void validate_ring(const Ring& input, const std::string& what) {
  if (input.size() < 4 || input.front() != input.back()) {
    throw InputError(what + " is not a closed ring of at least 3 vertices");
  }
  // Repeated consecutive vertices are harmless; drop them before the edge
  // tests.
  Ring ring;
  for (const auto& p : input) {
    if (ring.empty() || ring.back() != p) ring.push_back(p);
  }
  if (ring.size() < 4) throw InputError(what + " has fewer than 3 distinct vertices");
  Ring distinct(ring.begin(), ring.end() - 1);
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3) {
    throw InputError(what + " has fewer than 3 distinct vertices");
  }
  for (const auto& p : ring) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw InputError(what + " has a non-finite coordinate");
  }
  const std::size_t n = ring.size() - 1;  // edges
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Neighbouring edges share one vertex; they may only overlap there.
        const Pt& shared = j == i + 1 ? ring[j] : ring[i];
        const Pt& a = j == i + 1 ? ring[i] : ring[i + 1];
        const Pt& b = j == i + 1 ? ring[j + 1] : ring[j];
        if (cross(shared, a, b) == 0 && ((a[0] - shared[0]) * (b[0] - shared[0]) +
                                         (a[1] - shared[1]) * (b[1] - shared[1])) > 0) {
          throw InputError(what + " folds back on itself at vertex " + std::to_string(j == i + 1 ? j : i));
        }
        continue;
      }
      if (segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1])) {
        throw InputError(what + " self-intersects (edges " + std::to_string(i) + " and " + std::to_string(j) + ")");
      }
    }
  }
}

bool ring_crossings_odd(const Ring& ring, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Pt& a = ring[i];
    const Pt& b = ring[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
  }
  return inside;
}

}  // namespace

void validate_zone(const ZonePolygon& zone) {
  if (zone.parts.empty()) throw InputError("zone " + zone.id + " has no polygons");
  for (std::size_t p = 0; p < zone.parts.size(); ++p) {
    const std::string what = "zone " + zone.id + " polygon " + std::to_string(p);
    validate_ring(zone.parts[p].exterior, what + " exterior");
    for (std::size_t h = 0; h < zone.parts[p].holes.size(); ++h) {
      validate_ring(zone.parts[p].holes[h], what + " hole " + std::to_string(h));
    }
  }
}

bool contains(const ZonePolygon& zone, double x, double y) {
  bool inside = false;
  for (const auto& part : zone.parts) {
    inside ^= ring_crossings_odd(part.exterior, x, y);
    for (const auto& hole : part.holes) inside ^= ring_crossings_odd(hole, x, y);
  }
  return inside;
}

std::vector<ZoneStats> zonal_stats(const geo::Raster& mask, const geo::Raster& height,
                                   std::span<const ZonePolygon> zones, const ZonalOptions& options) {
  geo::require_same_geometry(mask.geometry(), height.geometry(), "zonal_stats");
  const geo::GridGeometry& g = mask.geometry();
  std::vector<ZoneStats> out(zones.size());
  const std::ptrdiff_t nz = std::ptrdiff_t(zones.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t z = 0; z < nz; ++z) {
    const ZonePolygon& zone = zones[std::size_t(z)];
    ZoneStats& s = out[std::size_t(z)];
    s.zone_id = zone.id;
    try {
      validate_zone(zone);
    } catch (const InputError& e) {
      s.error = e.what();
      continue;
    }
    double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
    for (const auto& part : zone.parts) {
      for (const auto& p : part.exterior) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
      }
    }
    // Pixel centres that can fall inside the bounding box.
    const double ps = g.pixel_size;
    const auto clamp_idx = [](double v, std::size_t n) {
      return std::size_t(std::clamp(v, 0.0, double(n)));
    };
    const std::size_t c0 = clamp_idx(std::floor((min_x - g.origin_x) / ps - 0.5), g.width);
    const std::size_t c1 = clamp_idx(std::ceil((max_x - g.origin_x) / ps - 0.5) + 1, g.width);
    const std::size_t r0 = clamp_idx(std::floor((g.origin_y - max_y) / ps - 0.5), g.height);
    const std::size_t r1 = clamp_idx(std::ceil((g.origin_y - min_y) / ps - 0.5) + 1, g.height);
    std::size_t trees = 0;
    double height_sum = 0.0;
    std::size_t height_n = 0;
    for (std::size_t r = r0; r < r1; ++r) {
      const double y = g.center_y(std::ptrdiff_t(r));
      for (std::size_t c = c0; c < c1; ++c) {
        const float m = mask.at(r, c);
        if (mask.is_nodata(m)) continue;
        if (!contains(zone, g.center_x(std::ptrdiff_t(c)), y)) continue;
        ++s.pixel_count;
        if (m < 0.5f) continue;
        ++trees;
        const float h = height.at(r, c);
        if (!height.is_nodata(h)) {
          height_sum += h;
          ++height_n;
        }
      }
    }
    if (s.pixel_count > 0) s.tree_cover = double(trees) / double(s.pixel_count);
    if (height_n > 0) s.mean_canopy_height = height_sum / double(height_n) * options.height_scale;
  }
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

Ring parse_ring(const nlohmann::json& j) {
  Ring ring;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() < 2) throw InputError("coordinate is not an [x, y] pair");
    ring.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return ring;
}

Polygon parse_polygon(const nlohmann::json& rings) {
  if (!rings.is_array() || rings.empty()) throw InputError("polygon has no rings");
  Polygon poly;
  poly.exterior = parse_ring(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) poly.holes.push_back(parse_ring(rings[i]));
  return poly;
}

nlohmann::json ring_json(const Ring& ring) {
  auto out = nlohmann::json::array();
  for (const auto& p : ring) out.push_back({p[0], p[1]});
  return out;
}

}  // namespace

std::string zone_stats_csv(std::span<const ZoneStats> stats) {
  std::ostringstream out;
  out << "zone_id,pixel_count,tree_cover,mean_canopy_height\n";
  for (const auto& s : stats) {
    if (!s.error.empty()) continue;
    out << csv_field(s.zone_id) << ',' << s.pixel_count << ',' << (s.tree_cover ? shortest(*s.tree_cover) : "")
        << ',' << (s.mean_canopy_height ? shortest(*s.mean_canopy_height) : "") << '\n';
  }
  return out.str();
}

ZoneReadResult read_zones_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw InputError(path + ": expected a GeoJSON FeatureCollection");
  }
  ZoneReadResult result;
  std::size_t index = 0;
  for (const auto& f : doc.at("features")) {
    const std::string where = path + " feature " + std::to_string(index++);
    try {
      ZonePolygon zone;
      const nlohmann::json* id = nullptr;
      if (f.contains("properties") && f["properties"].is_object() && f["properties"].contains("id")) {
        id = &f["properties"]["id"];
      } else if (f.contains("id")) {
        id = &f["id"];
      }
      if (!id || id->is_null()) throw InputError("feature has no id property");
      zone.id = id->is_string() ? id->get<std::string>() : id->dump();
      const auto& geom = f.at("geometry");
      const std::string type = geom.at("type").get<std::string>();
      const auto& coords = geom.at("coordinates");
      if (type == "Polygon") {
        zone.parts.push_back(parse_polygon(coords));
      } else if (type == "MultiPolygon") {
        for (const auto& poly : coords) zone.parts.push_back(parse_polygon(poly));
      } else {
        throw InputError("unsupported geometry type " + type);
      }
      result.zones.push_back(std::move(zone));
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back(where + ": " + e.what());
    } catch (const InputError& e) {
      result.errors.push_back(where + ": " + e.what());
    }
  }
  return result;
}

void write_zones_geojson(const std::string& path, std::span<const ZonePolygon> zones) {
  nlohmann::json doc;
  doc["type"] = "FeatureCollection";
  auto& features = doc["features"] = nlohmann::json::array();
  for (const auto& z : zones) {
    nlohmann::json geom;
    auto polygon_json = [](const Polygon& p) {
      auto rings = nlohmann::json::array();
      rings.push_back(ring_json(p.exterior));
      for (const auto& h : p.holes) rings.push_back(ring_json(h));
      return rings;
    };
    if (z.parts.size() == 1) {
      geom = {{"type", "Polygon"}, {"coordinates", polygon_json(z.parts[0])}};
    } else {
      auto polys = nlohmann::json::array();
      for (const auto& p : z.parts) polys.push_back(polygon_json(p));
      geom = {{"type", "MultiPolygon"}, {"coordinates", polys}};
    }
    features.push_back({{"type", "Feature"}, {"properties", {{"id", z.id}}}, {"geometry", geom}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace canopy::aggregate
