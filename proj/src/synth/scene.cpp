#include "canopy/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "canopy/error.hpp"
#include "canopy/geo/raster_io.hpp"

namespace canopy::synth {

void SceneOptions::validate() const {
  if (width_m == 0 || height_m == 0) throw ConfigError("scene extent must be positive");
  if (!(pulse_spacing > 0.0)) throw ConfigError("pulse spacing must be positive");
  if (!(radius_min > 0.0 && radius_min <= radius_max)) throw ConfigError("bad crown radius range");
  if (!(height_min > 0.0 && height_min <= height_max)) throw ConfigError("bad tree height range");
  if (!(min_separation >= 2.0 * radius_max)) {
    throw ConfigError("min_separation must be at least twice the largest crown radius");
  }
  if (!(crown_slope >= 0.0) || height_min - crown_slope * radius_max <= 0.0) {
    throw ConfigError("crown slope would push the crown rim to the ground");
  }
  if (!(z_noise >= 0.0)) throw ConfigError("z_noise must be non-negative");
  if (road_spacing > 0 && road_width >= road_spacing) throw ConfigError("roads wider than their spacing");
  if (!(buildings_per_ha >= 0.0)) throw ConfigError("building density must be non-negative");
  if (zones_x == 0 || zones_y == 0) throw ConfigError("zone grid must be at least 1 x 1");
  if (zones_x > width_m || zones_y > height_m) throw ConfigError("more zones than metres along an axis");
}

double crown_height(const PlantedTree& t, double x, double y) {
  const double r = std::hypot(x - t.x, y - t.y);
  if (r > t.radius) return -1.0;
  return t.height - (t.height - t.base) * r / t.radius;
}

namespace {

enum Cover : std::uint8_t { grass = 0, road = 1, roof = 2 };

struct Building {
  std::size_t r0, c0, r1, c1;  // pixel rectangle [r0, r1) x [c0, c1)
  double height;               // feet
  double tone;                 // roof brightness offset
};

struct Layout {
  std::size_t w = 0, h = 0;
  std::vector<std::uint8_t> cover;
  std::vector<int> roof_of;   // building index + 1 per pixel
  std::vector<int> tree_of;   // tree index + 1 per pixel whose area a crown may touch
};

// Sentinel-2 style spectra at 1 m before block averaging:
// B2, B3, B4, B8, B5, B6, B7, B8A, B11, B12 (reflectance).
std::array<double, 10> spectra(const std::array<double, 4>& naip, bool vegetated) {
  const double r = naip[0] / 255.0, g = naip[1] / 255.0, b = naip[2] / 255.0, nir = naip[3] / 255.0;
  const double swir1 = vegetated ? 0.18 + 0.1 * r : 0.30 + 0.2 * r;
  const double swir2 = vegetated ? 0.09 + 0.1 * r : 0.25 + 0.2 * r;
  return {b, g, r, nir, 0.7 * r + 0.3 * nir, 0.4 * r + 0.6 * nir, 0.2 * r + 0.8 * nir, 0.97 * nir, swir1, swir2};
}

geo::Raster block_average(const std::vector<std::array<double, 10>>& fine, std::size_t w, std::size_t h,
                          const geo::GridGeometry& grid, std::size_t factor, std::size_t first, std::size_t count) {
  geo::GridGeometry g = grid;
  g.pixel_size = grid.pixel_size * double(factor);
  g.width = (w + factor - 1) / factor;
  g.height = (h + factor - 1) / factor;
  geo::Raster out(g, count, 0.0f);
  for (std::size_t R = 0; R < g.height; ++R) {
    for (std::size_t C = 0; C < g.width; ++C) {
      std::array<double, 10> sum{};
      std::size_t n = 0;
      for (std::size_t r = R * factor; r < std::min(h, (R + 1) * factor); ++r) {
        for (std::size_t c = C * factor; c < std::min(w, (C + 1) * factor); ++c) {
          for (std::size_t k = 0; k < 10; ++k) sum[k] += fine[r * w + c][k];
          ++n;
        }
      }
      for (std::size_t k = 0; k < count; ++k) out.at(k, R, C) = float(sum[first + k] / double(n));
    }
  }
  return out;
}

}  // namespace

Scene generate_scene(const SceneOptions& opt) {
  opt.validate();
  Scene s;
  s.options = opt;
  s.grid.origin_x = opt.origin_x;
  s.grid.origin_y = opt.origin_y;
  s.grid.pixel_size = 1.0;
  s.grid.width = opt.width_m;
  s.grid.height = opt.height_m;
  s.grid.crs_tag = opt.crs_tag;
  const std::size_t W = opt.width_m, H = opt.height_m;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Layout lay;
  lay.w = W;
  lay.h = H;
  lay.cover.assign(W * H, grass);
  lay.roof_of.assign(W * H, 0);
  lay.tree_of.assign(W * H, 0);

  // Roads: a regular grid of strips with a random phase.
  if (opt.road_spacing > 0) {
    const std::size_t phase_r = std::size_t(unit(rng) * double(opt.road_spacing));
    const std::size_t phase_c = std::size_t(unit(rng) * double(opt.road_spacing));
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        if ((r + phase_r) % opt.road_spacing < opt.road_width || (c + phase_c) % opt.road_spacing < opt.road_width) {
          lay.cover[r * W + c] = road;
        }
      }
    }
  }

  // Buildings off the roads.
  std::vector<Building> buildings;
  const auto n_buildings = std::size_t(std::llround(opt.buildings_per_ha * double(W * H) / 10000.0));
  for (std::size_t attempt = 0; buildings.size() < n_buildings && attempt < 50 * n_buildings + 50; ++attempt) {
    const std::size_t bw = 10 + std::size_t(unit(rng) * 15), bh = 10 + std::size_t(unit(rng) * 15);
    if (bw + 2 > W || bh + 2 > H) break;
    const std::size_t c0 = 1 + std::size_t(unit(rng) * double(W - bw - 1));
    const std::size_t r0 = 1 + std::size_t(unit(rng) * double(H - bh - 1));
    bool clear = true;
    for (std::size_t r = r0 - 1; r < r0 + bh + 1 && clear; ++r) {
      for (std::size_t c = c0 - 1; c < c0 + bw + 1 && clear; ++c) clear = lay.cover[r * W + c] == grass;
    }
    if (!clear) continue;
    buildings.push_back({r0, c0, r0 + bh, c0 + bw, 15.0 + unit(rng) * 30.0, unit(rng) * 20.0 - 10.0});
    for (std::size_t r = r0; r < r0 + bh; ++r) {
      for (std::size_t c = c0; c < c0 + bw; ++c) {
        lay.cover[r * W + c] = roof;
        lay.roof_of[r * W + c] = int(buildings.size());
      }
    }
  }

  // Trees on grass, crowns at least 2 m clear of roads and roofs, apexes
  // apart by min_separation.
  const double margin = 2.0;
  for (std::size_t attempt = 0; s.trees.size() < opt.n_trees; ++attempt) {
    if (attempt > 2000 * (opt.n_trees + 1)) {
      throw ConfigError("could not place " + std::to_string(opt.n_trees) + " trees in a " + std::to_string(W) +
                        " x " + std::to_string(H) + " m scene; enlarge the scene or lower the count");
    }
    PlantedTree t;
    t.radius = opt.radius_min + unit(rng) * (opt.radius_max - opt.radius_min);
    t.height = opt.height_min + unit(rng) * (opt.height_max - opt.height_min);
    // Shallow cones keep the apex pixel within a few tenths of a foot of
    // the true apex at the default pulse spacing.
    t.base = t.height - opt.crown_slope * (0.8 + 0.2 * unit(rng)) * t.radius;
    const double reach = t.radius + margin;
    if (2.0 * reach >= double(W) || 2.0 * reach >= double(H)) continue;
    const double lx = reach + unit(rng) * (double(W) - 2.0 * reach);
    const double ly = reach + unit(rng) * (double(H) - 2.0 * reach);
    t.x = opt.origin_x + lx;
    t.y = opt.origin_y - ly;
    bool ok = true;
    for (const auto& o : s.trees) ok = ok && std::hypot(o.x - t.x, o.y - t.y) >= opt.min_separation;
    const std::size_t c0 = std::size_t(std::floor(lx - reach)), c1 = std::size_t(std::ceil(lx + reach));
    const std::size_t r0 = std::size_t(std::floor(ly - reach)), r1 = std::size_t(std::ceil(ly + reach));
    for (std::size_t r = r0; r < std::min(r1, H) && ok; ++r) {
      for (std::size_t c = c0; c < std::min(c1, W) && ok; ++c) ok = lay.cover[r * W + c] == grass;
    }
    if (!ok) continue;
    t.id = int(s.trees.size()) + 1;
    s.trees.push_back(t);
    const std::size_t t0r = std::size_t(std::floor(ly - t.radius)), t1r = std::size_t(std::ceil(ly + t.radius));
    const std::size_t t0c = std::size_t(std::floor(lx - t.radius)), t1c = std::size_t(std::ceil(lx + t.radius));
    for (std::size_t r = t0r; r < std::min(t1r, H); ++r) {
      for (std::size_t c = t0c; c < std::min(t1c, W); ++c) lay.tree_of[r * W + c] = t.id;
    }
  }

  // First-return surface at a map position.
  auto surface = [&](double x, double y) {
    const auto col = std::ptrdiff_t(std::floor(x - opt.origin_x));
    const auto row = std::ptrdiff_t(std::floor(opt.origin_y - y));
    if (row < 0 || col < 0 || row >= std::ptrdiff_t(H) || col >= std::ptrdiff_t(W)) return 0.0;
    const std::size_t i = std::size_t(row) * W + std::size_t(col);
    double z = 0.0;
    if (lay.roof_of[i]) z = buildings[std::size_t(lay.roof_of[i] - 1)].height;
    if (lay.tree_of[i]) z = std::max(z, crown_height(s.trees[std::size_t(lay.tree_of[i] - 1)], x, y));
    return z;
  };

  // Truth rasters and imagery.
  s.planted_mask = geo::Raster(s.grid, 1, 0.0f, geo::kMaskNoData);
  s.planted_height = geo::Raster(s.grid, 1, 0.0f);
  s.impervious = geo::Raster(s.grid, 1, 0.0f, geo::kMaskNoData);
  s.naip = geo::Raster(s.grid, 4, 0.0f);
  std::normal_distribution<double> noise(0.0, 2.0);
  std::vector<std::array<double, 10>> fine(W * H);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t i = r * W + c;
      const double x = s.grid.center_x(std::ptrdiff_t(c)), y = s.grid.center_y(std::ptrdiff_t(r));
      double crown = -1.0;
      if (lay.tree_of[i]) crown = crown_height(s.trees[std::size_t(lay.tree_of[i] - 1)], x, y);
      std::array<double, 4> px{};
      bool vegetated = true;
      if (crown >= 0.0) {
        s.planted_mask.at(r, c) = 1.0f;
        s.planted_height.at(r, c) = float(crown);
        ++s.planted_pixels;
        // Taller canopy is brighter in NIR and darker in red.
        px = {45.0 - 0.15 * crown, 75.0 - 0.1 * crown, 40.0, 90.0 + 2.2 * crown};
      } else if (lay.cover[i] == road) {
        px = {125.0, 125.0, 120.0, 105.0};
        vegetated = false;
      } else if (lay.cover[i] == roof) {
        const double tone = buildings[std::size_t(lay.roof_of[i] - 1)].tone;
        px = {150.0 + tone, 140.0 + tone, 135.0 + tone, 125.0 + tone};
        vegetated = false;
      } else {
        px = {70.0, 95.0, 60.0, 120.0};
      }
      if (!vegetated) s.impervious.at(r, c) = 1.0f;
      for (std::size_t b = 0; b < 4; ++b) {
        px[b] = std::clamp(px[b] + noise(rng), 1.0, 255.0);
        s.naip.at(b, r, c) = float(px[b]);
      }
      fine[i] = spectra(px, vegetated);
    }
  }
  s.planted_fraction = double(s.planted_pixels) / double(W * H);
  s.s2_10m = block_average(fine, W, H, s.grid, 10, 0, 4);
  s.s2_20m = block_average(fine, W, H, s.grid, 20, 4, 6);

  if (opt.make_points) {
    std::normal_distribution<double> zn(0.0, opt.z_noise);
    const auto nx = std::size_t(std::ceil(double(W) / opt.pulse_spacing));
    const auto ny = std::size_t(std::ceil(double(H) / opt.pulse_spacing));
    s.cloud.points.reserve(nx * ny);
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        // Millimetre lattice, as LAS stores it, kept off pixel edges so the
        // written file lands every return in the same pixel.
        auto snap = [](double v) {
          auto mm = std::llround(v * 1000.0);
          if (mm % 1000 == 0) ++mm;
          return double(mm) / 1000.0;
        };
        const double lx = snap((double(i) + unit(rng)) * opt.pulse_spacing);
        const double ly = snap((double(j) + unit(rng)) * opt.pulse_spacing);
        const double jitter = opt.z_noise > 0.0 ? zn(rng) : 0.0;
        if (lx >= double(W) || ly >= double(H)) continue;
        const double x = opt.origin_x + lx, y = opt.origin_y - ly;
        s.cloud.points.push_back({x, y, surface(x, y) + jitter});
      }
    }
  }

  for (std::size_t zr = 0; zr < opt.zones_y; ++zr) {
    for (std::size_t zc = 0; zc < opt.zones_x; ++zc) {
      const double x0 = opt.origin_x + double(zc * W / opt.zones_x);
      const double x1 = opt.origin_x + double((zc + 1) * W / opt.zones_x);
      const double y0 = opt.origin_y - double(zr * H / opt.zones_y);
      const double y1 = opt.origin_y - double((zr + 1) * H / opt.zones_y);
      aggregate::ZonePolygon z;
      z.id = "block-" + std::to_string(zr * opt.zones_x + zc + 1);
      z.parts.push_back({{{x0, y1}, {x1, y1}, {x1, y0}, {x0, y0}, {x0, y1}}, {}});
      s.zones.push_back(std::move(z));
    }
  }
  return s;
}

std::string manifest_json(const Scene& s) {
  nlohmann::json j;
  j["seed"] = s.options.seed;
  j["n_trees"] = s.trees.size();
  j["grid"] = {{"origin_x", s.grid.origin_x}, {"origin_y", s.grid.origin_y}, {"pixel_size", s.grid.pixel_size},
               {"width", s.grid.width},       {"height", s.grid.height},     {"crs", s.grid.crs_tag}};
  j["units"] = {{"xy", "m"}, {"z", "ft"}};
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : s.trees) {
    const geo::Cell cell = s.grid.cell_of(t.x, t.y);
    trees.push_back({{"id", t.id},
                     {"x", t.x},
                     {"y", t.y},
                     {"row", cell.row},
                     {"col", cell.col},
                     {"radius_m", t.radius},
                     {"height_ft", t.height},
                     {"base_ft", t.base}});
  }
  j["planted_pixels"] = s.planted_pixels;
  j["pixel_count"] = s.grid.pixel_count();
  j["planted_cover_fraction"] = s.planted_fraction;
  j["point_count"] = s.cloud.size();
  return j.dump(2);
}

void write_scene(const Scene& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  geo::write_geotiff((d / "naip.tif").string(), s.naip);
  geo::write_geotiff((d / "s2_10m.tif").string(), s.s2_10m);
  geo::write_geotiff((d / "s2_20m.tif").string(), s.s2_20m);
  geo::write_geotiff((d / "planted_mask.tif").string(), s.planted_mask, geo::SampleType::uint8);
  geo::write_geotiff((d / "planted_height.tif").string(), s.planted_height);
  geo::write_geotiff((d / "impervious.tif").string(), s.impervious, geo::SampleType::uint8);
  aggregate::write_zones_geojson((d / "zones.geojson").string(), s.zones);
  if (s.options.make_points) lidar::write_las((d / "cloud.las").string(), s.cloud);
  std::ofstream m(d / "manifest.json");
  if (!m) throw IoError("cannot write " + (d / "manifest.json").string());
  m << manifest_json(s) << '\n';
}

}  // namespace canopy::synth
