#include "canopy/geo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "canopy/error.hpp"

namespace canopy::geo {

namespace {

void require_single_band(const Raster& r, const char* what) {
  if (r.bands() != 1) throw InputError(std::string(what) + ": expected a single-band raster");
}

void require_alignable(const GridGeometry& a, const GridGeometry& b, const char* what) {
  if (!a.alignable(b)) {
    throw AlignmentError(std::string(what) + ": crs mismatch ('" + a.crs_tag + "' vs '" +
                         b.crs_tag + "')");
  }
}

// Offset of b's origin from a's origin in whole pixels; throws when the two
// lattices do not coincide.
std::ptrdiff_t lattice_offset(double from, double to, double pixel_size, const char* what) {
  const double steps = (to - from) / pixel_size;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-6) {
    throw AlignmentError(std::string(what) + ": tiles are not on a common pixel lattice");
  }
  return static_cast<std::ptrdiff_t>(rounded);
}

}  // namespace

Raster ndvi(const Raster& nir, const Raster& red) {
  require_single_band(nir, "ndvi");
  require_single_band(red, "ndvi");
  require_same_geometry(nir.geometry(), red.geometry(), "ndvi");

  Raster out(nir.geometry(), 1, 0.0f, kNoData);
  const auto n = nir.band(0);
  const auto r = red.band(0);
  auto o = out.band(0);
  const auto count = static_cast<std::ptrdiff_t>(o.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const float nv = n[i];
    const float rv = r[i];
    if (nir.is_nodata(nv) || red.is_nodata(rv)) {
      o[i] = kNoData;
      continue;
    }
    const double sum = static_cast<double>(nv) + rv;
    o[i] = sum == 0.0 ? kNoData : static_cast<float>((static_cast<double>(nv) - rv) / sum);
  }
  return out;
}

Raster resample_to(const Raster& src, const GridGeometry& target, ResampleMethod method) {
  require_alignable(src.geometry(), target, "resample_to");
  target.validate();

  const GridGeometry& sg = src.geometry();
  const auto sw = static_cast<std::ptrdiff_t>(sg.width);
  const auto sh = static_cast<std::ptrdiff_t>(sg.height);
  Raster out(target, src.bands(), src.nodata(), src.nodata());

  const auto rows = static_cast<std::ptrdiff_t>(target.height);
  for (std::size_t b = 0; b < src.bands(); ++b) {
    const auto in = src.band(b);
    auto dst = out.band(b);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t row = 0; row < rows; ++row) {
      const double y = target.center_y(row);
      for (std::size_t col = 0; col < target.width; ++col) {
        const double x = target.center_x(static_cast<std::ptrdiff_t>(col));
        const auto cell = sg.locate(x, y);
        if (!cell) continue;
        float value = src.nodata();
        if (method == ResampleMethod::nearest) {
          value = in[cell->row * sw + cell->col];
        } else {
          // Continuous source coordinates with pixel centres at integers.
          const double u = std::clamp((x - sg.origin_x) / sg.pixel_size - 0.5, 0.0,
                                      static_cast<double>(sw - 1));
          const double v = std::clamp((sg.origin_y - y) / sg.pixel_size - 0.5, 0.0,
                                      static_cast<double>(sh - 1));
          const auto c0 = static_cast<std::ptrdiff_t>(std::floor(u));
          const auto r0 = static_cast<std::ptrdiff_t>(std::floor(v));
          const auto c1 = std::min(c0 + 1, sw - 1);
          const auto r1 = std::min(r0 + 1, sh - 1);
          const double fu = u - static_cast<double>(c0);
          const double fv = v - static_cast<double>(r0);
          const double w[4] = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
          const float s[4] = {in[r0 * sw + c0], in[r0 * sw + c1], in[r1 * sw + c0],
                              in[r1 * sw + c1]};
          double acc = 0.0;
          bool missing = false;
          for (int k = 0; k < 4; ++k) {
            if (w[k] == 0.0) continue;
            if (src.is_nodata(s[k])) {
              missing = true;
              break;
            }
            acc += w[k] * s[k];
          }
          if (!missing) value = static_cast<float>(acc);
        }
        dst[static_cast<std::size_t>(row) * target.width + col] = value;
      }
    }
  }
  return out;
}

Raster mosaic(std::span<const Raster> tiles, MosaicReducer reducer) {
  if (tiles.empty()) throw InputError("mosaic: no tiles");
  const GridGeometry& first = tiles.front().geometry();
  const std::size_t bands = tiles.front().bands();

  double min_x = first.min_x();
  double max_y = first.max_y();
  double max_x = first.max_x();
  double min_y = first.min_y();
  for (const Raster& t : tiles) {
    const GridGeometry& g = t.geometry();
    require_alignable(first, g, "mosaic");
    if (g.pixel_size != first.pixel_size) throw AlignmentError("mosaic: pixel sizes differ");
    if (t.bands() != bands) throw InputError("mosaic: band counts differ");
    lattice_offset(first.origin_x, g.origin_x, first.pixel_size, "mosaic");
    lattice_offset(first.origin_y, g.origin_y, first.pixel_size, "mosaic");
    min_x = std::min(min_x, g.min_x());
    max_x = std::max(max_x, g.max_x());
    max_y = std::max(max_y, g.max_y());
    min_y = std::min(min_y, g.min_y());
  }

  GridGeometry out_geom = first;
  out_geom.origin_x = min_x;
  out_geom.origin_y = max_y;
  out_geom.width = static_cast<std::size_t>(std::llround((max_x - min_x) / first.pixel_size));
  out_geom.height = static_cast<std::size_t>(std::llround((max_y - min_y) / first.pixel_size));
  const float nodata = tiles.front().nodata();
  Raster out(out_geom, bands, nodata, nodata);

  for (const Raster& t : tiles) {
    const GridGeometry& g = t.geometry();
    const auto dc = lattice_offset(out_geom.origin_x, g.origin_x, g.pixel_size, "mosaic");
    const auto dr = lattice_offset(g.origin_y, out_geom.origin_y, g.pixel_size, "mosaic");
    for (std::size_t b = 0; b < bands; ++b) {
      for (std::size_t row = 0; row < g.height; ++row) {
        for (std::size_t col = 0; col < g.width; ++col) {
          const float v = t.at(b, row, col);
          if (t.is_nodata(v)) continue;
          float& o = out.at(b, row + static_cast<std::size_t>(dr), col + static_cast<std::size_t>(dc));
          if (o == nodata) {
            o = v;
          } else if (reducer == MosaicReducer::max && v > o) {
            o = v;
          }
        }
      }
    }
  }
  return out;
}

RasterStack stack(std::span<const Raster> rasters, std::vector<std::string> roles) {
  if (rasters.empty()) throw InputError("stack: no rasters");
  std::size_t bands = 0;
  for (const Raster& r : rasters) {
    require_same_geometry(rasters.front().geometry(), r.geometry(), "stack");
    bands += r.bands();
  }
  if (roles.size() != bands) {
    throw InputError("stack: " + std::to_string(roles.size()) + " roles for " +
                     std::to_string(bands) + " bands");
  }
  Raster out(rasters.front().geometry(), bands, 0.0f, kNoData);
  std::size_t b = 0;
  for (const Raster& r : rasters) {
    for (std::size_t k = 0; k < r.bands(); ++k, ++b) {
      const auto src = r.band(k);
      auto dst = out.band(b);
      std::transform(src.begin(), src.end(), dst.begin(),
                     [&](float v) { return r.is_nodata(v) ? kNoData : v; });
    }
  }
  return {std::move(out), std::move(roles)};
}

std::vector<Patch> tile_windows(std::size_t height, std::size_t width, std::size_t size,
                                std::size_t stride) {
  if (size == 0 || stride == 0) throw ConfigError("patch size and stride must be at least 1");
  std::vector<Patch> out;
  for (std::size_t r = 0; r + size <= height; r += stride) {
    for (std::size_t c = 0; c + size <= width; c += stride) out.push_back({r, c, size});
  }
  return out;
}

std::vector<Patch> extract_patches(const RasterStack& stack, const TargetLayers& targets,
                                   std::size_t size, std::size_t stride) {
  require_same_geometry(stack.geometry(), targets.tree_mask.geometry(), "extract_patches");
  require_same_geometry(stack.geometry(), targets.pixel_height.geometry(), "extract_patches");
  require_same_geometry(stack.geometry(), targets.aux_mask.geometry(), "extract_patches");
  return tile_windows(stack.geometry().height, stack.geometry().width, size, stride);
}

NormalizationStats compute_band_stats(const RasterStack& stack, std::span<const Patch> windows,
                                      double height_max) {
  const Raster& r = stack.raster;
  NormalizationStats stats;
  stats.height_max = height_max;
  std::vector<Patch> all;
  if (windows.empty()) {
    all.push_back({0, 0, 0});
    windows = all;
  }
  for (std::size_t b = 0; b < r.bands(); ++b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Patch& p : windows) {
      const std::size_t rows = p.size == 0 ? r.height() : p.size;
      const std::size_t cols = p.size == 0 ? r.width() : p.size;
      for (std::size_t row = p.row0; row < p.row0 + rows; ++row) {
        for (std::size_t col = p.col0; col < p.col0 + cols; ++col) {
          const float v = r.at(b, row, col);
          if (r.is_nodata(v) || !std::isfinite(v)) continue;
          lo = std::min(lo, static_cast<double>(v));
          hi = std::max(hi, static_cast<double>(v));
        }
      }
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    stats.bands.push_back({lo, hi});
  }
  return stats;
}

NormalizeResult normalize(const RasterStack& stack, const NormalizationStats& stats) {
  if (stats.bands.size() != stack.bands()) {
    throw InputError("normalize: stats cover " + std::to_string(stats.bands.size()) +
                     " bands, stack has " + std::to_string(stack.bands()));
  }
  NormalizeResult result{stack, {}};
  Raster& r = result.stack.raster;
  for (std::size_t b = 0; b < r.bands(); ++b) {
    const BandRange range = stats.bands[b];
    if (!std::isfinite(range.min) || !std::isfinite(range.max)) {
      throw InputError("normalize: non-finite stats for band " + std::to_string(b));
    }
    auto values = r.band(b);
    const bool degenerate = !(range.max > range.min);
    if (degenerate) {
      const std::string role = b < stack.roles.size() ? stack.roles[b] : std::to_string(b);
      result.warnings.push_back("band '" + role + "' has degenerate range; set to 0");
    }
    const double scale = degenerate ? 0.0 : 1.0 / (range.max - range.min);
    for (float& v : values) {
      if (r.is_nodata(v)) continue;
      v = degenerate ? 0.0f : static_cast<float>((v - range.min) * scale);
    }
  }
  return result;
}

Raster normalize_height(const Raster& heights, double height_max) {
  if (!(height_max > 0.0)) throw ConfigError("height_max must be positive");
  Raster out = heights;
  for (float& v : out.values()) {
    if (!out.is_nodata(v)) v = static_cast<float>(v / height_max);
  }
  return out;
}

void save_stats(const std::string& path, const NormalizationStats& stats) {
  nlohmann::json j;
  j["height_max"] = stats.height_max;
  auto& bands = j["bands"] = nlohmann::json::array();
  for (const BandRange& b : stats.bands) bands.push_back({{"min", b.min}, {"max", b.max}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

NormalizationStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    NormalizationStats stats;
    stats.height_max = j.at("height_max").get<double>();
    for (const auto& b : j.at("bands")) {
      stats.bands.push_back({b.at("min").get<double>(), b.at("max").get<double>()});
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": malformed stats: " + e.what());
  }
}

}  // namespace canopy::geo
