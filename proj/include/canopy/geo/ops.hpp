#pragma once

#include <span>
#include <string>
#include <vector>

#include "canopy/geo/raster.hpp"

namespace canopy::geo {

// Per-pixel (NIR - Red) / (NIR + Red). A zero denominator or a nodata input
// yields nodata.
Raster ndvi(const Raster& nir, const Raster& red);

enum class ResampleMethod { nearest, bilinear };

// Resamples every band of src onto target. Target pixels whose centre falls
// outside the source extent become nodata. Bilinear sampling clamps to the
// outermost source centres inside the extent and returns nodata whenever a
// contributing source pixel is nodata.
Raster resample_to(const Raster& src, const GridGeometry& target, ResampleMethod method);

enum class MosaicReducer { first, max };

// Combines aligned tiles onto their bounding grid. Pixels covered by no tile
// (or only by nodata) are nodata.
Raster mosaic(std::span<const Raster> tiles, MosaicReducer reducer);

struct RasterStack {
  Raster raster;
  std::vector<std::string> roles;

  const GridGeometry& geometry() const { return raster.geometry(); }
  std::size_t bands() const { return raster.bands(); }
};

// Concatenates bands of rasters that already share one geometry.
RasterStack stack(std::span<const Raster> rasters, std::vector<std::string> roles);

// The three supervised layers that travel with a stack.
struct TargetLayers {
  Raster tree_mask;
  Raster pixel_height;
  Raster aux_mask;
};

// Square pixel window into a stack.
struct Patch {
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t size = 0;
  friend bool operator==(const Patch&, const Patch&) = default;
};

// Row-major tiling. Windows that would cross the right or bottom edge are
// dropped, so a stack smaller than `size` yields no patches.
std::vector<Patch> extract_patches(const RasterStack& stack, const TargetLayers& targets,
                                   std::size_t size = 240, std::size_t stride = 240);
std::vector<Patch> tile_windows(std::size_t height, std::size_t width, std::size_t size,
                                std::size_t stride);

struct BandRange {
  double min = 0.0;
  double max = 1.0;
};

struct NormalizationStats {
  std::vector<BandRange> bands;
  double height_max = 80.0;
};

// Min/max of valid pixels per band, restricted to the given windows (the
// whole stack when windows is empty).
NormalizationStats compute_band_stats(const RasterStack& stack, std::span<const Patch> windows,
                                      double height_max = 80.0);

struct NormalizeResult {
  RasterStack stack;
  std::vector<std::string> warnings;
};

// Affine per-band map v -> (v - min) / (max - min). A degenerate band
// (max == min) is set to 0 and reported in warnings. Nodata is preserved.
NormalizeResult normalize(const RasterStack& stack, const NormalizationStats& stats);

// Heights divided by height_max; nodata preserved.
Raster normalize_height(const Raster& heights, double height_max);

void save_stats(const std::string& path, const NormalizationStats& stats);
NormalizationStats load_stats(const std::string& path);

}  // namespace canopy::geo
