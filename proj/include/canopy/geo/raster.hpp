#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace canopy::geo {

// Sentinels: continuous layers use kNoData, byte masks use kMaskNoData.
inline constexpr float kNoData = -9999.0f;
inline constexpr float kMaskNoData = 255.0f;

struct Cell {
  std::ptrdiff_t row = 0;
  std::ptrdiff_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// North-up, square-pixel affine grid. (origin_x, origin_y) is the top-left
// corner of pixel (0, 0); rows grow southwards.
struct GridGeometry {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size = 1.0;
  std::size_t width = 1;
  std::size_t height = 1;
  std::string crs_tag;

  void validate() const;

  bool alignable(const GridGeometry& other) const { return crs_tag == other.crs_tag; }

  std::size_t pixel_count() const { return width * height; }
  double min_x() const { return origin_x; }
  double max_x() const { return origin_x + static_cast<double>(width) * pixel_size; }
  double max_y() const { return origin_y; }
  double min_y() const { return origin_y - static_cast<double>(height) * pixel_size; }

  double center_x(std::ptrdiff_t col) const {
    return origin_x + (static_cast<double>(col) + 0.5) * pixel_size;
  }
  double center_y(std::ptrdiff_t row) const {
    return origin_y - (static_cast<double>(row) + 0.5) * pixel_size;
  }

  // Unbounded cell index of the pixel containing (x, y).
  Cell cell_of(double x, double y) const;
  bool contains(const Cell& c) const {
    return c.row >= 0 && c.col >= 0 && c.row < static_cast<std::ptrdiff_t>(height) &&
           c.col < static_cast<std::ptrdiff_t>(width);
  }
  // Cell containing (x, y) if it lies inside the grid.
  std::optional<Cell> locate(double x, double y) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

// Multi-band raster stored band-major, row-major within a band.
class Raster {
 public:
  Raster() = default;
  Raster(GridGeometry geometry, std::size_t bands, float fill = 0.0f, float nodata = kNoData);

  const GridGeometry& geometry() const { return geometry_; }
  std::size_t bands() const { return bands_; }
  std::size_t width() const { return geometry_.width; }
  std::size_t height() const { return geometry_.height; }
  float nodata() const { return nodata_; }
  void set_nodata(float value) { nodata_ = value; }
  bool is_nodata(float value) const { return value == nodata_; }

  std::span<float> band(std::size_t b);
  std::span<const float> band(std::size_t b) const;
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  float& at(std::size_t b, std::size_t row, std::size_t col) {
    return values_[(b * geometry_.height + row) * geometry_.width + col];
  }
  float at(std::size_t b, std::size_t row, std::size_t col) const {
    return values_[(b * geometry_.height + row) * geometry_.width + col];
  }
  float& at(std::size_t row, std::size_t col) { return at(0, row, col); }
  float at(std::size_t row, std::size_t col) const { return at(0, row, col); }

  // Copy of one band as a single-band raster.
  Raster extract_band(std::size_t b) const;

 private:
  GridGeometry geometry_;
  std::size_t bands_ = 0;
  float nodata_ = kNoData;
  std::vector<float> values_;
};

// Throws AlignmentError unless both rasters share the exact geometry.
void require_same_geometry(const GridGeometry& a, const GridGeometry& b, const char* what);

}  // namespace canopy::geo
