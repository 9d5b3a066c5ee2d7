#include "canopy/geo/raster.hpp"

#include <cmath>
#include <sstream>

#include "canopy/error.hpp"

namespace canopy::geo {

void GridGeometry::validate() const {
  if (!(pixel_size > 0.0) || !std::isfinite(pixel_size)) {
    throw InputError("grid pixel_size must be positive and finite");
  }
  if (width == 0 || height == 0) {
    throw InputError("grid width and height must be at least 1");
  }
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw InputError("grid origin must be finite");
  }
}

Cell GridGeometry::cell_of(double x, double y) const {
  return {static_cast<std::ptrdiff_t>(std::floor((origin_y - y) / pixel_size)),
          static_cast<std::ptrdiff_t>(std::floor((x - origin_x) / pixel_size))};
}

std::optional<Cell> GridGeometry::locate(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  Cell c = cell_of(x, y);
  if (!contains(c)) return std::nullopt;
  return c;
}

Raster::Raster(GridGeometry geometry, std::size_t bands, float fill, float nodata)
    : geometry_(std::move(geometry)), bands_(bands), nodata_(nodata) {
  geometry_.validate();
  if (bands_ == 0) throw InputError("raster needs at least one band");
  values_.assign(bands_ * geometry_.pixel_count(), fill);
}

std::span<float> Raster::band(std::size_t b) {
  return {values_.data() + b * geometry_.pixel_count(), geometry_.pixel_count()};
}

std::span<const float> Raster::band(std::size_t b) const {
  return {values_.data() + b * geometry_.pixel_count(), geometry_.pixel_count()};
}

Raster Raster::extract_band(std::size_t b) const {
  if (b >= bands_) throw InputError("band index out of range");
  Raster out(geometry_, 1, 0.0f, nodata_);
  auto src = band(b);
  std::copy(src.begin(), src.end(), out.values().begin());
  return out;
}

void require_same_geometry(const GridGeometry& a, const GridGeometry& b, const char* what) {
  if (a == b) return;
  std::ostringstream msg;
  msg << what << ": geometry mismatch (" << a.width << "x" << a.height << " @" << a.pixel_size
      << " '" << a.crs_tag << "' vs " << b.width << "x" << b.height << " @" << b.pixel_size
      << " '" << b.crs_tag << "')";
  throw AlignmentError(msg.str());
}

}  // namespace canopy::geo
