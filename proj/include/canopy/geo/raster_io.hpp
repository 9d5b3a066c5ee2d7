#pragma once

#include <string>

#include "canopy/geo/raster.hpp"

namespace canopy::geo {

enum class SampleType { float32, uint8 };

// Strip-organised, band-separate GeoTIFF. The grid is carried in
// ModelPixelScale/ModelTiepoint, the crs_tag as the GeoTIFF citation and
// nodata in the GDAL_NODATA tag. uint8 output stores nodata as 255.
void write_geotiff(const std::string& path, const Raster& raster,
                   SampleType type = SampleType::float32);
Raster read_geotiff(const std::string& path);

// ESRI ASCII grid (single band). The format has no CRS field, so the caller
// supplies crs_tag on read.
void write_ascii_grid(const std::string& path, const Raster& raster);
Raster read_ascii_grid(const std::string& path, const std::string& crs_tag = "");

// Dispatches on extension: .asc -> ASCII grid, anything else -> GeoTIFF.
Raster read_raster(const std::string& path);
void write_raster(const std::string& path, const Raster& raster,
                  SampleType type = SampleType::float32);

}  // namespace canopy::geo
