#include "canopy/geo/raster_io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include "canopy/error.hpp"

namespace canopy::geo {

namespace {

constexpr ttag_t kModelPixelScale = 33550;
constexpr ttag_t kModelTiepoint = 33922;
constexpr ttag_t kGeoKeyDirectory = 34735;
constexpr ttag_t kGeoAsciiParams = 34737;
constexpr ttag_t kGdalNoData = 42113;

// GeoKey ids
constexpr std::uint16_t kGTModelType = 1024;
constexpr std::uint16_t kGTRasterType = 1025;
constexpr std::uint16_t kGTCitation = 1026;

char kPixelScaleName[] = "ModelPixelScaleTag";
char kTiepointName[] = "ModelTiepointTag";
char kGeoKeyName[] = "GeoKeyDirectoryTag";
char kGeoAsciiName[] = "GeoAsciiParamsTag";
char kNoDataName[] = "GDALNoDataValue";

const TIFFFieldInfo kGeoFields[] = {
    {kModelPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kPixelScaleName},
    {kModelTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, kTiepointName},
    {kGeoKeyDirectory, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, kGeoKeyName},
    {kGeoAsciiParams, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, kGeoAsciiName},
    {kGdalNoData, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, kNoDataName},
};

TIFFExtendProc g_parent_extender = nullptr;

void geo_tag_extender(TIFF* tif) {
  TIFFMergeFieldInfo(tif, kGeoFields, sizeof(kGeoFields) / sizeof(kGeoFields[0]));
  if (g_parent_extender) g_parent_extender(tif);
}

void register_geo_tags() {
  static std::once_flag once;
  std::call_once(once, [] { g_parent_extender = TIFFSetTagExtender(geo_tag_extender); });
}

void silence_tiff_warnings() {
  static std::once_flag once;
  std::call_once(once, [] { TIFFSetWarningHandler(nullptr); });
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

std::string format_float(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(std::string_view s, const std::string& where) {
  T value{};
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
  }
  return value;
}

}  // namespace

void write_geotiff(const std::string& path, const Raster& raster, SampleType type) {
  register_geo_tags();
  TiffHandle tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) throw IoError("cannot open " + path + " for writing");

  const GridGeometry& g = raster.geometry();
  const auto width = static_cast<std::uint32_t>(g.width);
  const auto height = static_cast<std::uint32_t>(g.height);
  const bool u8 = type == SampleType::uint8;
  TIFF* t = tif.get();
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(raster.bands()));
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(u8 ? 8 : 32));
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, u8 ? SAMPLEFORMAT_UINT : SAMPLEFORMAT_IEEEFP);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, TIFFDefaultStripSize(t, 0));

  double scale[3] = {g.pixel_size, g.pixel_size, 0.0};
  double tie[6] = {0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0};
  TIFFSetField(t, kModelPixelScale, 3, scale);
  TIFFSetField(t, kModelTiepoint, 6, tie);
  const std::string citation = g.crs_tag + "|";
  std::uint16_t keys[] = {1, 1, 0, 3,
                          kGTModelType, 0, 1, 1,    // projected
                          kGTRasterType, 0, 1, 1,   // pixel is area
                          kGTCitation, static_cast<std::uint16_t>(kGeoAsciiParams),
                          static_cast<std::uint16_t>(citation.size()), 0};
  TIFFSetField(t, kGeoKeyDirectory, 16, keys);
  TIFFSetField(t, kGeoAsciiParams, citation.c_str());
  const float nodata = u8 ? kMaskNoData : raster.nodata();
  TIFFSetField(t, kGdalNoData, format_float(nodata).c_str());

  std::vector<std::uint8_t> row8(g.width);
  for (std::size_t b = 0; b < raster.bands(); ++b) {
    for (std::uint32_t row = 0; row < height; ++row) {
      const float* src = raster.band(b).data() + static_cast<std::size_t>(row) * g.width;
      void* line = const_cast<float*>(src);
      if (u8) {
        for (std::size_t c = 0; c < g.width; ++c) {
          const float v = src[c];
          if (raster.is_nodata(v)) {
            row8[c] = 255;
          } else {
            row8[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 254L));
          }
        }
        line = row8.data();
      }
      if (TIFFWriteScanline(t, line, row, static_cast<std::uint16_t>(b)) < 0) {
        throw IoError("write failed for " + path);
      }
    }
  }
}

Raster read_geotiff(const std::string& path) {
  register_geo_tags();
  silence_tiff_warnings();
  TiffHandle tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw IoError("cannot open " + path);
  TIFF* t = tif.get();
  if (TIFFIsTiled(t)) throw IoError(path + ": tiled TIFFs are not supported");

  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bps = 0, fmt = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &fmt);
  TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);

  GridGeometry g;
  g.width = width;
  g.height = height;
  std::uint16_t count = 0;
  double* values = nullptr;
  if (TIFFGetField(t, kModelPixelScale, &count, &values) && count >= 2) {
    if (values[0] != values[1]) throw IoError(path + ": non-square pixels are not supported");
    g.pixel_size = values[0];
  }
  if (TIFFGetField(t, kModelTiepoint, &count, &values) && count >= 6) {
    g.origin_x = values[3] - values[0] * g.pixel_size;
    g.origin_y = values[4] + values[1] * g.pixel_size;
  }
  char* ascii = nullptr;
  if (TIFFGetField(t, kGeoAsciiParams, &ascii) && ascii) {
    std::string s(ascii);
    const auto bar = s.find('|');
    g.crs_tag = bar == std::string::npos ? s : s.substr(0, bar);
  }
  float nodata = kNoData;
  bool have_nodata = false;
  char* nd = nullptr;
  if (TIFFGetField(t, kGdalNoData, &nd) && nd) {
    std::string s(nd);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
    nodata = parse_number<float>(s, path);
    have_nodata = true;
  }

  const bool is_u8 = fmt == SAMPLEFORMAT_UINT && bps == 8;
  const bool is_u16 = fmt == SAMPLEFORMAT_UINT && bps == 16;
  const bool is_i16 = fmt == SAMPLEFORMAT_INT && bps == 16;
  const bool is_f32 = fmt == SAMPLEFORMAT_IEEEFP && bps == 32;
  const bool is_f64 = fmt == SAMPLEFORMAT_IEEEFP && bps == 64;
  if (!(is_u8 || is_u16 || is_i16 || is_f32 || is_f64)) {
    throw IoError(path + ": unsupported sample format");
  }
  if (is_u8 && !have_nodata) nodata = kMaskNoData;

  Raster out(g, spp, 0.0f, nodata);
  std::vector<std::uint8_t> line(static_cast<std::size_t>(TIFFScanlineSize(t)));
  auto convert = [&](const std::uint8_t* p, std::size_t i) -> float {
    if (is_u8) return static_cast<float>(p[i]);
    if (is_u16) {
      std::uint16_t v;
      std::memcpy(&v, p + 2 * i, 2);
      return static_cast<float>(v);
    }
    if (is_i16) {
      std::int16_t v;
      std::memcpy(&v, p + 2 * i, 2);
      return static_cast<float>(v);
    }
    if (is_f32) {
      float v;
      std::memcpy(&v, p + 4 * i, 4);
      return v;
    }
    double v;
    std::memcpy(&v, p + 8 * i, 8);
    return static_cast<float>(v);
  };

  if (planar == PLANARCONFIG_SEPARATE) {
    for (std::uint16_t b = 0; b < spp; ++b) {
      for (std::uint32_t row = 0; row < height; ++row) {
        if (TIFFReadScanline(t, line.data(), row, b) < 0) throw IoError(path + ": read error");
        for (std::uint32_t c = 0; c < width; ++c) out.at(b, row, c) = convert(line.data(), c);
      }
    }
  } else {
    for (std::uint32_t row = 0; row < height; ++row) {
      if (TIFFReadScanline(t, line.data(), row, 0) < 0) throw IoError(path + ": read error");
      for (std::uint32_t c = 0; c < width; ++c) {
        for (std::uint16_t b = 0; b < spp; ++b) {
          out.at(b, row, c) = convert(line.data(), static_cast<std::size_t>(c) * spp + b);
        }
      }
    }
  }
  return out;
}

void write_ascii_grid(const std::string& path, const Raster& raster) {
  if (raster.bands() != 1) throw InputError("ASCII grid holds a single band");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const GridGeometry& g = raster.geometry();
  out << "ncols " << g.width << "\n"
      << "nrows " << g.height << "\n"
      << "xllcorner " << format_double(g.origin_x) << "\n"
      << "yllcorner " << format_double(g.min_y()) << "\n"
      << "cellsize " << format_double(g.pixel_size) << "\n"
      << "NODATA_value " << format_float(raster.nodata()) << "\n";
  std::string line;
  for (std::size_t row = 0; row < g.height; ++row) {
    line.clear();
    for (std::size_t col = 0; col < g.width; ++col) {
      if (col) line.push_back(' ');
      line += format_float(raster.at(row, col));
    }
    out << line << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

Raster read_ascii_grid(const std::string& path, const std::string& crs_tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  GridGeometry g;
  g.crs_tag = crs_tag;
  double xll = 0.0, yll = 0.0;
  float nodata = kNoData;
  bool center_x = false, center_y = false;
  std::string key, value;
  int seen = 0;
  while (in >> std::ws && std::isalpha(in.peek()) && in >> key >> value) {
    for (char& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (key == "ncols") {
      g.width = parse_number<std::size_t>(value, path);
    } else if (key == "nrows") {
      g.height = parse_number<std::size_t>(value, path);
    } else if (key == "xllcorner" || key == "xllcenter") {
      xll = parse_number<double>(value, path);
      center_x = key == "xllcenter";
    } else if (key == "yllcorner" || key == "yllcenter") {
      yll = parse_number<double>(value, path);
      center_y = key == "yllcenter";
    } else if (key == "cellsize") {
      g.pixel_size = parse_number<double>(value, path);
    } else if (key == "nodata_value") {
      nodata = parse_number<float>(value, path);
    } else {
      throw IoError(path + ": unexpected header key '" + key + "'");
    }
    ++seen;
  }
  if (seen < 5) throw IoError(path + ": truncated header");
  if (center_x) xll -= 0.5 * g.pixel_size;
  if (center_y) yll -= 0.5 * g.pixel_size;
  g.origin_x = xll;
  g.origin_y = yll + static_cast<double>(g.height) * g.pixel_size;
  Raster out(g, 1, 0.0f, nodata);
  std::string token;
  for (float& v : out.values()) {
    if (!(in >> token)) throw IoError(path + ": too few values");
    v = parse_number<float>(token, path);
  }
  return out;
}

namespace {
bool has_ascii_extension(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".asc") == 0;
}
}  // namespace

Raster read_raster(const std::string& path) {
  return has_ascii_extension(path) ? read_ascii_grid(path) : read_geotiff(path);
}

void write_raster(const std::string& path, const Raster& raster, SampleType type) {
  if (has_ascii_extension(path)) {
    write_ascii_grid(path, raster);
  } else {
    write_geotiff(path, raster, type);
  }
}

}  // namespace canopy::geo
