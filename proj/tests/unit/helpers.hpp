#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "canopy/geo/raster.hpp"

namespace testutil {

inline canopy::geo::GridGeometry grid(std::size_t w, std::size_t h, double px = 1.0, double ox = 1000.0,
                                      double oy = 2000.0, std::string crs = "EPSG:26916") {
  canopy::geo::GridGeometry g;
  g.origin_x = ox;
  g.origin_y = oy;
  g.pixel_size = px;
  g.width = w;
  g.height = h;
  g.crs_tag = std::move(crs);
  return g;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("canopy-test-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
