#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace canopy::lidar {

// x, y in map units; z is height above ground (feet unless configured
// otherwise).
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Bounds {
  double min_x, min_y, max_x, max_y;
};

Bounds bounds_of(const PointCloud& cloud);

// LAS 1.2-1.4 reader: only the scaled X/Y/Z of each record is used.
PointCloud read_las(const std::string& path);
// Writes LAS 1.2, point format 0, with the given coordinate scale.
void write_las(const std::string& path, const PointCloud& cloud, double scale = 0.001);

// Comma-separated text with a mandatory "x,y,z" header.
PointCloud read_xyz_csv(const std::string& path);
void write_xyz_csv(const std::string& path, const PointCloud& cloud);

// .las -> LAS, anything else -> CSV.
PointCloud read_points(const std::string& path);

}  // namespace canopy::lidar
