#include "canopy/lidar/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "canopy/binary_io.hpp"
#include "canopy/error.hpp"

namespace canopy::lidar {

namespace {

template <class T>
T load(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

}  // namespace

Bounds bounds_of(const PointCloud& cloud) {
  Bounds b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Point& p : cloud.points) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

PointCloud read_las(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<char> header(375, 0);
  in.read(header.data(), 227);
  if (in.gcount() < 227 || std::memcmp(header.data(), "LASF", 4) != 0) {
    throw IoError(path + ": not a LAS file");
  }
  const auto major = static_cast<unsigned>(static_cast<unsigned char>(header[24]));
  const auto minor = static_cast<unsigned>(static_cast<unsigned char>(header[25]));
  if (major != 1 || minor > 4) {
    throw IoError(path + ": unsupported LAS version " + std::to_string(major) + "." +
                  std::to_string(minor));
  }
  const auto header_size = load<std::uint16_t>(header, 94);
  const auto data_offset = load<std::uint32_t>(header, 96);
  const auto format = static_cast<unsigned char>(header[104]);
  const auto record_len = load<std::uint16_t>(header, 105);
  std::uint64_t count = load<std::uint32_t>(header, 107);
  if (format & 0xC0) throw IoError(path + ": compressed point records are not supported");
  if (record_len < 12) throw IoError(path + ": point record too short");
  if (minor >= 4 && header_size >= 375) {
    in.read(header.data() + 227, 375 - 227);
    if (!in) throw IoError(path + ": truncated LAS 1.4 header");
    const auto extended = load<std::uint64_t>(header, 247);
    if (count == 0) count = extended;
  }
  const double sx = load<double>(header, 131), sy = load<double>(header, 139),
               sz = load<double>(header, 147);
  const double ox = load<double>(header, 155), oy = load<double>(header, 163),
               oz = load<double>(header, 171);

  in.seekg(data_offset);
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(count));
  std::vector<char> block(static_cast<std::size_t>(record_len) * 4096);
  std::uint64_t remaining = count;
  while (remaining > 0) {
    const std::uint64_t n = std::min<std::uint64_t>(remaining, 4096);
    in.read(block.data(), static_cast<std::streamsize>(n * record_len));
    if (!in) throw IoError(path + ": truncated point records");
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * record_len;
      const auto xi = load<std::int32_t>(block, base);
      const auto yi = load<std::int32_t>(block, base + 4);
      const auto zi = load<std::int32_t>(block, base + 8);
      cloud.points.push_back({xi * sx + ox, yi * sy + oy, zi * sz + oz});
    }
    remaining -= n;
  }
  return cloud;
}

void write_las(const std::string& path, const PointCloud& cloud, double scale) {
  if (!(scale > 0.0)) throw ConfigError("LAS scale must be positive");
  Bounds b = cloud.empty() ? Bounds{0, 0, 0, 0} : bounds_of(cloud);
  double min_z = 0.0, max_z = 0.0;
  if (!cloud.empty()) {
    min_z = max_z = cloud.points.front().z;
    for (const Point& p : cloud.points) {
      min_z = std::min(min_z, p.z);
      max_z = std::max(max_z, p.z);
    }
  }
  const double ox = std::floor(b.min_x), oy = std::floor(b.min_y), oz = 0.0;
  auto quantize = [&](double v, double off) {
    const double q = std::round((v - off) / scale);
    if (q < std::numeric_limits<std::int32_t>::min() || q > std::numeric_limits<std::int32_t>::max()) {
      throw InputError("LAS coordinate out of range for scale " + std::to_string(scale));
    }
    return static_cast<std::int32_t>(q);
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::vector<char> h(227, 0);
  std::memcpy(h.data(), "LASF", 4);
  h[24] = 1;
  h[25] = 2;
  std::memcpy(h.data() + 26, "canopy", 6);
  std::memcpy(h.data() + 58, "canopy synth", 12);
  auto put = [&](std::size_t off, auto v) { std::memcpy(h.data() + off, &v, sizeof(v)); };
  put(94, std::uint16_t{227});
  put(96, std::uint32_t{227});
  put(100, std::uint32_t{0});
  h[104] = 0;
  put(105, std::uint16_t{20});
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError("too many points for LAS 1.2");
  }
  put(107, static_cast<std::uint32_t>(cloud.size()));
  put(111, static_cast<std::uint32_t>(cloud.size()));  // returns of order 1
  put(131, scale);
  put(139, scale);
  put(147, scale);
  put(155, ox);
  put(163, oy);
  put(171, oz);
  put(179, b.max_x);
  put(187, b.min_x);
  put(195, b.max_y);
  put(203, b.min_y);
  put(211, max_z);
  put(219, min_z);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));

  char rec[20];
  for (const Point& p : cloud.points) {
    std::memset(rec, 0, sizeof(rec));
    const std::int32_t xyz[3] = {quantize(p.x, ox), quantize(p.y, oy), quantize(p.z, oz)};
    std::memcpy(rec, xyz, 12);
    rec[14] = 0x09;  // return 1 of 1
    out.write(rec, sizeof(rec));
  }
  if (!out) throw IoError("write failed for " + path);
}

PointCloud read_xyz_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  auto header = split_csv(line);
  for (auto& f : header) {
    std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
  }
  if (header.size() < 3 || header[0] != "x" || header[1] != "y" || header[2] != "z") {
    throw IoError(path + ": missing 'x,y,z' header");
  }
  PointCloud cloud;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 3) throw IoError(path + ":" + std::to_string(lineno) + ": expected x,y,z");
    try {
      std::size_t used = 0;
      Point p;
      p.x = std::stod(fields[0], &used);
      p.y = std::stod(fields[1], &used);
      p.z = std::stod(fields[2], &used);
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw std::invalid_argument("non-finite");
      }
      cloud.points.push_back(p);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad coordinate");
    }
  }
  return cloud;
}

void write_xyz_csv(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "x,y,z\n";
  for (const Point& p : cloud.points) out << p.x << ',' << p.y << ',' << p.z << '\n';
  if (!out) throw IoError("write failed for " + path);
}

PointCloud read_points(const std::string& path) {
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    if (path.size() < n) return false;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::tolower(static_cast<unsigned char>(path[path.size() - n + i])) != ext[i]) return false;
    }
    return true;
  };
  return ends_with(".las") ? read_las(path) : read_xyz_csv(path);
}

}  // namespace canopy::lidar
