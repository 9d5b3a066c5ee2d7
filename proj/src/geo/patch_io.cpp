#include "canopy/geo/patch_io.hpp"

#include <fstream>
#include <limits>

#include "canopy/binary_io.hpp"
#include "canopy/error.hpp"

namespace canopy::geo {

namespace {

constexpr std::string_view kMagic = "CNPY1";

void copy_window(const Raster& r, std::size_t b, const Patch& w, float* dst) {
  for (std::size_t row = 0; row < w.size; ++row) {
    for (std::size_t col = 0; col < w.size; ++col) {
      const float v = r.at(b, w.row0 + row, w.col0 + col);
      *dst++ = r.is_nodata(v) ? 0.0f : v;
    }
  }
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError(std::string(what) + " does not fit the container header");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

PatchSample make_sample(const RasterStack& stack, const TargetLayers& targets, const Patch& window) {
  const GridGeometry& g = stack.geometry();
  if (window.row0 + window.size > g.height || window.col0 + window.size > g.width) {
    throw InputError("patch window outside stack");
  }
  const std::size_t plane = window.size * window.size;
  PatchSample s;
  s.row0 = window.row0;
  s.col0 = window.col0;
  s.input.resize(stack.bands() * plane);
  for (std::size_t b = 0; b < stack.bands(); ++b) {
    copy_window(stack.raster, b, window, s.input.data() + b * plane);
  }
  s.tree_mask.resize(plane);
  s.height.resize(plane);
  s.aux_mask.resize(plane);
  copy_window(targets.tree_mask, 0, window, s.tree_mask.data());
  copy_window(targets.pixel_height, 0, window, s.height.data());
  copy_window(targets.aux_mask, 0, window, s.aux_mask.data());
  return s;
}

void write_patches(const std::string& path, const PatchSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  binio::write_pod(out, checked_u32(set.samples.size(), "sample count"));
  binio::write_pod(out, checked_u32(set.height, "patch height"));
  binio::write_pod(out, checked_u32(set.width, "patch width"));
  binio::write_pod(out, checked_u32(set.in_bands, "band count"));
  const std::size_t plane = set.plane();
  for (const PatchSample& s : set.samples) {
    if (s.input.size() != set.in_bands * plane || s.tree_mask.size() != plane ||
        s.height.size() != plane || s.aux_mask.size() != plane) {
      throw InputError("write_patches: sample size does not match header");
    }
    binio::write_pod(out, checked_u32(s.row0, "patch row"));
    binio::write_pod(out, checked_u32(s.col0, "patch column"));
    binio::write_floats(out, s.input);
    binio::write_floats(out, s.tree_mask);
    binio::write_floats(out, s.height);
    binio::write_floats(out, s.aux_mask);
  }
  if (!out) throw IoError("write failed for " + path);
}

PatchSet read_patches(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  binio::expect_magic(in, kMagic, path);
  PatchSet set;
  const auto count = binio::read_pod<std::uint32_t>(in, path);
  set.height = binio::read_pod<std::uint32_t>(in, path);
  set.width = binio::read_pod<std::uint32_t>(in, path);
  set.in_bands = binio::read_pod<std::uint32_t>(in, path);
  const std::size_t plane = set.plane();
  // Check the payload size before allocating, so a corrupt header cannot
  // request gigabytes.
  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uintmax_t>(in.tellg() - header_end);
  in.seekg(header_end);
  const std::uintmax_t per_sample = 8 + std::uintmax_t{4} * (set.in_bands + 3) * plane;
  if (payload != per_sample * count) {
    throw IoError(path + ": payload of " + std::to_string(payload) + " bytes does not hold " +
                  std::to_string(count) + " samples of " + std::to_string(per_sample) + " bytes");
  }
  set.samples.resize(count);
  for (PatchSample& s : set.samples) {
    s.row0 = binio::read_pod<std::uint32_t>(in, path);
    s.col0 = binio::read_pod<std::uint32_t>(in, path);
    s.input.resize(set.in_bands * plane);
    s.tree_mask.resize(plane);
    s.height.resize(plane);
    s.aux_mask.resize(plane);
    binio::read_floats(in, s.input, path);
    binio::read_floats(in, s.tree_mask, path);
    binio::read_floats(in, s.height, path);
    binio::read_floats(in, s.aux_mask, path);
  }
  return set;
}

}  // namespace canopy::geo
