#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "canopy/geo/ops.hpp"

namespace canopy::geo {

// One training example: in_bands x H x W inputs plus three H x W targets.
struct PatchSample {
  // Window origin in the source stack; used for spatially blocked splits.
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::vector<float> input;
  std::vector<float> tree_mask;
  std::vector<float> height;
  std::vector<float> aux_mask;
};

struct PatchSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_bands = 0;
  std::vector<PatchSample> samples;

  std::size_t plane() const { return height * width; }
};

// Copies one window out of a normalised stack and its targets. Nodata in
// inputs or targets is written as 0 so samples are dense.
PatchSample make_sample(const RasterStack& stack, const TargetLayers& targets, const Patch& window);

// Container layout (all little-endian):
//   "CNPY1" | sample_count u32 | H u32 | W u32 | in_bands u32
//   per sample: row0 u32 | col0 u32 | input (in_bands*H*W f32), tree mask, height, aux mask (H*W f32 each)
void write_patches(const std::string& path, const PatchSet& set);
PatchSet read_patches(const std::string& path);

}  // namespace canopy::geo
