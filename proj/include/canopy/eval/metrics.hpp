#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/error.hpp"
#include "canopy/geo/patch_io.hpp"
#include "canopy/nn/unet.hpp"

namespace canopy::eval {

// |pred >= threshold AND truth| / |pred >= threshold OR truth|, with truth
// read as truth >= 0.5. Two empty masks score 1.
template <class T>
double iou(std::span<const T> pred, std::span<const T> truth, double threshold = 0.5) {
  if (pred.size() != truth.size()) throw ShapeError("iou: prediction and truth differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool t = truth[i] >= 0.5;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

template <class T>
double mae(std::span<const T> pred, std::span<const T> truth) {
  if (pred.size() != truth.size()) throw ShapeError("mae: prediction and truth differ in size");
  if (pred.empty()) throw ShapeError("mae: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(double(pred[i]) - double(truth[i]));
  return sum / double(pred.size());
}

// MAE restricted to pixels where mask >= 0.5; nullopt when there are none.
template <class T>
std::optional<double> masked_mae(std::span<const T> pred, std::span<const T> truth, std::span<const T> mask) {
  if (pred.size() != truth.size() || pred.size() != mask.size()) {
    throw ShapeError("masked_mae: inputs differ in size");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] < 0.5) continue;
    sum += std::abs(double(pred[i]) - double(truth[i]));
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / double(n);
}

struct Metrics {
  std::optional<double> tree_iou;
  std::optional<double> height_mae;
  std::optional<double> aux_iou;
};

struct EvalOptions {
  double threshold = 0.5;
  // Score height on truth tree pixels only instead of every pixel.
  bool masked_mae = false;
  std::size_t batch = 4;
};

// Per-patch metrics for the model's tasks, averaged with equal weight per
// patch. Patches are forwarded in batches; the reduction runs in index
// order. indices empty means every patch.
Metrics evaluate(const nn::UNetModel<float>& model, const geo::PatchSet& patches,
                 std::span<const std::size_t> indices = {}, const EvalOptions& options = {});

struct MetricsRow {
  std::string model;
  std::string bands;
  Metrics metrics;
};

// Row labels as they appear in the comparison report.
std::string model_label(const nn::UNetConfig& config);
std::string bands_label(std::size_t in_bands);
MetricsRow make_row(const nn::UNetConfig& config, const Metrics& metrics);

// Rows sorted by (model, bands) in report order; a repeated key throws
// InputError. Absent metrics render as "-".
std::string results_csv(std::vector<MetricsRow> rows);
std::string results_markdown(std::vector<MetricsRow> rows);

}  // namespace canopy::eval
