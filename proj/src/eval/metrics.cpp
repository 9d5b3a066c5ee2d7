#include "canopy/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

namespace canopy::eval {

using nn::Task;

Metrics evaluate(const nn::UNetModel<float>& model, const geo::PatchSet& patches,
                 std::span<const std::size_t> indices, const EvalOptions& options) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(patches.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  if (indices.empty()) throw InputError("evaluate: no patches to score");
  const auto& cfg = model.config();
  if (patches.in_bands != cfg.in_bands) {
    throw ShapeError("evaluate: patches carry " + std::to_string(patches.in_bands) + " bands, model expects " +
                     std::to_string(cfg.in_bands));
  }
  const std::size_t plane = patches.plane();
  const std::size_t batch = std::max<std::size_t>(options.batch, 1);

  double tree_sum = 0.0, height_sum = 0.0, aux_sum = 0.0;
  std::size_t height_n = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const std::size_t b = std::min(batch, indices.size() - start);
    nn::Tensor<float> x({b, patches.in_bands, patches.height, patches.width});
    for (std::size_t i = 0; i < b; ++i) {
      const auto& in = patches.samples.at(indices[start + i]).input;
      std::copy(in.begin(), in.end(), x.data() + i * in.size());
    }
    const auto out = model.forward(x);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& s = patches.samples[indices[start + i]];
      auto slice = [&](Task t) { return std::span<const float>(out.at(t).data() + i * plane, plane); };
      if (cfg.has_task(Task::tree_mask)) {
        tree_sum += iou<float>(slice(Task::tree_mask), s.tree_mask, options.threshold);
      }
      if (cfg.has_task(Task::aux_mask)) {
        aux_sum += iou<float>(slice(Task::aux_mask), s.aux_mask, options.threshold);
      }
      if (cfg.has_task(Task::pixel_height)) {
        if (options.masked_mae) {
          if (auto m = masked_mae<float>(slice(Task::pixel_height), s.height, s.tree_mask)) {
            height_sum += *m;
            ++height_n;
          }
        } else {
          height_sum += mae<float>(slice(Task::pixel_height), s.height);
          ++height_n;
        }
      }
    }
  }
  Metrics m;
  const double n = double(indices.size());
  if (cfg.has_task(Task::tree_mask)) m.tree_iou = tree_sum / n;
  if (cfg.has_task(Task::aux_mask)) m.aux_iou = aux_sum / n;
  if (cfg.has_task(Task::pixel_height) && height_n > 0) m.height_mae = height_sum / double(height_n);
  return m;
}

namespace {

const std::vector<std::string>& model_order() {
  static const std::vector<std::string> order{"Tree Mask Alone", "Pixel Height Alone", "Auxiliary Mask",
                                              "MT Fully Shared", "MT Partially Shared"};
  return order;
}

std::size_t rank_of(const std::vector<std::string>& order, const std::string& label) {
  return std::size_t(std::find(order.begin(), order.end(), label) - order.begin());
}

void sort_rows(std::vector<MetricsRow>& rows) {
  static const std::vector<std::string> bands{"RGB Only", "14 MS Bands"};
  std::stable_sort(rows.begin(), rows.end(), [&](const MetricsRow& a, const MetricsRow& b) {
    const auto ka = std::make_tuple(rank_of(model_order(), a.model), a.model, rank_of(bands, a.bands), a.bands);
    const auto kb = std::make_tuple(rank_of(model_order(), b.model), b.model, rank_of(bands, b.bands), b.bands);
    return ka < kb;
  });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].model == rows[i - 1].model && rows[i].bands == rows[i - 1].bands) {
      throw InputError("results table: duplicate row for (" + rows[i].model + ", " + rows[i].bands + ")");
    }
  }
}

std::string shortest(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* kColumns[] = {"Model", "Bands Used", "Tree Mask IoU", "Height MAE", "Auxiliary IoU"};

std::vector<std::string> cells(const MetricsRow& r, std::string (*fmt)(double)) {
  auto opt = [&](const std::optional<double>& v) { return v ? fmt(*v) : std::string("-"); };
  return {r.model, r.bands, opt(r.metrics.tree_iou), opt(r.metrics.height_mae), opt(r.metrics.aux_iou)};
}

}  // namespace

std::string model_label(const nn::UNetConfig& config) {
  switch (config.variant) {
    case nn::Variant::fully_shared:
      return config.tasks.size() == 1 ? model_label({nn::Variant::single_task, config.tasks}) : "MT Fully Shared";
    case nn::Variant::partially_shared: return "MT Partially Shared";
    case nn::Variant::single_task:
      switch (config.tasks.at(0)) {
        case Task::tree_mask: return "Tree Mask Alone";
        case Task::pixel_height: return "Pixel Height Alone";
        case Task::aux_mask: return "Auxiliary Mask";
      }
  }
  return "?";
}

std::string bands_label(std::size_t in_bands) {
  if (in_bands == 3) return "RGB Only";
  if (in_bands == 14) return "14 MS Bands";
  return std::to_string(in_bands) + " Bands";
}

MetricsRow make_row(const nn::UNetConfig& config, const Metrics& metrics) {
  return {model_label(config), bands_label(config.in_bands), metrics};
}

std::string results_csv(std::vector<MetricsRow> rows) {
  sort_rows(rows);
  std::ostringstream out;
  for (std::size_t i = 0; i < 5; ++i) out << (i ? "," : "") << kColumns[i];
  out << '\n';
  for (const auto& r : rows) {
    const auto c = cells(r, shortest);
    for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << c[i];
    out << '\n';
  }
  return out.str();
}

std::string results_markdown(std::vector<MetricsRow> rows) {
  sort_rows(rows);
  std::vector<std::vector<std::string>> table;
  table.emplace_back(std::begin(kColumns), std::end(kColumns));
  for (const auto& r : rows) table.push_back(cells(r, fixed3));
  std::vector<std::size_t> width(5, 3);
  for (const auto& row : table) {
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    out << '|';
    for (std::size_t i = 0; i < 5; ++i) {
      // Text columns left-aligned, numbers right-aligned.
      const std::string pad(width[i] - row[i].size(), ' ');
      out << ' ' << (i < 2 ? row[i] + pad : pad + row[i]) << " |";
    }
    out << '\n';
  };
  emit(table[0]);
  out << '|';
  for (std::size_t i = 0; i < 5; ++i) {
    out << (i < 2 ? " :" + std::string(width[i] - 1, '-') : " " + std::string(width[i] - 1, '-') + ":") << " |";
  }
  out << '\n';
  for (std::size_t r = 1; r < table.size(); ++r) emit(table[r]);
  return out.str();
}

}  // namespace canopy::eval
