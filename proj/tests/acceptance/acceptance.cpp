// One PASS/FAIL line per acceptance criterion; exits 1 if any fails.
// Criterion names given as arguments select a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../common/gradcheck.hpp"
#include "canopy/aggregate/aggregate.hpp"
#include "canopy/cli/pipeline.hpp"
#include "canopy/eval/metrics.hpp"
#include "canopy/geo/patch_io.hpp"
#include "canopy/geo/raster_io.hpp"
#include "canopy/lidar/chm.hpp"
#include "canopy/nn/unet.hpp"
#include "canopy/synth/scene.hpp"
#include "canopy/train/train.hpp"

using namespace canopy;
using nn::Task;
using nn::Tensor;
using nn::Variant;

namespace {

// Tolerances and budgets.
constexpr double kGradH = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr std::size_t kGradMinParams = 1000;
constexpr double kGradSeconds = 120.0;
constexpr double kMetricTol = 1e-12;
constexpr std::size_t kMetricPairs = 200;
constexpr double kLossTol = 1e-12;
constexpr double kAdamTol = 1e-3;
constexpr std::size_t kPitfreeClouds = 50;
constexpr std::size_t kSegScenes = 5;
constexpr std::size_t kSegTrees = 5;
constexpr double kApexPixels = 1.0;
constexpr double kApexFeet = 0.5;
constexpr double kSegIou = 0.8;
constexpr double kSegSeconds = 60.0;
constexpr double kOverfitIou = 0.90;
constexpr double kOverfitMae = 0.05;
constexpr std::size_t kOverfitEpochs = 200;
constexpr double kOverfitSeconds = 600.0;
constexpr double kCoverTol = 1e-12;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("canopy-accept-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor<double> uniform(nn::Shape s, std::mt19937_64& rng, double lo, double hi) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

Tensor<double> binary(nn::Shape s, std::mt19937_64& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = double(rng() & 1);
  return t;
}

// ---- gradient suite -----------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  struct Part {
    std::string name;
    gradcheck::Result r;
  };
  std::vector<Part> parts;

  // Scalar probe sum(p * y) so every element of y reaches the loss.
  auto probe_loss = [](gradcheck::G& g, gradcheck::G::Id y, const Tensor<double>* pr) {
    double s = 0;
    for (std::size_t i = 0; i < pr->size(); ++i) s += (*pr)[i] * g.value(y)[i];
    return g.custom("probe", Tensor<double>(nn::Shape{1}, s), {y}, [pr](gradcheck::G& gg, gradcheck::G::Id self) {
      auto* d = gg.grad_slot(gg.inputs(self)[0]);
      for (std::size_t i = 0; i < pr->size(); ++i) (*d)[i] += (*pr)[i] * gg.grad(self)[0];
    });
  };

  auto x = uniform({2, 3, 8, 8}, rng, -1, 1);
  auto w = uniform({4, 3, 3, 3}, rng, -0.5, 0.5);
  auto b = uniform({4}, rng, -0.5, 0.5);
  const auto probe = uniform({2, 4, 8, 8}, rng, -1, 1);
  for (const std::string act : {"conv2d", "conv2d+relu", "conv2d+sigmoid"}) {
    const gradcheck::Builder build = [&](gradcheck::G& g) {
      const auto xi = g.parameter(x), wi = g.parameter(w), bi = g.parameter(b);
      auto y = g.conv2d(xi, wi, bi);
      if (act == "conv2d+relu") y = g.relu(y);
      if (act == "conv2d+sigmoid") y = g.sigmoid(y);
      return std::pair{probe_loss(g, y, &probe), std::vector<gradcheck::G::Id>{xi, wi, bi}};
    };
    parts.push_back({act, gradcheck::check(build, {{"x", &x}, {"w", &w}, {"b", &b}}, 150, rng(), kGradH)});
  }

  auto pred = uniform({2, 1, 8, 8}, rng, -2, 2);
  const auto target = uniform({2, 1, 8, 8}, rng, -1, 1);
  const auto mask = binary({2, 1, 8, 8}, rng);
  const gradcheck::Builder mse = [&](gradcheck::G& g) {
    const auto p = g.parameter(pred);
    return std::pair{train::mse_loss(g, p, target), std::vector<gradcheck::G::Id>{p}};
  };
  parts.push_back({"mse_loss", gradcheck::check(mse, {{"pred", &pred}}, 100, rng(), kGradH)});
  const gradcheck::Builder jac = [&](gradcheck::G& g) {
    const auto p = g.parameter(pred);
    return std::pair{train::jaccard_loss(g, g.sigmoid(p), mask), std::vector<gradcheck::G::Id>{p}};
  };
  parts.push_back({"jaccard_loss", gradcheck::check(jac, {{"logits", &pred}}, 100, rng(), kGradH)});

  // Full multitask loss through a depth-2 UNet.
  nn::UNetConfig cfg;
  cfg.in_bands = 3;
  cfg.depth = 2;
  cfg.base_channels = 4;
  auto model = nn::init_params<double>(cfg, 11);
  const auto input = uniform({2, 3, 8, 8}, rng, 0, 1);
  const auto t_tree = binary({2, 1, 8, 8}, rng), t_aux = binary({2, 1, 8, 8}, rng);
  const auto t_height = uniform({2, 1, 8, 8}, rng, 0, 1);
  const std::map<Task, const Tensor<double>*> targets{
      {Task::tree_mask, &t_tree}, {Task::pixel_height, &t_height}, {Task::aux_mask, &t_aux}};
  std::vector<gradcheck::Param> params;
  for (auto& p : model.parameters()) params.push_back({p.name, &p.value});
  const gradcheck::Builder unet = [&](gradcheck::G& g) {
    const auto built = model.build(g, g.constant(input));
    return std::pair{train::multitask_loss(g, built.outputs, targets, train::LossWeights{}), built.params};
  };
  parts.push_back({"multitask_unet", gradcheck::check(unet, params, 2000, rng(), kGradH)});

  std::size_t checked = 0, skipped = 0;
  double worst = 0;
  std::string where;
  for (const auto& p : parts) {
    checked += p.r.checked;
    skipped += p.r.skipped;
    if (p.r.max_rel >= worst) worst = p.r.max_rel, where = p.name + " " + p.r.worst;
  }
  const double secs = since(t0);
  const std::size_t unet_checked = parts.back().r.checked;
  Outcome o;
  o.pass = checked >= kGradMinParams && unet_checked >= kGradMinParams && worst <= kGradRelTol && secs < kGradSeconds;
  o.detail = fmt("%zu params (%zu in UNet), %zu kink-skipped, max rel %.2e (tol %.0e), %.1fs; worst %s", checked,
                 unet_checked, skipped, worst, kGradRelTol, secs, where.c_str());
  return o;
}

// ---- metric oracles -----------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  double worst_iou = 0, worst_mae = 0;
  for (std::size_t k = 0; k < kMetricPairs; ++k) {
    std::vector<float> prob(256), truth(256), h1(256), h2(256);
    for (std::size_t i = 0; i < 256; ++i) {
      prob[i] = float(u(rng));
      truth[i] = float(rng() % 3 == 0);
      h1[i] = float(u(rng));
      h2[i] = float(u(rng));
    }
    // Brute-force enumeration over the 16 x 16 grid.
    std::size_t both = 0, either = 0;
    double abs_sum = 0;
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t c = 0; c < 16; ++c) {
        const std::size_t i = r * 16 + c;
        const int p = prob[i] >= 0.5f ? 1 : 0, t = truth[i] >= 0.5f ? 1 : 0;
        both += std::size_t(p & t);
        either += std::size_t(p | t);
        abs_sum += std::fabs(double(h1[i]) - double(h2[i]));
      }
    }
    const double want_iou = either ? double(both) / double(either) : 1.0;
    const double want_mae = abs_sum / 256.0;
    worst_iou = std::max(worst_iou, std::abs(eval::iou<float>(prob, truth) - want_iou));
    worst_mae = std::max(worst_mae, std::abs(eval::mae<float>(h1, h2) - want_mae));
  }
  return {worst_iou <= kMetricTol && worst_mae <= kMetricTol,
          fmt("%zu pairs of 16x16; max |iou - oracle| %.1e, max |mae - oracle| %.1e (tol %.0e)", kMetricPairs, worst_iou,
              worst_mae, kMetricTol)};
}

// ---- loss values --------------------------------------------------------

Outcome loss_values() {
  auto jl = [](const Tensor<double>& p, const Tensor<double>& y, double s) {
    nn::Graph<double> g;
    return g.value(train::jaccard_loss(g, g.constant(p), y, s))[0];
  };
  const Tensor<double> bin(nn::Shape{4}, std::vector<double>{1, 0, 1, 1}), zeros(nn::Shape{4});
  const double l_same = jl(bin, bin, 1.0);
  const double l_empty = jl(zeros, zeros, 1.0);
  const double l_half = jl(Tensor<double>(nn::Shape{2}, std::vector<double>{0.5, 0.5}),
                           Tensor<double>(nn::Shape{2}, std::vector<double>{1, 0}), 1.0);

  std::vector<nn::NamedParameter<double>> w{{"w", Tensor<double>(nn::Shape{1}, 1.0)}};
  train::AdamState<double> st(w, train::AdamHyper{0.1, 0.9, 0.999, 1e-8});
  train::adam_step(w, {Tensor<double>(nn::Shape{1}, 2.0 * w[0].value[0])}, st);  // d/dw w^2
  const double w1 = w[0].value[0];

  const bool ok = std::abs(l_same) <= kLossTol && std::abs(l_empty) <= kLossTol &&
                  std::abs(l_half - 0.4) <= kLossTol && std::abs(w1 - 0.9) <= kAdamTol;
  return {ok, fmt("jaccard: identical %.3g, empty %.3g, [0.5,0.5] vs [1,0] %.15g (want 0.4); adam w 1 -> %.9f "
                  "(want 0.9 +- %.0e)",
                  l_same, l_empty, l_half, w1, kAdamTol)};
}

// ---- pit-free monotonicity ----------------------------------------------

Outcome pitfree_monotone() {
  std::mt19937_64 rng(99);
  std::size_t compared = 0, violations = 0, pits = 0;
  for (std::size_t k = 0; k < kPitfreeClouds; ++k) {
    geo::GridGeometry g;
    g.origin_x = 500.0;
    g.origin_y = 800.0;
    g.pixel_size = 1.0;
    g.width = 30 + rng() % 20;
    g.height = 30 + rng() % 20;
    g.crs_tag = "EPSG:26916";
    // A few cones, jittered returns, and a sprinkling of deep pit returns.
    std::uniform_real_distribution<double> ux(g.min_x(), g.max_x()), uy(g.min_y(), g.max_y()), u01(0, 1);
    struct Cone {
      double x, y, r, h;
    };
    std::vector<Cone> cones(1 + rng() % 4);
    for (auto& c : cones) c = {ux(rng), uy(rng), 4 + 6 * u01(rng), 30 + 40 * u01(rng)};
    lidar::PointCloud cloud;
    const std::size_t n = std::size_t(double(g.pixel_count()) * (4 + 6 * u01(rng)));
    for (std::size_t i = 0; i < n; ++i) {
      const double x = ux(rng), y = uy(rng);
      double z = 0.5 * u01(rng);
      for (const auto& c : cones) {
        const double d = std::hypot(x - c.x, y - c.y);
        if (d < c.r) z = std::max(z, c.h * (1 - 0.5 * d / c.r) + 0.2 * (u01(rng) - 0.5));
      }
      if (z > 6 && u01(rng) < 0.04) {
        z *= 0.2 * u01(rng);  // return that slipped through the canopy
        ++pits;
      }
      cloud.points.push_back({x, y, z});
    }
    const auto pf = lidar::pitfree_chm(cloud, g);
    const auto naive = lidar::naive_chm(cloud, g);
    for (std::size_t i = 0; i < pf.values().size(); ++i) {
      const float a = pf.values()[i], b = naive.values()[i];
      if (pf.is_nodata(a) || naive.is_nodata(b)) continue;
      ++compared;
      violations += a < b;
    }
  }
  return {violations == 0 && compared > 0,
          fmt("%zu clouds, %zu pit returns, %zu pixels compared, %zu with pitfree < naive", kPitfreeClouds, pits,
              compared, violations)};
}

// ---- segmentation oracle ------------------------------------------------

Outcome segmentation_oracle() {
  TempDir dir("seg");
  double worst_px = 0, worst_ft = 0, min_iou = 1, worst_secs = 0;
  std::size_t points = 0;
  std::vector<std::string> bad;
  for (std::size_t seed = 0; seed < kSegScenes; ++seed) {
    synth::SceneOptions o;
    o.n_trees = kSegTrees;
    o.seed = seed;
    const std::string sd = dir.file("scene" + std::to_string(seed)), gd = dir.file("gt" + std::to_string(seed));
    const auto t0 = Clock::now();
    const auto scene = cli::cmd_synth(o, sd);
    const auto gt = cli::cmd_ground_truth({{sd + "/cloud.las"}, sd + "/naip.tif", gd}, {});
    worst_secs = std::max(worst_secs, since(t0));
    points = std::max(points, scene.cloud.size());

    if (gt.tops.size() != kSegTrees) bad.push_back(fmt("seed %zu: %zu tops", seed, gt.tops.size()));
    // One-to-one nearest matching of detected tops to planted apexes.
    std::vector<bool> used(scene.trees.size(), false);
    for (const auto& t : gt.tops) {
      double best = 1e18;
      std::size_t bi = 0;
      for (std::size_t k = 0; k < scene.trees.size(); ++k) {
        const double col = (scene.trees[k].x - scene.grid.origin_x) / scene.grid.pixel_size;
        const double row = (scene.grid.origin_y - scene.trees[k].y) / scene.grid.pixel_size;
        const double d = std::hypot(double(t.col) + 0.5 - col, double(t.row) + 0.5 - row);
        if (d < best) best = d, bi = k;
      }
      if (used[bi]) bad.push_back(fmt("seed %zu: two tops on tree %zu", seed, bi + 1));
      used[bi] = true;
      worst_px = std::max(worst_px, best);
      worst_ft = std::max(worst_ft, std::abs(double(t.height) - scene.trees[bi].height));
    }
    const geo::Raster mask = geo::read_geotiff(gd + "/tree_mask.tif");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < mask.values().size(); ++i) {
      const bool a = mask.values()[i] == 1.0f, b = scene.planted_mask.values()[i] == 1.0f;
      inter += a && b;
      uni += a || b;
    }
    min_iou = std::min(min_iou, uni ? double(inter) / double(uni) : 1.0);
  }
  Outcome o;
  o.pass = bad.empty() && worst_px <= kApexPixels && worst_ft <= kApexFeet && min_iou >= kSegIou &&
           worst_secs < kSegSeconds;
  o.detail = fmt("%zu scenes x %zu trees (<= %zu points); apex error <= %.2f px, height error <= %.3f ft, "
                 "mask IoU >= %.3f, slowest %.2fs",
                 kSegScenes, kSegTrees, points, worst_px, worst_ft, min_iou, worst_secs);
  for (const auto& b : bad) o.detail += "; " + b;
  return o;
}

// ---- overfit --------------------------------------------------------------

struct OverfitData {
  geo::PatchSet patches;
  double cover = 0;
};

const OverfitData& overfit_data() {
  static const OverfitData data = [] {
    synth::SceneOptions o;
    o.width_m = 480;
    o.height_m = 960;
    o.n_trees = 100;
    o.seed = 1;
    const auto scene = synth::generate_scene(o);
    const auto gt = cli::ground_truth(scene.cloud, scene.naip, {});
    const auto stack = cli::build_stack({scene.naip, scene.s2_10m, scene.s2_20m}, cli::BandSet::ms);
    cli::PrepareOptions po;
    po.test_fraction = 0;
    auto prepared = cli::prepare(stack, gt.tree_mask, gt.pixel_height, scene.impervious, po);
    return OverfitData{std::move(prepared.patches), scene.planted_fraction};
  }();
  return data;
}

Outcome overfit(Variant variant, std::vector<Task> tasks) {
  const auto& data = overfit_data();
  train::TrainConfig tc;
  tc.model.variant = variant;
  tc.model.tasks = tasks;
  tc.model.in_bands = data.patches.in_bands;
  tc.model.depth = 2;
  tc.model.base_channels = 16;
  tc.epochs = kOverfitEpochs;
  tc.test_fraction = 0;
  tc.seed = 0;
  if (variant == Variant::fully_shared) tc.weights.height = 2.0;

  auto meets = [&](const eval::Metrics& m) {
    return (!m.tree_iou || *m.tree_iou >= kOverfitIou) && (!m.height_mae || *m.height_mae <= kOverfitMae) &&
           (!m.aux_iou || tasks.size() > 1 || *m.aux_iou >= kOverfitIou);
  };
  const auto t0 = Clock::now();
  std::size_t reached = 0;
  eval::Metrics confirmed;
  bool timed_out = false;
  train::train(data.patches, tc, [&](const train::EpochRecord& e, const nn::UNetModel<float>& model) {
    if (since(t0) > kOverfitSeconds) {
      timed_out = true;
      return false;
    }
    if (!meets(e.train)) return true;
    // Confirm on every patch with the weights as they stand after the epoch.
    confirmed = eval::evaluate(model, data.patches);
    if (!meets(confirmed)) return true;
    reached = e.epoch;
    return false;
  });
  const double secs = since(t0);
  Outcome o;
  o.pass = reached > 0 && secs < kOverfitSeconds;
  auto opt = [](const std::optional<double>& v) { return v ? fmt("%.4f", *v) : std::string("-"); };
  if (reached) {
    o.detail = fmt("bars met at epoch %zu (limit %zu) in %.0fs; tree IoU %s, height MAE %s, aux IoU %s", reached,
                   kOverfitEpochs, secs, opt(confirmed.tree_iou).c_str(), opt(confirmed.height_mae).c_str(),
                   opt(confirmed.aux_iou).c_str());
  } else {
    o.detail = fmt("bars not met %s after %.0fs", timed_out ? "before the time limit" : "within the epoch limit", secs);
  }
  if (variant == Variant::fully_shared) o.detail += "; height loss weight 2.0";
  return o;
}

// ---- variant structure ----------------------------------------------------

Outcome variant_structure() {
  nn::UNetConfig full;
  full.in_bands = 14;
  full.depth = 2;
  full.base_channels = 16;
  auto part = full;
  part.variant = Variant::partially_shared;
  const nn::UNetModel<float> f(full), p(part);
  const double ratio = double(p.parameter_count()) / double(f.parameter_count());
  bool heads_ok = true;
  std::string seen;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> batch({2, 14, 240, 240});
  for (auto& v : batch.storage()) v = u(rng);
  const std::vector<std::pair<Variant, std::vector<Task>>> grid{
      {Variant::fully_shared, {Task::tree_mask, Task::pixel_height, Task::aux_mask}},
      {Variant::partially_shared, {Task::tree_mask, Task::pixel_height, Task::aux_mask}},
      {Variant::single_task, {Task::tree_mask}},
      {Variant::single_task, {Task::pixel_height}},
      {Variant::single_task, {Task::aux_mask}},
  };
  for (const auto& [v, tasks] : grid) {
    auto cfg = full;
    cfg.variant = v;
    cfg.tasks = tasks;
    const auto m = nn::init_params<float>(cfg, 1);
    const auto out = m.forward(batch);
    heads_ok &= out.size() == tasks.size();
    for (Task t : tasks) {
      heads_ok &= out.count(t) && out.at(t).shape() == nn::Shape{2, 1, 240, 240};
    }
    seen += " " + nn::to_string(v) + ":" + std::to_string(out.size());
  }
  return {p.parameter_count() > f.parameter_count() && heads_ok,
          fmt("params fully_shared %zu, partially_shared %zu (x%.2f); heads at (2,1,240,240):%s", f.parameter_count(),
              p.parameter_count(), ratio, seen.c_str())};
}

// ---- determinism ----------------------------------------------------------

Outcome train_determinism() {
  TempDir dir("det");
  synth::SceneOptions o;
  o.width_m = o.height_m = 128;
  o.n_trees = 4;
  o.seed = 5;
  const auto scene = synth::generate_scene(o);
  const auto gt = cli::ground_truth(scene.cloud, scene.naip, {});
  const auto stack = cli::build_stack({scene.naip, scene.s2_10m, scene.s2_20m}, cli::BandSet::ms);
  cli::PrepareOptions po;
  po.patch_size = 32;
  const auto prepared = cli::prepare(stack, gt.tree_mask, gt.pixel_height, scene.impervious, po);
  geo::write_patches(dir.file("patches.bin"), prepared.patches);

  train::TrainConfig tc;
  tc.model.in_bands = 0;
  tc.model.depth = 2;
  tc.model.base_channels = 8;
  tc.epochs = 3;
  tc.seed = 17;
  cli::cmd_train({dir.file("patches.bin"), dir.file("run1")}, tc);
  cli::cmd_train({dir.file("patches.bin"), dir.file("run2")}, tc);
  bool same = true;
  std::string sizes;
  for (const char* f : {"history.csv", "model.cnpm", "train_config.json"}) {
    const std::string a = slurp(dir.file(std::string("run1/") + f)), b = slurp(dir.file(std::string("run2/") + f));
    same &= !a.empty() && a == b;
    sizes += fmt(" %s %zuB", f, a.size());
  }
  return {same, fmt("two cmd_train runs, seed 17, %zu patches, 3 epochs: files %s;%s", prepared.patches.samples.size(),
                    same ? "bit-identical" : "DIFFER", sizes.c_str())};
}

// ---- aggregation ----------------------------------------------------------

Outcome aggregation() {
  TempDir dir("agg");
  synth::SceneOptions o;
  o.width_m = 240;
  o.height_m = 180;
  o.n_trees = 12;
  o.seed = 8;
  o.zones_x = 3;
  o.zones_y = 2;
  cli::cmd_synth(o, dir.file("scene"));
  const auto manifest = nlohmann::json::parse(slurp(dir.file("scene/manifest.json")));
  const geo::Raster planted = geo::read_geotiff(dir.file("scene/planted_mask.tif"));
  const double cover = aggregate::citywide_cover(planted);
  const double cover_err = std::abs(cover - manifest["planted_cover_fraction"].get<double>());

  // Pipeline truth mask against the synthetic zone grid, plus a random
  // two-zone split along a zigzag.
  const auto gt = cli::cmd_ground_truth({{dir.file("scene/cloud.las")}, dir.file("scene/naip.tif"), dir.file("gt")}, {});
  geo::Raster mask = gt.tree_mask;
  std::mt19937_64 rng(4);
  for (std::size_t k = 0; k < 500; ++k) mask.values()[rng() % mask.values().size()] = mask.nodata();
  std::size_t valid = 0;
  for (float v : mask.values()) valid += !mask.is_nodata(v);
  const auto zones = aggregate::read_zones_geojson(dir.file("scene/zones.geojson"));
  const auto ch = aggregate::canopy_height(mask, gt.pixel_height);
  std::size_t grid_sum = 0;
  for (const auto& z : aggregate::zonal_stats(mask, ch, zones.zones)) grid_sum += z.pixel_count;

  const auto& g = mask.geometry();
  std::uniform_real_distribution<double> ux(g.min_x() + 10, g.max_x() - 10);
  const double xa = ux(rng), xb = ux(rng), xc = ux(rng), ym = g.min_y() + 0.37 * (g.max_y() - g.min_y());
  const aggregate::Ring west{{g.min_x() - 1, g.min_y() - 1}, {xa, g.min_y() - 1}, {xb, ym}, {xc, g.max_y() + 1},
                             {g.min_x() - 1, g.max_y() + 1}, {g.min_x() - 1, g.min_y() - 1}};
  const aggregate::Ring east{{xa, g.min_y() - 1}, {g.max_x() + 1, g.min_y() - 1}, {g.max_x() + 1, g.max_y() + 1},
                             {xc, g.max_y() + 1}, {xb, ym}, {xa, g.min_y() - 1}};
  const std::vector<aggregate::ZonePolygon> halves{{"west", {{west, {}}}}, {"east", {{east, {}}}}};
  const auto hs = aggregate::zonal_stats(mask, ch, halves);
  const std::size_t half_sum = hs[0].pixel_count + hs[1].pixel_count;

  geo::GridGeometry line = g;
  line.width = 1000;
  line.height = 1;
  geo::Raster m59(line, 1);
  for (std::size_t i = 0; i < 59; ++i) m59.values()[i * 17] = 1.0f;
  const std::string text = aggregate::format_percent(aggregate::citywide_cover(m59));

  return {cover_err <= kCoverTol && grid_sum == valid && half_sum == valid && text == "5.9%",
          fmt("zone grid %zu zones sum %zu, zigzag halves sum %zu, valid pixels %zu; planted cover %.12f vs manifest "
              "(|diff| %.1e, tol %.0e); 59/1000 -> \"%s\"",
              zones.zones.size(), grid_sum, half_sum, valid, cover, cover_err, kCoverTol, text.c_str())};
}

// ---- I/O round trips ------------------------------------------------------

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](T x, T y) {
           return std::memcmp(&x, &y, sizeof(T)) == 0;
         });
}

Outcome io_roundtrips() {
  TempDir dir("io");
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(-1000, 1000);
  geo::GridGeometry g;
  g.origin_x = 443210.5;
  g.origin_y = 4641234.25;
  g.pixel_size = 0.5;
  g.width = 37;
  g.height = 23;
  g.crs_tag = "EPSG:26916";
  geo::Raster r(g, 3);
  for (float& v : r.values()) v = u(rng);
  r.values()[5] = r.nodata();
  geo::write_geotiff(dir.file("r.tif"), r);
  const auto rt = geo::read_geotiff(dir.file("r.tif"));
  const bool tif = rt.geometry() == g && rt.bands() == 3 && same_bits(rt.values(), r.values()) &&
                   rt.nodata() == r.nodata();

  geo::Raster one(g, 1);
  for (float& v : one.values()) v = u(rng);
  one.values()[7] = one.nodata();
  geo::write_ascii_grid(dir.file("r.asc"), one);
  const auto ra = geo::read_ascii_grid(dir.file("r.asc"), g.crs_tag);
  const bool asc = ra.geometry() == g && same_bits(ra.values(), one.values());

  geo::PatchSet ps;
  ps.height = ps.width = 16;
  ps.in_bands = 5;
  for (std::size_t k = 0; k < 3; ++k) {
    geo::PatchSample s;
    s.row0 = 16 * k;
    s.col0 = 7;
    for (std::size_t i = 0; i < 5 * 256; ++i) s.input.push_back(u(rng));
    for (std::size_t i = 0; i < 256; ++i) {
      s.tree_mask.push_back(float(rng() & 1));
      s.height.push_back(u(rng));
      s.aux_mask.push_back(float(rng() & 1));
    }
    ps.samples.push_back(std::move(s));
  }
  geo::write_patches(dir.file("p.bin"), ps);
  const auto pb = geo::read_patches(dir.file("p.bin"));
  bool patches = pb.height == 16 && pb.width == 16 && pb.in_bands == 5 && pb.samples.size() == 3;
  for (std::size_t k = 0; patches && k < 3; ++k) {
    const auto &a = ps.samples[k], &b = pb.samples[k];
    patches = a.row0 == b.row0 && a.col0 == b.col0 && same_bits(a.input, b.input) &&
              same_bits(a.tree_mask, b.tree_mask) && same_bits(a.height, b.height) && same_bits(a.aux_mask, b.aux_mask);
  }

  nn::UNetConfig cfg;
  cfg.variant = Variant::partially_shared;
  cfg.in_bands = 5;
  cfg.depth = 2;
  cfg.base_channels = 8;
  const auto m = nn::init_params<float>(cfg, 77);
  nn::save_model(dir.file("m.cnpm"), m);
  const auto mb = nn::load_model(dir.file("m.cnpm"));
  bool model = mb.config() == m.config() && mb.parameters().size() == m.parameters().size();
  for (std::size_t i = 0; model && i < m.parameters().size(); ++i) {
    model = mb.parameters()[i].name == m.parameters()[i].name &&
            same_bits(mb.parameters()[i].value.storage(), m.parameters()[i].value.storage());
  }
  nn::save_model(dir.file("m2.cnpm"), mb);
  model = model && slurp(dir.file("m.cnpm")) == slurp(dir.file("m2.cnpm"));

  auto yn = [](bool b) { return b ? "exact" : "MISMATCH"; };
  return {tif && asc && patches && model, fmt("GeoTIFF 3-band %s, ASCII grid %s, patch container %s, model file %s",
                                              yn(tif), yn(asc), yn(patches), yn(model))};
}

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  cli::set_verbose(false);
  const std::vector<Criterion> criteria{
      {"gradient_suite", gradient_suite},
      {"metric_oracles", metric_oracles},
      {"loss_values", loss_values},
      {"pitfree_monotonicity", pitfree_monotone},
      {"segmentation_oracle", segmentation_oracle},
      {"overfit_fully_shared", [] { return overfit(Variant::fully_shared, {Task::tree_mask, Task::pixel_height, Task::aux_mask}); }},
      {"overfit_tree_mask_alone", [] { return overfit(Variant::single_task, {Task::tree_mask}); }},
      {"overfit_pixel_height_alone", [] { return overfit(Variant::single_task, {Task::pixel_height}); }},
      {"overfit_aux_mask_alone", [] { return overfit(Variant::single_task, {Task::aux_mask}); }},
      {"variant_structure", variant_structure},
      {"train_determinism", train_determinism},
      {"aggregation", aggregation},
      {"io_roundtrips", io_roundtrips},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  std::size_t failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-28s %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
