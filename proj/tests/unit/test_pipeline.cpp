#include <doctest.h>

#include <json.hpp>

#include "canopy/aggregate/aggregate.hpp"
#include "canopy/cli/app.hpp"
#include "canopy/cli/pipeline.hpp"
#include "canopy/geo/raster_io.hpp"
#include "canopy/nn/unet.hpp"
#include "canopy/synth/scene.hpp"
#include "canopy/train/train.hpp"
#include "helpers.hpp"

using namespace canopy;
using geo::Raster;

namespace {

synth::Scene small_scene(std::size_t n_trees, std::uint64_t seed, std::size_t extent = 120) {
  synth::SceneOptions o;
  o.n_trees = n_trees;
  o.seed = seed;
  o.width_m = o.height_m = extent;
  return synth::generate_scene(o);
}

std::size_t count_ones(const Raster& r) {
  std::size_t n = 0;
  for (float v : r.values()) n += v == 1.0f;
  return n;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "canopy");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run_cli(int(argv.size()), argv.data());
}

struct Quiet {
  Quiet() { cli::set_verbose(false); }
};
const Quiet quiet;

}  // namespace

TEST_CASE("synthetic scene") {
  const auto s = small_scene(5, 3);
  CHECK(s.trees.size() == 5);
  CHECK(s.naip.bands() == 4);
  CHECK(s.s2_10m.bands() == 4);
  CHECK(s.s2_20m.bands() == 6);
  CHECK(s.s2_10m.geometry().pixel_size == 10.0);
  CHECK(s.s2_20m.geometry().pixel_size == 20.0);
  CHECK(s.zones.size() == 4);
  CHECK(s.planted_pixels == count_ones(s.planted_mask));
  CHECK(std::abs(s.planted_fraction - aggregate::citywide_cover(s.planted_mask)) <= 1e-12);
  const auto j = nlohmann::json::parse(synth::manifest_json(s));
  CHECK(j["trees"].size() == 5);
  CHECK(j["planted_cover_fraction"].get<double>() == s.planted_fraction);
  for (std::size_t a = 0; a < s.trees.size(); ++a)
    for (std::size_t b = a + 1; b < s.trees.size(); ++b)
      CHECK(std::hypot(s.trees[a].x - s.trees[b].x, s.trees[a].y - s.trees[b].y) >= s.options.min_separation);

  const auto again = small_scene(5, 3);
  CHECK(again.naip.values() == s.naip.values());
  CHECK(again.cloud.size() == s.cloud.size());

  const auto empty = small_scene(0, 3);
  CHECK(nlohmann::json::parse(synth::manifest_json(empty))["trees"].empty());
  CHECK(count_ones(empty.planted_mask) == 0);
  CHECK(empty.planted_fraction == 0.0);
  CHECK(empty.cloud.size() > 0);  // roofs still return

  synth::SceneOptions bad;
  bad.min_separation = 5.0;
  CHECK_THROWS_AS(synth::generate_scene(bad), ConfigError);
}

TEST_CASE("ground truth on synthetic scenes") {
  const auto s = small_scene(5, 1);
  const auto gt = cli::ground_truth(s.cloud, s.naip, {});
  CHECK(gt.tops.size() == 5);
  for (std::size_t i = 0; i < gt.tops.size(); ++i) CHECK(gt.tops[i].id == int(i + 1));
  CHECK(gt.tree_mask.geometry() == s.naip.geometry());

  const auto again = cli::ground_truth(s.cloud, s.naip, {});
  CHECK(again.tree_mask.values() == gt.tree_mask.values());
  CHECK(again.pixel_height.values() == gt.pixel_height.values());

  // Tiling: a single tile and 40 px tiles with a 25 px buffer find the same tops.
  cli::GroundTruthOptions one, tiled;
  one.tile_pixels = 0;
  tiled.tile_pixels = 40;
  tiled.buffer_pixels = 25;
  const auto a = cli::ground_truth(s.cloud, s.naip, one), b = cli::ground_truth(s.cloud, s.naip, tiled);
  REQUIRE(a.tops.size() == b.tops.size());
  for (std::size_t i = 0; i < a.tops.size(); ++i) {
    CHECK(a.tops[i].row == b.tops[i].row);
    CHECK(a.tops[i].col == b.tops[i].col);
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.tree_mask.values().size(); ++i) same += a.tree_mask.values()[i] == b.tree_mask.values()[i];
  CHECK(double(same) / double(a.tree_mask.values().size()) >= 0.99);

  const auto none = cli::ground_truth(lidar::PointCloud{}, s.naip, {});
  CHECK(none.tops.empty());
  CHECK(count_ones(none.tree_mask) == 0);
  for (float v : none.tree_mask.values()) CHECK(v == 0.0f);

  cli::GroundTruthOptions bad;
  bad.zmin = 90;
  CHECK_THROWS_AS(cli::ground_truth(s.cloud, s.naip, bad), ConfigError);
}

TEST_CASE("cmd_ground_truth files") {
  testutil::TempDir dir("gt");
  const auto s = small_scene(3, 2);
  synth::write_scene(s, dir.file("scene"));
  const auto gt = cli::cmd_ground_truth({{dir.file("scene")}, dir.file("scene/naip.tif"), dir.file("gt")}, {});
  CHECK(gt.tops.size() == 3);
  CHECK(geo::read_geotiff(dir.file("gt/tree_mask.tif")).values() == gt.tree_mask.values());
  const std::string csv = testutil::slurp(dir.file("gt/treetops.csv"));
  CHECK(csv.rfind("id,row,col,x,y,height\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK_THROWS_AS(cli::cmd_ground_truth({{dir.file("nothing.las")}, dir.file("scene/naip.tif"), dir.file("gt2")}, {}),
                  InputError);
}

TEST_CASE("prepare") {
  const auto s = small_scene(12, 4, 480);
  const auto stack = cli::build_stack({s.naip, s.s2_10m, s.s2_20m}, cli::BandSet::ms);
  CHECK(stack.bands() == 14);
  cli::PrepareOptions o;
  const auto p = cli::prepare(stack, s.planted_mask, s.planted_height, s.impervious, o);
  CHECK(p.patches.samples.size() == 4);
  CHECK(p.patches.in_bands == 14);
  CHECK(p.stats.bands.size() == 14);
  // Statistics come from the training windows, so only those are bounded.
  for (std::size_t k : train::split_dataset(4, o.test_fraction, o.seed).train) {
    for (float v : p.patches.samples[k].input) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  const auto rgb = cli::build_stack({s.naip, std::nullopt, std::nullopt}, cli::BandSet::rgb);
  CHECK(rgb.bands() == 3);
  o.bands = cli::BandSet::rgb;
  o.patch_size = 100;
  const auto pr = cli::prepare(rgb, s.planted_mask, s.planted_height, s.impervious, o);
  CHECK(pr.patches.in_bands == 3);
  CHECK(pr.patches.samples.size() == 16);  // floor(480 / 100)^2

  CHECK_THROWS_AS(cli::build_stack({s.naip, std::nullopt, std::nullopt}, cli::BandSet::ms), ConfigError);
  CHECK_THROWS_AS(cli::build_stack({s.s2_20m, std::nullopt, std::nullopt}, cli::BandSet::rgb), InputError);
  o.patch_size = 500;
  CHECK_THROWS_AS(cli::prepare(rgb, s.planted_mask, s.planted_height, s.impervious, o), InputError);
  CHECK(cli::parse_band_set("14") == cli::BandSet::ms);
  CHECK_THROWS_AS(cli::parse_band_set("nir"), ConfigError);

  Raster naip(testutil::grid(2, 1), 4);
  naip.at(0, 0, 0) = 0.3f;  // red
  naip.at(3, 0, 0) = 0.1f;  // nir
  naip.at(0, 0, 1) = 0.1f;
  naip.at(3, 0, 1) = 0.6f;
  const Raster imp = cli::impervious_from_ndvi(naip);
  CHECK(imp.at(0, 0) == 1.0f);
  CHECK(imp.at(0, 1) == 0.0f);
}

TEST_CASE("predict reproduces forward on a training patch") {
  const auto s = small_scene(3, 5, 128);
  const auto stack = cli::build_stack({s.naip, std::nullopt, std::nullopt}, cli::BandSet::rgb);
  cli::PrepareOptions o;
  o.bands = cli::BandSet::rgb;
  o.patch_size = 32;
  o.test_fraction = 0.25;
  const auto p = cli::prepare(stack, s.planted_mask, s.planted_height, s.impervious, o);
  CHECK(p.patches.samples.size() == 16);

  nn::UNetConfig cfg;
  cfg.in_bands = 3;
  cfg.depth = 2;
  cfg.base_channels = 4;
  const auto model = nn::init_params<float>(cfg, 6);
  const auto pred = cli::predict(model, stack, p.stats, 32);
  for (std::size_t k : {0, 5, 15}) {
    const auto& smp = p.patches.samples[k];
    nn::Tensor<float> x({1, 3, 32, 32}, smp.input);
    const auto out = model.forward(x);
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 0; c < 32; ++c) {
        const std::size_t i = r * 32 + c;
        REQUIRE(pred.tree_prob->at(smp.row0 + r, smp.col0 + c) == out.at(nn::Task::tree_mask)[i]);
        REQUIRE(pred.pixel_height->at(smp.row0 + r, smp.col0 + c) == out.at(nn::Task::pixel_height)[i]);
        REQUIRE(pred.aux_prob->at(smp.row0 + r, smp.col0 + c) == out.at(nn::Task::aux_mask)[i]);
      }
    }
  }
  CHECK_THROWS_AS(cli::predict(model, stack, p.stats, 30), ConfigError);
  auto short_stats = p.stats;
  short_stats.bands.pop_back();
  CHECK_THROWS_AS(cli::predict(model, stack, short_stats, 32), InputError);
}

TEST_CASE("cli end to end and exit codes") {
  testutil::TempDir dir("cli");
  const auto d = [&](const std::string& f) { return dir.file(f); };
  REQUIRE(run({"-q", "synth", "--out", d("scene"), "--n-trees", "4", "--width", "128", "--height", "128", "--seed", "7"}) == 0);
  REQUIRE(run({"-q", "ground-truth", "--lidar", d("scene/cloud.las"), "--naip", d("scene/naip.tif"), "--out", d("gt")}) == 0);
  REQUIRE(run({"-q", "prepare", "--naip", d("scene/naip.tif"), "--s2-10m", d("scene/s2_10m.tif"), "--s2-20m",
               d("scene/s2_20m.tif"), "--tree-mask", d("gt/tree_mask.tif"), "--pixel-height", d("gt/pixel_height.tif"),
               "--out", d("patches.bin"), "--patch-size", "32"}) == 0);
  const auto patches = geo::read_patches(d("patches.bin"));
  CHECK(patches.samples.size() == 16);
  CHECK(patches.in_bands == 14);
  {
    std::ofstream cfg(d("train.json"));
    cfg << R"({"seed": 3, "train": {"epochs": 1, "depth": 2, "base_channels": 4}})";
  }
  REQUIRE(run({"-q", "train", "--config", d("train.json"), "--patches", d("patches.bin"), "--out", d("model")}) == 0);
  const auto model = nn::load_model(d("model/model.cnpm"));
  CHECK(model.config().in_bands == 14);
  CHECK(model.config().base_channels == 4);
  const auto tc = train::train_config_from_json(testutil::slurp(d("model/train_config.json")));
  CHECK(tc.seed == 3);
  REQUIRE(run({"-q", "eval", "--model", d("model/model.cnpm"), "--patches", d("patches.bin"), "--out", d("eval")}) == 0);
  CHECK(testutil::slurp(d("eval/results.csv")).find("MT Fully Shared,14 MS Bands,") != std::string::npos);
  REQUIRE(run({"-q", "predict", "--model", d("model/model.cnpm"), "--stats", d("patches.bin.stats.json"), "--naip",
               d("scene/naip.tif"), "--s2-10m", d("scene/s2_10m.tif"), "--s2-20m", d("scene/s2_20m.tif"), "--out",
               d("pred"), "--patch-size", "32"}) == 0);
  REQUIRE(run({"-q", "aggregate", "--tree-mask", d("gt/tree_mask.tif"), "--height", d("gt/pixel_height.tif"), "--zones",
               d("scene/zones.geojson"), "--out", d("agg")}) == 0);
  const std::string zones = testutil::slurp(d("agg/zones.csv"));
  CHECK(std::count(zones.begin(), zones.end(), '\n') == 5);
  const auto summary = nlohmann::json::parse(testutil::slurp(d("agg/summary.json")));
  CHECK(summary["zone_count"] == 4);

  CHECK(run({}) == 2);
  CHECK(run({"--help"}) == 0);
  CHECK(run({"train", "--bogus"}) == 2);
  CHECK(run({"-q", "train", "--patches", d("missing.bin"), "--out", d("m2")}) == 3);
  CHECK(run({"-q", "prepare", "--naip", d("scene/naip.tif"), "--tree-mask", d("gt/tree_mask.tif"), "--pixel-height",
             d("gt/pixel_height.tif"), "--out", d("p2.bin")}) == 2);  // ms without Sentinel inputs
  {
    std::ofstream cfg(d("bad.json"));
    cfg << R"({"train": {"epochz": 1}})";
  }
  CHECK(run({"-q", "train", "--config", d("bad.json"), "--patches", d("patches.bin"), "--out", d("m3")}) == 2);
  {
    std::ofstream cfg(d("bad2.json"));
    cfg << R"({"no_such_option": 1})";
  }
  CHECK(run({"-q", "train", "--config", d("bad2.json"), "--patches", d("patches.bin"), "--out", d("m4")}) == 2);
  CHECK(run({"-q", "train", "--patches", d("patches.bin"), "--out", d("m5"), "--lr", "-1"}) == 2);
}
