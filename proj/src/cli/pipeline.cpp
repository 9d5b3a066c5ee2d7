#include "canopy/cli/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <sstream>

#include "canopy/aggregate/aggregate.hpp"
#include "canopy/error.hpp"
#include "canopy/geo/patch_io.hpp"
#include "canopy/geo/raster_io.hpp"
#include "canopy/lidar/filters.hpp"
#include "canopy/nn/unet.hpp"

namespace canopy::cli {

namespace fs = std::filesystem;

namespace {
std::atomic<bool> g_verbose{true};
std::mutex g_log_mutex;

geo::GridGeometry subgrid(const geo::GridGeometry& g, std::size_t row0, std::size_t col0, std::size_t h,
                          std::size_t w) {
  geo::GridGeometry s = g;
  s.origin_x = g.origin_x + double(col0) * g.pixel_size;
  s.origin_y = g.origin_y - double(row0) * g.pixel_size;
  s.width = w;
  s.height = h;
  return s;
}

geo::Raster crop_raster(const geo::Raster& r, std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) {
  geo::Raster out(subgrid(r.geometry(), row0, col0, h, w), r.bands(), 0.0f, r.nodata());
  for (std::size_t b = 0; b < r.bands(); ++b) {
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) out.at(b, row, col) = r.at(b, row0 + row, col0 + col);
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("output directory not set");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

}  // namespace

void set_verbose(bool on) { g_verbose = on; }

void log(const std::string& message) {
  if (!g_verbose) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[canopy] " << message << '\n';
}

// ---- ground truth -------------------------------------------------------

void GroundTruthOptions::validate() const {
  if (!(ndvi_threshold >= -1.0 && ndvi_threshold <= 1.0)) throw ConfigError("NDVI threshold must lie in [-1, 1]");
  if (!(zmin >= 0.0 && zmin <= zmax)) throw ConfigError("height filter needs 0 <= zmin <= zmax");
  if (!(window_radius > 0.0)) throw ConfigError("local-maximum window radius must be positive");
  if (tile_pixels > 0 && buffer_pixels * 2 >= tile_pixels * 4) {
    throw ConfigError("tile buffer is out of proportion to the tile size");
  }
}

GroundTruth ground_truth(const lidar::PointCloud& cloud, const geo::Raster& naip, const GroundTruthOptions& opt) {
  opt.validate();
  if (naip.bands() <= std::max(opt.red_band, opt.nir_band)) {
    throw InputError("NAIP raster has " + std::to_string(naip.bands()) + " bands; red/NIR bands " +
                     std::to_string(opt.red_band) + "/" + std::to_string(opt.nir_band) + " requested");
  }
  const geo::GridGeometry& g = naip.geometry();
  const geo::Raster ndvi = geo::ndvi(naip.extract_band(opt.nir_band), naip.extract_band(opt.red_band));
  const lidar::PointCloud veg =
      lidar::filter_height(lidar::mask_by_ndvi(cloud, ndvi, opt.ndvi_threshold), opt.zmin, opt.zmax);
  log("ground truth: " + std::to_string(veg.size()) + " of " + std::to_string(cloud.size()) +
      " returns kept after NDVI and height filters");

  struct Tile {
    std::size_t r0, c0, h, w;
  };
  std::vector<Tile> tiles;
  const std::size_t step_r = opt.tile_pixels ? opt.tile_pixels : g.height;
  const std::size_t step_c = opt.tile_pixels ? opt.tile_pixels : g.width;
  for (std::size_t r = 0; r < g.height; r += step_r) {
    for (std::size_t c = 0; c < g.width; c += step_c) {
      tiles.push_back({r, c, std::min(step_r, g.height - r), std::min(step_c, g.width - c)});
    }
  }

  std::vector<geo::Raster> masks(tiles.size()), heights(tiles.size());
  std::vector<std::vector<lidar::TreeTop>> tile_tops(tiles.size());
  const std::size_t buf = opt.tile_pixels ? opt.buffer_pixels : 0;
  const auto n_tiles = std::ptrdiff_t(tiles.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < n_tiles; ++t) {
    const Tile& tile = tiles[std::size_t(t)];
    const std::size_t br0 = tile.r0 >= buf ? tile.r0 - buf : 0;
    const std::size_t bc0 = tile.c0 >= buf ? tile.c0 - buf : 0;
    const std::size_t br1 = std::min(g.height, tile.r0 + tile.h + buf);
    const std::size_t bc1 = std::min(g.width, tile.c0 + tile.w + buf);
    const geo::GridGeometry bg = subgrid(g, br0, bc0, br1 - br0, bc1 - bc0);
    const lidar::PointCloud pts = lidar::crop(veg, bg.min_x(), bg.min_y(), bg.max_x(), bg.max_y());
    geo::Raster chm;
    try {
      chm = lidar::pitfree_chm(pts, bg, opt.pitfree);
    } catch (const DegenerateInputError&) {
      // Nothing to triangulate: no vegetation in this tile.
      chm = geo::Raster(bg, 1, geo::kNoData);
    }
    const auto tops = lidar::local_maxima(chm, opt.window_radius, opt.dalponte.th_tree);
    const auto crowns = lidar::dalponte_segment(chm, tops, opt.dalponte);
    const auto truth = lidar::rasterize_truth(crowns, chm);
    const std::size_t off_r = tile.r0 - br0, off_c = tile.c0 - bc0;
    masks[std::size_t(t)] = crop_raster(truth.tree_mask, off_r, off_c, tile.h, tile.w);
    heights[std::size_t(t)] = crop_raster(truth.pixel_height, off_r, off_c, tile.h, tile.w);
    for (const auto& top : tops) {
      if (top.row < off_r || top.col < off_c || top.row >= off_r + tile.h || top.col >= off_c + tile.w) continue;
      lidar::TreeTop global = top;
      global.row = br0 + top.row;
      global.col = bc0 + top.col;
      tile_tops[std::size_t(t)].push_back(global);
    }
  }

  GroundTruth out;
  out.tree_mask = geo::mosaic(masks, geo::MosaicReducer::first);
  out.pixel_height = geo::mosaic(heights, geo::MosaicReducer::first);
  for (auto& tt : tile_tops) out.tops.insert(out.tops.end(), tt.begin(), tt.end());
  std::sort(out.tops.begin(), out.tops.end(), [](const auto& a, const auto& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  for (std::size_t i = 0; i < out.tops.size(); ++i) out.tops[i].id = std::int32_t(i + 1);
  log("ground truth: " + std::to_string(out.tops.size()) + " trees segmented over " +
      std::to_string(tiles.size()) + " tile(s)");
  return out;
}

namespace {

std::vector<std::string> expand_lidar_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".las" || ext == ".csv" || ext == ".xyz")) found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw InputError("no LiDAR files found");
  return files;
}

}  // namespace

GroundTruth cmd_ground_truth(const GroundTruthPaths& paths, const GroundTruthOptions& options) {
  lidar::PointCloud cloud;
  for (const auto& f : expand_lidar_inputs(paths.lidar)) {
    auto part = lidar::read_points(f);
    log("read " + std::to_string(part.size()) + " returns from " + f);
    cloud.points.insert(cloud.points.end(), part.points.begin(), part.points.end());
  }
  const geo::Raster naip = geo::read_raster(paths.naip);
  GroundTruth gt = ground_truth(cloud, naip, options);
  ensure_dir(paths.out_dir);
  const fs::path d(paths.out_dir);
  geo::write_geotiff((d / "tree_mask.tif").string(), gt.tree_mask, geo::SampleType::uint8);
  geo::write_geotiff((d / "pixel_height.tif").string(), gt.pixel_height);
  std::ostringstream tops;
  tops << "id,row,col,x,y,height\n";
  const auto& g = gt.tree_mask.geometry();
  for (const auto& t : gt.tops) {
    tops << t.id << ',' << t.row << ',' << t.col << ',' << nlohmann::json(g.center_x(std::ptrdiff_t(t.col))).dump()
         << ',' << nlohmann::json(g.center_y(std::ptrdiff_t(t.row))).dump() << ',' << nlohmann::json(t.height).dump()
         << '\n';
  }
  write_text(d / "treetops.csv", tops.str());
  return gt;
}

// ---- prepare ------------------------------------------------------------

BandSet parse_band_set(const std::string& text) {
  if (text == "ms" || text == "14") return BandSet::ms;
  if (text == "rgb" || text == "3") return BandSet::rgb;
  throw ConfigError("unknown band set '" + text + "' (expected ms or rgb)");
}

std::size_t band_count(BandSet set) { return set == BandSet::ms ? 14 : 3; }

geo::RasterStack build_stack(const ImagerySources& src, BandSet bands) {
  if (src.naip.bands() != 4) {
    throw InputError("NAIP imagery must have 4 bands (R, G, B, NIR), got " + std::to_string(src.naip.bands()));
  }
  const geo::GridGeometry& g = src.naip.geometry();
  std::vector<geo::Raster> parts;
  std::vector<std::string> roles;
  if (bands == BandSet::rgb) {
    for (std::size_t b = 0; b < 3; ++b) parts.push_back(src.naip.extract_band(b));
    roles = {"naip_red", "naip_green", "naip_blue"};
    return geo::stack(parts, roles);
  }
  if (!src.s2_10m || !src.s2_20m) throw ConfigError("the ms band set needs both Sentinel-2 rasters");
  if (src.s2_10m->bands() != 4) {
    throw InputError("Sentinel-2 10 m raster must have 4 bands, got " + std::to_string(src.s2_10m->bands()));
  }
  if (src.s2_20m->bands() != 6) {
    throw InputError("Sentinel-2 20 m raster must have 6 bands, got " + std::to_string(src.s2_20m->bands()));
  }
  parts.push_back(src.naip);
  parts.push_back(geo::resample_to(*src.s2_10m, g, geo::ResampleMethod::bilinear));
  parts.push_back(geo::resample_to(*src.s2_20m, g, geo::ResampleMethod::bilinear));
  roles = {"naip_red", "naip_green", "naip_blue", "naip_nir", "s2_b2", "s2_b3",  "s2_b4",
           "s2_b8",    "s2_b5",      "s2_b6",     "s2_b7",    "s2_b8a", "s2_b11", "s2_b12"};
  return geo::stack(parts, roles);
}

geo::Raster impervious_from_ndvi(const geo::Raster& naip) {
  const geo::Raster nd = geo::ndvi(naip.extract_band(3), naip.extract_band(0));
  geo::Raster out(nd.geometry(), 1, 0.0f, geo::kMaskNoData);
  for (std::size_t i = 0; i < nd.values().size(); ++i) {
    const float v = nd.values()[i];
    out.values()[i] = nd.is_nodata(v) ? geo::kMaskNoData : (v < 0.0f ? 1.0f : 0.0f);
  }
  return out;
}

Prepared prepare(const geo::RasterStack& stack, const geo::Raster& tree_mask, const geo::Raster& pixel_height,
                 const geo::Raster& aux_mask, const PrepareOptions& opt) {
  if (opt.patch_size == 0) throw ConfigError("patch size must be positive");
  if (stack.bands() != band_count(opt.bands)) {
    throw InputError("stack has " + std::to_string(stack.bands()) + " bands but the band set needs " +
                     std::to_string(band_count(opt.bands)));
  }
  if (!(opt.height_max > 0.0)) throw ConfigError("height_max must be positive");
  geo::TargetLayers targets{tree_mask, geo::normalize_height(pixel_height, opt.height_max), aux_mask};
  const auto windows = geo::extract_patches(stack, targets, opt.patch_size, opt.patch_size);
  if (windows.empty()) {
    throw InputError("raster of " + std::to_string(stack.geometry().width) + " x " +
                     std::to_string(stack.geometry().height) + " pixels holds no " +
                     std::to_string(opt.patch_size) + "-pixel patch");
  }
  Prepared out;
  std::vector<geo::Patch> stat_windows = windows;
  if (opt.test_fraction > 0.0 && windows.size() >= 4) {
    train::DatasetSplit split;
    if (opt.split_block > 0) {
      std::vector<geo::PatchSample> pos(windows.size());
      for (std::size_t i = 0; i < windows.size(); ++i) {
        pos[i].row0 = windows[i].row0;
        pos[i].col0 = windows[i].col0;
      }
      split = train::split_dataset_blocked(pos, opt.split_block, opt.test_fraction, opt.seed);
    } else {
      split = train::split_dataset(windows.size(), opt.test_fraction, opt.seed);
    }
    stat_windows.clear();
    for (std::size_t i : split.train) stat_windows.push_back(windows[i]);
  } else if (opt.test_fraction > 0.0) {
    out.warnings.push_back("fewer than 4 patches: normalisation statistics use every patch");
  }
  out.stats = geo::compute_band_stats(stack, stat_windows, opt.height_max);
  auto norm = geo::normalize(stack, out.stats);
  out.warnings.insert(out.warnings.end(), norm.warnings.begin(), norm.warnings.end());
  out.patches.height = out.patches.width = opt.patch_size;
  out.patches.in_bands = stack.bands();
  for (const auto& w : windows) out.patches.samples.push_back(geo::make_sample(norm.stack, targets, w));
  return out;
}

Prepared cmd_prepare(const PreparePaths& paths, const PrepareOptions& options) {
  if (paths.out.empty()) throw ConfigError("prepare: output path not set");
  ImagerySources src{geo::read_raster(paths.naip), std::nullopt, std::nullopt};
  if (options.bands == BandSet::ms) {
    if (paths.s2_10m.empty() || paths.s2_20m.empty()) {
      throw ConfigError("prepare: --bands ms needs --s2-10m and --s2-20m");
    }
    src.s2_10m = geo::read_raster(paths.s2_10m);
    src.s2_20m = geo::read_raster(paths.s2_20m);
  }
  const geo::RasterStack stack = build_stack(src, options.bands);
  const geo::Raster mask = geo::read_raster(paths.tree_mask);
  const geo::Raster height = geo::read_raster(paths.pixel_height);
  const geo::Raster aux = paths.aux_mask.empty() ? impervious_from_ndvi(src.naip) : geo::read_raster(paths.aux_mask);
  Prepared p = prepare(stack, mask, height, aux, options);
  for (const auto& w : p.warnings) log("prepare: " + w);
  const fs::path out(paths.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path().string());
  geo::write_patches(paths.out, p.patches);
  geo::save_stats(paths.out + ".stats.json", p.stats);
  log("prepare: wrote " + std::to_string(p.patches.samples.size()) + " patches of " +
      std::to_string(p.patches.in_bands) + " bands to " + paths.out);
  return p;
}

// ---- train / eval -------------------------------------------------------

train::TrainResult cmd_train(const TrainPaths& paths, train::TrainConfig config) {
  const geo::PatchSet patches = geo::read_patches(paths.patches);
  if (config.model.in_bands == 0) config.model.in_bands = patches.in_bands;
  ensure_dir(paths.out_dir);
  const fs::path d(paths.out_dir);
  log("train: " + std::to_string(patches.samples.size()) + " patches, " + nn::to_string(config.model.variant) +
      " model, " + std::to_string(config.epochs) + " epochs");
  auto result = train::train(patches, config, [](const train::EpochRecord& r, const nn::UNetModel<float>&) {
    std::ostringstream msg;
    msg << "epoch " << r.epoch << " loss " << r.loss;
    if (r.test.tree_iou) msg << " test tree IoU " << *r.test.tree_iou;
    if (r.test.height_mae) msg << " test height MAE " << *r.test.height_mae;
    if (r.test.aux_iou) msg << " test aux IoU " << *r.test.aux_iou;
    log(msg.str());
    return true;
  });
  nn::save_model((d / "model.cnpm").string(), result.model);
  write_text(d / "history.csv", train::history_csv(result.history));
  write_text(d / "train_config.json", train::train_config_to_json(config) + "\n");
  log("train: best epoch " + std::to_string(result.best_epoch) + ", model written to " + (d / "model.cnpm").string());
  return result;
}

std::vector<eval::MetricsRow> cmd_eval(const std::vector<EvalRun>& runs, const EvalOptions& options,
                                       const std::string& out_dir) {
  if (runs.empty()) throw ConfigError("eval: no models given");
  std::map<std::string, geo::PatchSet> cache;
  std::vector<eval::MetricsRow> rows;
  for (const auto& run : runs) {
    auto it = cache.find(run.patches);
    if (it == cache.end()) it = cache.emplace(run.patches, geo::read_patches(run.patches)).first;
    const geo::PatchSet& patches = it->second;
    const auto model = nn::load_model(run.model);
    std::vector<std::size_t> idx;
    if (options.test_fraction > 0.0 && patches.samples.size() >= 4) {
      idx = train::split_dataset(patches.samples.size(), options.test_fraction, options.seed).test;
    }
    eval::EvalOptions eo;
    eo.masked_mae = options.masked_mae;
    rows.push_back(eval::make_row(model.config(), eval::evaluate(model, patches, idx, eo)));
    log("eval: " + rows.back().model + " / " + rows.back().bands + " scored on " +
        std::to_string(idx.empty() ? patches.samples.size() : idx.size()) + " patches");
  }
  const std::string csv = eval::results_csv(rows);
  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "results.csv", csv);
  write_text(fs::path(out_dir) / "results.md", eval::results_markdown(rows));
  return rows;
}

// ---- predict ------------------------------------------------------------

Prediction predict(const nn::UNetModel<float>& model, const geo::RasterStack& stack,
                   const geo::NormalizationStats& stats, std::size_t patch_size, double threshold) {
  const auto& cfg = model.config();
  if (stack.bands() != cfg.in_bands) {
    throw ShapeError("model expects " + std::to_string(cfg.in_bands) + " bands, stack has " +
                     std::to_string(stack.bands()));
  }
  if (stats.bands.size() != stack.bands()) {
    throw InputError("normalisation statistics cover " + std::to_string(stats.bands.size()) + " bands, stack has " +
                     std::to_string(stack.bands()));
  }
  if (patch_size == 0 || patch_size % (std::size_t{1} << cfg.depth) != 0) {
    throw ConfigError("patch size must be a positive multiple of 2^depth");
  }
  const geo::RasterStack norm = geo::normalize(stack, stats).stack;
  const geo::GridGeometry& g = stack.geometry();
  const std::size_t P = patch_size, C = stack.bands();
  std::vector<geo::Patch> windows;
  for (std::size_t r = 0; r < g.height; r += P) {
    for (std::size_t c = 0; c < g.width; c += P) windows.push_back({r, c, P});
  }
  std::map<nn::Task, geo::Raster> out;
  for (nn::Task t : cfg.tasks) out.emplace(t, geo::Raster(g, 1, 0.0f));

  const std::size_t batch = 4;
  for (std::size_t start = 0; start < windows.size(); start += batch) {
    const std::size_t b = std::min(batch, windows.size() - start);
    nn::Tensor<float> x({b, C, P, P});
    for (std::size_t i = 0; i < b; ++i) {
      const auto& w = windows[start + i];
      for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t r = 0; r < P && w.row0 + r < g.height; ++r) {
          for (std::size_t c = 0; c < P && w.col0 + c < g.width; ++c) {
            const float v = norm.raster.at(ch, w.row0 + r, w.col0 + c);
            x.at(i, ch, r, c) = norm.raster.is_nodata(v) ? 0.0f : v;
          }
        }
      }
    }
    const auto y = model.forward(x);
    for (const auto& [task, tensor] : y) {
      geo::Raster& dst = out.at(task);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& w = windows[start + i];
        for (std::size_t r = 0; r < P && w.row0 + r < g.height; ++r) {
          for (std::size_t c = 0; c < P && w.col0 + c < g.width; ++c) {
            dst.at(w.row0 + r, w.col0 + c) = tensor.at(i, 0, r, c);
          }
        }
      }
    }
  }

  Prediction p;
  if (out.count(nn::Task::tree_mask)) {
    p.tree_prob = out.at(nn::Task::tree_mask);
    geo::Raster mask(g, 1, 0.0f, geo::kMaskNoData);
    for (std::size_t i = 0; i < mask.values().size(); ++i) {
      mask.values()[i] = p.tree_prob->values()[i] >= threshold ? 1.0f : 0.0f;
    }
    p.tree_mask = std::move(mask);
  }
  if (out.count(nn::Task::pixel_height)) p.pixel_height = out.at(nn::Task::pixel_height);
  if (out.count(nn::Task::aux_mask)) p.aux_prob = out.at(nn::Task::aux_mask);
  if (p.tree_mask && p.pixel_height) p.canopy_height = aggregate::canopy_height(*p.tree_mask, *p.pixel_height);
  return p;
}

Prediction cmd_predict(const PredictPaths& paths, std::size_t patch_size, double threshold) {
  const auto model = nn::load_model(paths.model);
  const auto stats = geo::load_stats(paths.stats);
  ImagerySources src{geo::read_raster(paths.naip), std::nullopt, std::nullopt};
  BandSet bands = BandSet::rgb;
  if (model.config().in_bands == 14) {
    bands = BandSet::ms;
    if (paths.s2_10m.empty() || paths.s2_20m.empty()) {
      throw ConfigError("predict: a 14-band model needs --s2-10m and --s2-20m");
    }
    src.s2_10m = geo::read_raster(paths.s2_10m);
    src.s2_20m = geo::read_raster(paths.s2_20m);
  } else if (model.config().in_bands != 3) {
    throw InputError("predict: model has " + std::to_string(model.config().in_bands) +
                     " input bands; only 3 (RGB) and 14 (MS) can be assembled from imagery");
  }
  const Prediction p = predict(model, build_stack(src, bands), stats, patch_size, threshold);
  ensure_dir(paths.out_dir);
  const fs::path d(paths.out_dir);
  if (p.tree_prob) geo::write_geotiff((d / "tree_prob.tif").string(), *p.tree_prob);
  if (p.tree_mask) geo::write_geotiff((d / "tree_mask.tif").string(), *p.tree_mask, geo::SampleType::uint8);
  if (p.pixel_height) geo::write_geotiff((d / "pixel_height.tif").string(), *p.pixel_height);
  if (p.canopy_height) geo::write_geotiff((d / "canopy_height.tif").string(), *p.canopy_height);
  if (p.aux_prob) geo::write_geotiff((d / "aux_prob.tif").string(), *p.aux_prob);
  log("predict: outputs written to " + paths.out_dir);
  return p;
}

// ---- aggregate ----------------------------------------------------------

AggregateResult cmd_aggregate(const AggregatePaths& paths, double height_scale) {
  if (!(height_scale > 0.0)) throw ConfigError("height scale must be positive");
  const geo::Raster mask = geo::read_raster(paths.tree_mask);
  const geo::Raster height = geo::read_raster(paths.height);
  const geo::Raster canopy = aggregate::canopy_height(mask, height);
  AggregateResult r;
  r.citywide_cover = aggregate::citywide_cover(mask);
  auto zones = aggregate::read_zones_geojson(paths.zones);
  r.zone_errors = zones.errors;
  aggregate::ZonalOptions zo;
  zo.height_scale = height_scale;
  r.zones = aggregate::zonal_stats(mask, canopy, zones.zones, zo);
  for (const auto& z : r.zones) {
    if (!z.error.empty()) r.zone_errors.push_back(z.error);
  }
  for (const auto& e : r.zone_errors) log("aggregate: skipped zone: " + e);
  ensure_dir(paths.out_dir);
  const fs::path d(paths.out_dir);
  write_text(d / "zones.csv", aggregate::zone_stats_csv(r.zones));
  nlohmann::json summary;
  summary["citywide_cover"] = r.citywide_cover;
  summary["citywide_cover_text"] = aggregate::format_percent(r.citywide_cover);
  summary["zone_count"] = r.zones.size();
  summary["zone_errors"] = r.zone_errors;
  write_text(d / "summary.json", summary.dump(2) + "\n");
  log("aggregate: city-wide cover " + aggregate::format_percent(r.citywide_cover) + " over " +
      std::to_string(r.zones.size()) + " zone(s)");
  return r;
}

// ---- synth --------------------------------------------------------------

synth::Scene cmd_synth(const synth::SceneOptions& options, const std::string& out_dir) {
  synth::Scene scene = synth::generate_scene(options);
  synth::write_scene(scene, out_dir);
  log("synth: " + std::to_string(scene.trees.size()) + " trees, " + std::to_string(scene.cloud.size()) +
      " returns, planted cover " + aggregate::format_percent(scene.planted_fraction) + " written to " + out_dir);
  return scene;
}

}  // namespace canopy::cli
