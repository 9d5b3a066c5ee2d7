#include "canopy/train/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace canopy::train {

DatasetSplit split_dataset(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1), got " + std::to_string(test_fraction));
  }
  if (n < 4) throw InputError("split_dataset needs at least 4 samples, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(n)));
  DatasetSplit s;
  s.seed = seed;
  s.test.assign(order.begin(), order.begin() + std::ptrdiff_t(n_test));
  s.train.assign(order.begin() + std::ptrdiff_t(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

DatasetSplit split_dataset_blocked(std::span<const geo::PatchSample> samples, std::size_t block_size,
                                   double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1), got " + std::to_string(test_fraction));
  }
  if (block_size == 0) throw ConfigError("split block size must be positive");
  const std::size_t n = samples.size();
  if (n < 4) throw InputError("split_dataset needs at least 4 samples, got " + std::to_string(n));
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    groups[{samples[i].row0 / block_size, samples[i].col0 / block_size}].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : groups) order.push_back(&members);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(n)));
  DatasetSplit s;
  s.seed = seed;
  for (const auto* members : order) {
    auto& side = s.test.size() < n_test ? s.test : s.train;
    side.insert(side.end(), members->begin(), members->end());
  }
  if (s.train.empty()) throw InputError("blocked split left no training patches; use a smaller block size");
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void TrainConfig::validate() const {
  nn::UNetConfig m = model;
  m.validate();
  if (m.tasks != model.tasks) throw ConfigError("model tasks must be listed once each, in canonical order");
  weights.validate();
  bool any = false;
  for (Task t : model.tasks) any = any || weights.of(t) > 0.0;
  if (!any) throw ConfigError("every configured task has loss weight 0");
  if (!(adam.lr >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  if (!(jaccard_smooth > 0.0)) throw ConfigError("jaccard smoothing must be positive");
}

namespace {

// Higher is better. Tree IoU when the model has that head, otherwise aux
// IoU, otherwise negated height MAE.
std::optional<double> checkpoint_score(const eval::Metrics& m) {
  if (m.tree_iou) return *m.tree_iou;
  if (m.aux_iou) return *m.aux_iou;
  if (m.height_mae) return -*m.height_mae;
  return std::nullopt;
}

struct Batch {
  Tensor<float> input;
  std::map<Task, Tensor<float>> targets;
};

Batch make_batch(const geo::PatchSet& patches, std::span<const std::size_t> idx) {
  const std::size_t b = idx.size(), plane = patches.plane();
  Batch out;
  out.input = Tensor<float>({b, patches.in_bands, patches.height, patches.width});
  for (Task t : {Task::tree_mask, Task::pixel_height, Task::aux_mask}) {
    out.targets.emplace(t, Tensor<float>({b, 1, patches.height, patches.width}));
  }
  for (std::size_t i = 0; i < b; ++i) {
    const auto& s = patches.samples.at(idx[i]);
    std::copy(s.input.begin(), s.input.end(), out.input.data() + i * s.input.size());
    std::copy(s.tree_mask.begin(), s.tree_mask.end(), out.targets[Task::tree_mask].data() + i * plane);
    std::copy(s.height.begin(), s.height.end(), out.targets[Task::pixel_height].data() + i * plane);
    std::copy(s.aux_mask.begin(), s.aux_mask.end(), out.targets[Task::aux_mask].data() + i * plane);
  }
  return out;
}

}  // namespace

TrainResult train(const geo::PatchSet& patches, const TrainConfig& config, const EpochObserver& observer) {
  config.validate();
  if (patches.samples.empty()) throw InputError("training needs at least one patch");
  if (patches.in_bands != config.model.in_bands) {
    throw ShapeError("patches carry " + std::to_string(patches.in_bands) + " bands, model expects " +
                     std::to_string(config.model.in_bands));
  }

#ifdef __GLIBC__
  // Activations are large and short-lived. Keep freed blocks in the heap so
  // every step does not pay for fresh zero pages from the kernel.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

  TrainResult result;
  if (config.test_fraction > 0.0) {
    result.split = config.split_block > 0
                       ? split_dataset_blocked(patches.samples, config.split_block, config.test_fraction, config.seed)
                       : split_dataset(patches.samples.size(), config.test_fraction, config.seed);
  } else {
    result.split.seed = config.seed;
    result.split.train.resize(patches.samples.size());
    std::iota(result.split.train.begin(), result.split.train.end(), std::size_t{0});
  }
  if (result.split.train.empty()) throw InputError("split left no training patches");

  nn::UNetModel<float> model = nn::init_params<float>(config.model, config.seed);
  result.model = model;
  AdamState<float> adam(model.parameters(), config.adam);
  std::optional<double> best;
  const std::size_t plane = patches.plane();
  const auto& tasks = config.model.tasks;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = result.split.train;
    std::seed_seq seq{std::uint64_t(config.seed & 0xffffffffu), std::uint64_t(config.seed >> 32),
                      std::uint64_t(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    std::map<Task, double> loss_sum;
    double total_sum = 0.0;
    std::map<Task, double> metric_sum;
    for (std::size_t start = 0, bi = 0; start < order.size(); start += config.batch, ++bi) {
      const std::size_t b = std::min(config.batch, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, b);
      const Batch batch = make_batch(patches, idx);

      Graph<float> g;
      const auto built = model.build(g, g.constant(batch.input));
      std::map<Task, const Tensor<float>*> targets;
      for (const auto& [t, tensor] : batch.targets) targets[t] = &tensor;
      std::map<Task, Graph<float>::Id> per_task;
      const auto loss = multitask_loss(g, built.outputs, targets, config.weights, &per_task,
                                       float(config.jaccard_smooth));
      const double lv = g.value(loss)[0];
      if (!std::isfinite(lv)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      total_sum += lv * double(b);
      for (const auto& [t, id] : per_task) loss_sum[t] += double(g.value(id)[0]) * double(b);

      // Per-patch training metrics from the same forward pass.
      for (const auto& [t, id] : built.outputs) {
        const Tensor<float>& out = g.value(id);
        const Tensor<float>& truth = batch.targets.at(t);
        for (std::size_t i = 0; i < b; ++i) {
          const std::span<const float> p(out.data() + i * plane, plane), y(truth.data() + i * plane, plane);
          metric_sum[t] += nn::is_mask_task(t) ? eval::iou(p, y) : eval::mae(p, y);
        }
      }

      g.backward(loss);
      std::vector<Tensor<float>> grads;
      grads.reserve(built.params.size());
      for (auto id : built.params) {
        const Tensor<float>& gr = g.grad(id);
        grads.push_back(gr.empty() ? Tensor<float>(g.value(id).shape()) : gr);
      }
      adam_step(model.parameters(), grads, adam);
    }

    const double n = double(order.size());
    rec.loss = total_sum / n;
    for (Task t : tasks) {
      const double l = loss_sum[t] / n, m = metric_sum[t] / n;
      switch (t) {
        case Task::tree_mask: rec.tree_loss = l; rec.train.tree_iou = m; break;
        case Task::pixel_height: rec.height_loss = l; rec.train.height_mae = m; break;
        case Task::aux_mask: rec.aux_loss = l; rec.train.aux_iou = m; break;
      }
    }
    if (!result.split.test.empty()) {
      eval::EvalOptions opts;
      opts.batch = config.batch;
      rec.test = eval::evaluate(model, patches, result.split.test, opts);
    }
    const auto score = checkpoint_score(result.split.test.empty() ? rec.train : rec.test);
    if (score && (!best || *score > *best)) {
      best = score;
      result.model = model;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (observer && !observer(rec, model)) break;
  }
  result.last_model = std::move(model);
  return result;
}

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,loss,tree_loss,height_loss,aux_loss,train_tree_iou,train_height_mae,train_aux_iou,"
         "test_tree_iou,test_height_mae,test_aux_iou\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << num(r.loss) << ',' << num(r.tree_loss) << ',' << num(r.height_loss) << ','
        << num(r.aux_loss) << ',' << num(r.train.tree_iou) << ',' << num(r.train.height_mae) << ','
        << num(r.train.aux_iou) << ',' << num(r.test.tree_iou) << ',' << num(r.test.height_mae) << ','
        << num(r.test.aux_iou) << '\n';
  }
  return out.str();
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  static const std::set<std::string> known{"model", "weights", "lr",   "beta1",          "beta2",       "eps",
                                           "batch", "epochs",  "seed", "test_fraction", "split_block",
                                           "jaccard_smooth"};
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown training config key '" + key + "'");
    }
    if (j.contains("model")) {
      nlohmann::json m = {{"variant", "fully_shared"},
                          {"tasks", {"tree_mask", "pixel_height", "aux_mask"}},
                          {"in_bands", 14},
                          {"depth", 4},
                          {"base_channels", 32}};
      m.update(j.at("model"));
      c.model = nn::UNetConfig::from_json(m.dump());
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.tree = w.value("tree", c.weights.tree);
      c.weights.height = w.value("height", c.weights.height);
      c.weights.aux = w.value("aux", c.weights.aux);
    }
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.split_block = j.value("split_block", c.split_block);
    c.jaccard_smooth = j.value("jaccard_smooth", c.jaccard_smooth);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(c.model.to_json());
  j["weights"] = {{"tree", c.weights.tree}, {"height", c.weights.height}, {"aux", c.weights.aux}};
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["batch"] = c.batch;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["test_fraction"] = c.test_fraction;
  j["split_block"] = c.split_block;
  j["jaccard_smooth"] = c.jaccard_smooth;
  return j.dump(2);
}

}  // namespace canopy::train
