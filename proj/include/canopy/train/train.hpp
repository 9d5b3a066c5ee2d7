#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canopy/eval/metrics.hpp"
#include "canopy/geo/patch_io.hpp"
#include "canopy/nn/graph.hpp"
#include "canopy/nn/unet.hpp"

namespace canopy::train {

using nn::Graph;
using nn::Task;
using nn::Tensor;

struct LossWeights {
  double tree = 1.0;
  double height = 0.5;
  double aux = 0.25;

  double of(Task task) const;
  // Throws ConfigError for a negative weight or all weights zero.
  void validate() const;
};

// Loss nodes keep a reference to target; it must outlive g.backward().

// Mean of squared differences over every element. Returns a scalar node.
template <class T>
typename Graph<T>::Id mse_loss(Graph<T>& g, typename Graph<T>::Id pred, const Tensor<T>& target);

// 1 - (sum p*y + s) / (sum p + sum y - sum p*y + s), sums over every element.
template <class T>
typename Graph<T>::Id jaccard_loss(Graph<T>& g, typename Graph<T>::Id pred, const Tensor<T>& target,
                                   T smooth = T{1});

// Weighted sum of per-task losses over the tasks present in outputs.
// Tasks missing from targets throw; tasks missing from outputs add 0.
// per_task, when given, receives each task's unweighted loss node.
template <class T>
typename Graph<T>::Id multitask_loss(Graph<T>& g, const std::map<Task, typename Graph<T>::Id>& outputs,
                                     const std::map<Task, const Tensor<T>*>& targets, const LossWeights& weights,
                                     std::map<Task, typename Graph<T>::Id>* per_task = nullptr,
                                     T smooth = T{1});

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(const std::vector<nn::NamedParameter<T>>& params, AdamHyper h);
};

// Bias-corrected Adam update of every parameter. A non-finite gradient
// throws NumericalError naming the parameter; nothing is updated then.
template <class T>
void adam_step(std::vector<nn::NamedParameter<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Uniform random partition with round(test_fraction * n) test indices.
// Both index lists come back sorted.
DatasetSplit split_dataset(std::size_t n, double test_fraction, std::uint64_t seed);

// Spatially blocked variant: patches are grouped by the block_size x
// block_size cell of their window origin and whole groups are assigned to
// the test side, in shuffled order, until it holds at least
// round(test_fraction * n) patches. Keeps neighbouring windows from
// straddling the split.
DatasetSplit split_dataset_blocked(std::span<const geo::PatchSample> samples, std::size_t block_size,
                                   double test_fraction, std::uint64_t seed);

struct TrainConfig {
  nn::UNetConfig model;
  LossWeights weights;
  AdamHyper adam;
  std::size_t batch = 4;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  // 0 disables the holdout: every patch trains and checkpoints are chosen
  // on training metrics.
  double test_fraction = 0.25;
  // Nonzero selects split_dataset_blocked with this block size in pixels.
  std::size_t split_block = 0;
  double jaccard_smooth = 1.0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> tree_loss, height_loss, aux_loss;
  // Metrics on the training batches as seen during the epoch.
  eval::Metrics train;
  // Metrics on the holdout after the epoch; empty without a holdout.
  eval::Metrics test;
};

struct TrainResult {
  nn::UNetModel<float> model;       // best checkpoint
  nn::UNetModel<float> last_model;  // after the final epoch
  std::vector<EpochRecord> history;
  DatasetSplit split;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

// Called after every epoch; returning false stops training.
using EpochObserver = std::function<bool(const EpochRecord&, const nn::UNetModel<float>&)>;

TrainResult train(const geo::PatchSet& patches, const TrainConfig& config, const EpochObserver& observer = {});

std::string history_csv(const std::vector<EpochRecord>& history);

// Accepts the keys of TrainConfig (model nested as an object) and fills
// unspecified ones with defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

}  // namespace canopy::train
