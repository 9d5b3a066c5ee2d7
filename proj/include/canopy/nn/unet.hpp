#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "canopy/nn/graph.hpp"
#include "canopy/nn/tensor.hpp"

namespace canopy::nn {

enum class Task { tree_mask, pixel_height, aux_mask };
enum class Variant { fully_shared, partially_shared, single_task };

std::string to_string(Task task);
std::string to_string(Variant variant);
Task parse_task(const std::string& text);
Variant parse_variant(const std::string& text);
// Sigmoid for the two masks, linear for height.
bool is_mask_task(Task task);

struct UNetConfig {
  Variant variant = Variant::fully_shared;
  std::vector<Task> tasks{Task::tree_mask, Task::pixel_height, Task::aux_mask};
  std::size_t in_bands = 14;
  std::size_t depth = 4;
  std::size_t base_channels = 32;

  // Throws ConfigError. Also puts tasks into canonical order.
  void validate();
  bool has_task(Task task) const;
  std::string to_json() const;
  static UNetConfig from_json(const std::string& text);
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> value;
};

template <class T>
class UNetModel {
 public:
  UNetModel() = default;
  // Parameters shaped for config, all zero.
  explicit UNetModel(UNetConfig config);

  const UNetConfig& config() const { return config_; }
  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  const Tensor<T>& parameter(const std::string& name) const;

  template <class U>
  UNetModel<U> cast() const {
    UNetModel<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = params_[i].value.storage();
      auto& dst = out.parameters()[i].value.storage();
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<U>(src[j]);
    }
    return out;
  }

  struct Built {
    std::map<Task, typename Graph<T>::Id> outputs;
    // One graph node per parameter, in declaration order.
    std::vector<typename Graph<T>::Id> params;
  };
  // Records the forward pass of input (a node holding [B, in_bands, H, W])
  // on g. H and W must be divisible by 2^depth.
  Built build(Graph<T>& g, typename Graph<T>::Id input) const;

  // Inference convenience: one [B,1,H,W] tensor per configured task.
  std::map<Task, Tensor<T>> forward(const Tensor<T>& batch, Backend backend = Backend::fast) const;

 private:
  UNetConfig config_;
  std::vector<NamedParameter<T>> params_;
};

// He-normal kernels, zero biases; values are drawn in double so the float
// and double models from one seed agree after rounding.
template <class T>
UNetModel<T> init_params(UNetConfig config, std::uint64_t seed);

// "CNPM1" | version u16 | config length u32 | config JSON | parameters as
// f32 in declaration order.
void save_model(const std::string& path, const UNetModel<float>& model);
UNetModel<float> load_model(const std::string& path);

}  // namespace canopy::nn
