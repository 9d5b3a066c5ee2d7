#include "canopy/nn/unet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "canopy/binary_io.hpp"

namespace canopy::nn {

std::string to_string(Task task) {
  switch (task) {
    case Task::tree_mask: return "tree_mask";
    case Task::pixel_height: return "pixel_height";
    case Task::aux_mask: return "aux_mask";
  }
  return "?";
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::fully_shared: return "fully_shared";
    case Variant::partially_shared: return "partially_shared";
    case Variant::single_task: return "single_task";
  }
  return "?";
}

Task parse_task(const std::string& text) {
  for (Task t : {Task::tree_mask, Task::pixel_height, Task::aux_mask}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown task '" + text + "' (expected tree_mask, pixel_height or aux_mask)");
}

Variant parse_variant(const std::string& text) {
  for (Variant v : {Variant::fully_shared, Variant::partially_shared, Variant::single_task}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown variant '" + text + "' (expected fully_shared, partially_shared or single_task)");
}

bool is_mask_task(Task task) { return task != Task::pixel_height; }

void UNetConfig::validate() {
  if (tasks.empty()) throw ConfigError("model needs at least one task");
  std::sort(tasks.begin(), tasks.end());
  if (std::adjacent_find(tasks.begin(), tasks.end()) != tasks.end()) {
    throw ConfigError("model task list repeats a task");
  }
  if (variant == Variant::single_task && tasks.size() != 1) {
    throw ConfigError("single_task variant needs exactly one task, got " + std::to_string(tasks.size()));
  }
  if (in_bands == 0) throw ConfigError("in_bands must be positive");
  if (depth == 0 || depth > 8) throw ConfigError("depth must be in [1, 8]");
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
}

bool UNetConfig::has_task(Task task) const {
  return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

std::string UNetConfig::to_json() const {
  nlohmann::json j;
  j["variant"] = to_string(variant);
  auto& t = j["tasks"] = nlohmann::json::array();
  for (Task task : tasks) t.push_back(to_string(task));
  j["in_bands"] = in_bands;
  j["depth"] = depth;
  j["base_channels"] = base_channels;
  return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
  UNetConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.tasks.clear();
    for (const auto& t : j.at("tasks")) c.tasks.push_back(parse_task(t.get<std::string>()));
    c.in_bands = j.at("in_bands").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
};

std::size_t channels(const UNetConfig& c, std::size_t level) { return c.base_channels << level; }

void add_block(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t cin, std::size_t cout) {
  out.push_back({prefix + ".conv1.weight", {cout, cin, 3, 3}});
  out.push_back({prefix + ".conv1.bias", {cout}});
  out.push_back({prefix + ".conv2.weight", {cout, cout, 3, 3}});
  out.push_back({prefix + ".conv2.bias", {cout}});
}

std::vector<std::string> decoder_prefixes(const UNetConfig& c) {
  if (c.variant != Variant::partially_shared) return {"dec"};
  std::vector<std::string> out;
  for (Task t : c.tasks) out.push_back("dec." + to_string(t) + ".");
  return out;
}

std::string decoder_for(const UNetConfig& c, Task t) {
  return c.variant == Variant::partially_shared ? "dec." + to_string(t) + "." : "dec";
}

std::vector<ParamSpec> layout(const UNetConfig& c) {
  std::vector<ParamSpec> out;
  for (std::size_t l = 0; l < c.depth; ++l) {
    add_block(out, "enc" + std::to_string(l), l == 0 ? c.in_bands : channels(c, l - 1), channels(c, l));
  }
  add_block(out, "bottleneck", channels(c, c.depth - 1), channels(c, c.depth));
  for (const auto& prefix : decoder_prefixes(c)) {
    for (std::size_t l = c.depth; l-- > 0;) {
      add_block(out, prefix + std::to_string(l), channels(c, l + 1) + channels(c, l), channels(c, l));
    }
  }
  for (Task t : c.tasks) {
    out.push_back({"head." + to_string(t) + ".weight", {1, channels(c, 0), 1, 1}});
    out.push_back({"head." + to_string(t) + ".bias", {1}});
  }
  return out;
}

}  // namespace

template <class T>
UNetModel<T>::UNetModel(UNetConfig config) : config_(std::move(config)) {
  config_.validate();
  for (auto& spec : layout(config_)) params_.push_back({spec.name, Tensor<T>(spec.shape)});
}

template <class T>
std::size_t UNetModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
const Tensor<T>& UNetModel<T>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("model has no parameter '" + name + "'");
}

template <class T>
typename UNetModel<T>::Built UNetModel<T>::build(Graph<T>& g, typename Graph<T>::Id input) const {
  using Id = typename Graph<T>::Id;
  const Tensor<T>& x = g.value(input);
  require_rank4(x, "UNet input");
  if (x.dim(1) != config_.in_bands) {
    throw ShapeError("model expects " + std::to_string(config_.in_bands) + " input bands, got " +
                     std::to_string(x.dim(1)));
  }
  const std::size_t align = std::size_t{1} << config_.depth;
  if (x.dim(2) % align != 0 || x.dim(3) % align != 0) {
    throw ShapeError("input spatial size " + to_string(x.shape()) + " is not divisible by " +
                     std::to_string(align));
  }

  Built built;
  std::map<std::string, Id> by_name;
  for (const auto& p : params_) {
    const Id id = g.parameter(p.value, p.name);
    built.params.push_back(id);
    by_name.emplace(p.name, id);
  }
  auto conv = [&](Id in, const std::string& layer) {
    return g.conv2d(in, by_name.at(layer + ".weight"), by_name.at(layer + ".bias"));
  };
  auto block = [&](Id in, const std::string& prefix) {
    return g.relu(conv(g.relu(conv(in, prefix + ".conv1")), prefix + ".conv2"));
  };

  std::vector<Id> skips;
  Id h = input;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    h = block(h, "enc" + std::to_string(l));
    skips.push_back(h);
    h = g.maxpool2(h);
  }
  const Id bottom = block(h, "bottleneck");

  std::map<std::string, Id> decoded;
  for (const auto& prefix : decoder_prefixes(config_)) {
    Id d = bottom;
    for (std::size_t l = config_.depth; l-- > 0;) {
      d = block(g.upsample_concat(d, skips[l]), prefix + std::to_string(l));
    }
    decoded.emplace(prefix, d);
  }
  for (Task t : config_.tasks) {
    const Id logits = conv(decoded.at(decoder_for(config_, t)), "head." + to_string(t));
    built.outputs.emplace(t, is_mask_task(t) ? g.sigmoid(logits) : g.linear(logits));
  }
  return built;
}

template <class T>
std::map<Task, Tensor<T>> UNetModel<T>::forward(const Tensor<T>& batch, Backend backend) const {
  Graph<T> g(backend);
  const auto built = build(g, g.constant(batch));
  std::map<Task, Tensor<T>> out;
  for (const auto& [task, id] : built.outputs) out.emplace(task, g.value(id));
  return out;
}

template <class T>
UNetModel<T> init_params(UNetConfig config, std::uint64_t seed) {
  UNetModel<T> model(std::move(config));
  std::mt19937_64 rng(seed);
  for (auto& p : model.parameters()) {
    if (p.value.rank() != 4) continue;  // biases stay zero
    const double fan_in = double(p.value.dim(1) * p.value.dim(2) * p.value.dim(3));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p.value.storage()) v = static_cast<T>(dist(rng));
  }
  return model;
}

template class UNetModel<float>;
template class UNetModel<double>;
template UNetModel<float> init_params<float>(UNetConfig, std::uint64_t);
template UNetModel<double> init_params<double>(UNetConfig, std::uint64_t);

namespace {
constexpr char kModelMagic[5] = {'C', 'N', 'P', 'M', '1'};
constexpr std::uint16_t kModelVersion = 1;
}  // namespace

void save_model(const std::string& path, const UNetModel<float>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kModelMagic, sizeof kModelMagic);
  binio::write_pod(out, kModelVersion);
  const std::string cfg = model.config().to_json();
  binio::write_pod(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), std::streamsize(cfg.size()));
  for (const auto& p : model.parameters()) binio::write_floats(out, p.value.storage());
  if (!out) throw IoError("failed writing " + path);
}

UNetModel<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  binio::expect_magic(in, std::string_view(kModelMagic, sizeof kModelMagic), path);
  const auto version = binio::read_pod<std::uint16_t>(in, path);
  if (version != kModelVersion) {
    throw IoError(path + ": unsupported model version " + std::to_string(version));
  }
  const auto len = binio::read_pod<std::uint32_t>(in, path);
  if (len > (1u << 20)) throw IoError(path + ": implausible config block length");
  std::string cfg(len, '\0');
  in.read(cfg.data(), len);
  if (!in) throw IoError(path + ": truncated config block");
  UNetModel<float> model(UNetConfig::from_json(cfg));
  for (auto& p : model.parameters()) binio::read_floats(in, p.value.storage(), path);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after parameters");
  return model;
}

}  // namespace canopy::nn
