#include <cmath>

#include "canopy/train/train.hpp"

namespace canopy::train {

double LossWeights::of(Task task) const {
  switch (task) {
    case Task::tree_mask: return tree;
    case Task::pixel_height: return height;
    case Task::aux_mask: return aux;
  }
  return 0.0;
}

void LossWeights::validate() const {
  for (double w : {tree, height, aux}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (tree == 0.0 && height == 0.0 && aux == 0.0) throw ConfigError("at least one loss weight must be positive");
}

template <class T>
typename Graph<T>::Id mse_loss(Graph<T>& g, typename Graph<T>::Id pred, const Tensor<T>& target) {
  require_same_shape(g.value(pred), target, "mse_loss");
  const Tensor<T>& p = g.value(pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(target[i]);
    sum += d * d;
  }
  const double n = double(p.size());
  return g.custom("mse_loss", Tensor<T>(nn::Shape{1}, T(sum / n)), {pred},
                  [&target, n](Graph<T>& gr, typename Graph<T>::Id self) {
                    const auto in = gr.inputs(self)[0];
                    Tensor<T>* dp = gr.grad_slot(in);
                    if (!dp) return;
                    const Tensor<T>& pv = gr.value(in);
                    const T scale = T(2.0 * double(gr.grad(self)[0]) / n);
                    for (std::size_t i = 0; i < pv.size(); ++i) (*dp)[i] += scale * (pv[i] - target[i]);
                  });
}

template <class T>
typename Graph<T>::Id jaccard_loss(Graph<T>& g, typename Graph<T>::Id pred, const Tensor<T>& target, T smooth) {
  require_same_shape(g.value(pred), target, "jaccard_loss");
  if (!(smooth > T{0})) throw ConfigError("jaccard_loss: smooth must be positive");
  const Tensor<T>& p = g.value(pred);
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += double(p[i]) * double(target[i]);
    sp += double(p[i]);
    sy += double(target[i]);
  }
  const double s = double(smooth);
  const double num = inter + s;
  const double den = sp + sy - inter + s;
  return g.custom("jaccard_loss", Tensor<T>(nn::Shape{1}, T(1.0 - num / den)), {pred},
                  [&target, num, den](Graph<T>& gr, typename Graph<T>::Id self) {
                    const auto in = gr.inputs(self)[0];
                    Tensor<T>* dp = gr.grad_slot(in);
                    if (!dp) return;
                    // d/dp_i of -(I + s)/U with dI/dp_i = y_i, dU/dp_i = 1 - y_i.
                    const double up = double(gr.grad(self)[0]);
                    const double den2 = den * den;
                    for (std::size_t i = 0; i < dp->size(); ++i) {
                      const double y = double(target[i]);
                      (*dp)[i] += T(up * -(y * den - num * (1.0 - y)) / den2);
                    }
                  });
}

template <class T>
typename Graph<T>::Id multitask_loss(Graph<T>& g, const std::map<Task, typename Graph<T>::Id>& outputs,
                                     const std::map<Task, const Tensor<T>*>& targets, const LossWeights& weights,
                                     std::map<Task, typename Graph<T>::Id>* per_task, T smooth) {
  weights.validate();
  std::vector<typename Graph<T>::Id> terms;
  std::vector<T> w;
  for (const auto& [task, id] : outputs) {
    auto it = targets.find(task);
    if (it == targets.end() || !it->second) {
      throw InputError("multitask_loss: no target for task " + nn::to_string(task));
    }
    const auto term = nn::is_mask_task(task) ? jaccard_loss(g, id, *it->second, smooth) : mse_loss(g, id, *it->second);
    if (per_task) (*per_task)[task] = term;
    terms.push_back(term);
    w.push_back(T(weights.of(task)));
  }
  return g.weighted_sum(terms, w);
}

template <class T>
AdamState<T>::AdamState(const std::vector<nn::NamedParameter<T>>& params, AdamHyper h) : hyper(h) {
  for (const auto& p : params) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
}

template <class T>
void adam_step(std::vector<nn::NamedParameter<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k].value, grads[k], "adam_step");
    for (T gval : grads[k].storage()) {
      if (!std::isfinite(gval)) throw NumericalError("non-finite gradient for parameter " + params[k].name);
    }
  }
  const AdamHyper& h = state.hyper;
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, double(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, double(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].value.storage();
    auto& m = state.m[k].storage();
    auto& v = state.v[k].storage();
    const auto& g = grads[k].storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = double(g[i]);
      const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * gi * gi;
      m[i] = T(mi);
      v[i] = T(vi);
      w[i] = T(double(w[i]) - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps));
    }
  }
}

#define CANOPY_INSTANTIATE(T)                                                                                 \
  template typename Graph<T>::Id mse_loss<T>(Graph<T>&, typename Graph<T>::Id, const Tensor<T>&);             \
  template typename Graph<T>::Id jaccard_loss<T>(Graph<T>&, typename Graph<T>::Id, const Tensor<T>&, T);      \
  template typename Graph<T>::Id multitask_loss<T>(Graph<T>&, const std::map<Task, typename Graph<T>::Id>&,   \
                                                   const std::map<Task, const Tensor<T>*>&, const LossWeights&, \
                                                   std::map<Task, typename Graph<T>::Id>*, T);                 \
  template struct AdamState<T>;                                                                               \
  template void adam_step<T>(std::vector<nn::NamedParameter<T>>&, const std::vector<Tensor<T>>&, AdamState<T>&);

CANOPY_INSTANTIATE(float)
CANOPY_INSTANTIATE(double)

}  // namespace canopy::train
