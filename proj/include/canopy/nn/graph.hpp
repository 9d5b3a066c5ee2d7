#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "canopy/error.hpp"
#include "canopy/nn/kernels.hpp"
#include "canopy/nn/tensor.hpp"

namespace canopy::nn {

enum class Backend { fast, reference };

// Reverse-mode tape. Nodes are appended in evaluation order, so a single
// reverse sweep visits every node after all of its consumers.
template <class T>
class Graph {
 public:
  using Id = std::size_t;
  // Called during the reverse sweep with the node's own id; reads
  // grad(self) and accumulates into grad_slot() of its inputs.
  using BackwardFn = std::function<void(Graph&, Id self)>;

  explicit Graph(Backend backend = Backend::fast) : backend_(backend) {
#ifndef NDEBUG
    check_finite_ = true;
#endif
  }

  Backend backend() const { return backend_; }
  // When on, every op verifies its output is finite and throws
  // NumericalError naming the op otherwise. On by default in debug builds.
  void set_finite_check(bool on) { check_finite_ = on; }

  Id constant(Tensor<T> value) { return push("constant", std::move(value), {}, false, nullptr); }

  // The tensor is referenced, not copied; it must outlive the graph.
  Id parameter(const Tensor<T>& value, std::string name = {}) {
    Node n;
    n.op = "parameter";
    n.label = std::move(name);
    n.ref = &value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Id conv2d(Id x, Id w, Id b) {
    Tensor<T> y;
    if (backend_ == Backend::fast) {
      kernels::conv2d_forward(value(x), value(w), value(b), y);
    } else {
      reference::conv2d_forward(value(x), value(w), value(b), y);
    }
    return push("conv2d", std::move(y), {x, w, b}, any_grad({x, w, b}), [](Graph& g, Id self) {
      const auto& in = g.inputs(self);
      Tensor<T>* dw = g.grad_slot(in[1]);
      Tensor<T>* db = g.grad_slot(in[2]);
      Tensor<T> dw_scratch, db_scratch;
      if (!dw) dw = &(dw_scratch = Tensor<T>(g.value(in[1]).shape()));
      if (!db) db = &(db_scratch = Tensor<T>(g.value(in[2]).shape()));
      if (g.backend_ == Backend::fast) {
        kernels::conv2d_backward(g.value(in[0]), g.value(in[1]), g.grad(self), g.grad_slot(in[0]), *dw, *db);
      } else {
        reference::conv2d_backward(g.value(in[0]), g.value(in[1]), g.grad(self), g.grad_slot(in[0]), *dw,
                                   *db);
      }
    });
  }

  Id relu(Id x) {
    Tensor<T> y;
    if (backend_ == Backend::fast) {
      kernels::relu_forward(value(x), y);
    } else {
      reference::relu_forward(value(x), y);
    }
    return push("relu", std::move(y), {x}, any_grad({x}), [](Graph& g, Id self) {
      Tensor<T>* dx = g.grad_slot(g.inputs(self)[0]);
      if (!dx) return;
      if (g.backend_ == Backend::fast) {
        kernels::relu_backward(g.value(self), g.grad(self), *dx);
      } else {
        reference::relu_backward(g.value(self), g.grad(self), *dx);
      }
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> y;
    if (backend_ == Backend::fast) {
      kernels::sigmoid_forward(value(x), y);
    } else {
      reference::sigmoid_forward(value(x), y);
    }
    return push("sigmoid", std::move(y), {x}, any_grad({x}), [](Graph& g, Id self) {
      Tensor<T>* dx = g.grad_slot(g.inputs(self)[0]);
      if (!dx) return;
      if (g.backend_ == Backend::fast) {
        kernels::sigmoid_backward(g.value(self), g.grad(self), *dx);
      } else {
        reference::sigmoid_backward(g.value(self), g.grad(self), *dx);
      }
    });
  }

  // Identity; recorded so the tape names the linear head explicitly.
  Id linear(Id x) {
    return push("linear", Tensor<T>(value(x)), {x}, any_grad({x}), [](Graph& g, Id self) {
      Tensor<T>* dx = g.grad_slot(g.inputs(self)[0]);
      if (!dx) return;
      const Tensor<T>& dy = g.grad(self);
      for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
    });
  }

  Id maxpool2(Id x) {
    Tensor<T> y;
    std::vector<std::uint32_t> argmax;
    if (backend_ == Backend::fast) {
      kernels::maxpool2_forward(value(x), y, argmax);
    } else {
      reference::maxpool2_forward(value(x), y, argmax);
    }
    return push("maxpool2", std::move(y), {x}, any_grad({x}),
                [argmax = std::move(argmax)](Graph& g, Id self) {
                  Tensor<T>* dx = g.grad_slot(g.inputs(self)[0]);
                  if (!dx) return;
                  if (g.backend_ == Backend::fast) {
                    kernels::maxpool2_backward(g.grad(self), argmax, *dx);
                  } else {
                    reference::maxpool2_backward(g.grad(self), argmax, *dx);
                  }
                });
  }

  Id upsample_concat(Id x, Id skip) {
    Tensor<T> y;
    if (backend_ == Backend::fast) {
      kernels::upsample_concat_forward(value(x), value(skip), y);
    } else {
      reference::upsample_concat_forward(value(x), value(skip), y);
    }
    return push("upsample_concat", std::move(y), {x, skip}, any_grad({x, skip}), [](Graph& g, Id self) {
      const auto& in = g.inputs(self);
      if (g.backend_ == Backend::fast) {
        kernels::upsample_concat_backward(g.grad(self), g.grad_slot(in[0]), g.grad_slot(in[1]));
      } else {
        reference::upsample_concat_backward(g.grad(self), g.grad_slot(in[0]), g.grad_slot(in[1]));
      }
    });
  }

  // Weighted sum of scalar nodes.
  Id weighted_sum(const std::vector<Id>& terms, const std::vector<T>& weights) {
    if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms and weights differ in length");
    T total{0};
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (value(terms[i]).size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
      total += weights[i] * value(terms[i])[0];
    }
    return push("weighted_sum", Tensor<T>(Shape{1}, total), terms, any_grad(terms),
                [weights](Graph& g, Id self) {
                  const T dy = g.grad(self)[0];
                  const auto& in = g.inputs(self);
                  for (std::size_t i = 0; i < in.size(); ++i) {
                    if (Tensor<T>* d = g.grad_slot(in[i])) (*d)[0] += weights[i] * dy;
                  }
                });
  }

  // Extension point for ops defined outside this header (losses).
  Id custom(std::string op, Tensor<T> value, std::vector<Id> inputs, BackwardFn backward) {
    const bool rg = any_grad(inputs);
    return push(std::move(op), std::move(value), std::move(inputs), rg, std::move(backward));
  }

  const Tensor<T>& value(Id id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : n.value;
  }
  // Zero-size tensor until backward has reached the node.
  const Tensor<T>& grad(Id id) const { return nodes_.at(id).grad; }
  // Gradient accumulator of a node, allocated on first use; null for
  // nodes that do not lead back to any parameter.
  Tensor<T>* grad_slot(Id id) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.shape() != value(id).shape()) n.grad = Tensor<T>(value(id).shape());
    return &n.grad;
  }
  bool requires_grad(Id id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(Id id) const { return nodes_.at(id).op; }
  const std::string& label(Id id) const { return nodes_.at(id).label; }
  const std::vector<Id>& inputs(Id id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Id root) {
    if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar");
    for (Node& n : nodes_) n.grad = Tensor<T>();
    Tensor<T>* seed = grad_slot(root);
    if (!seed) return;
    (*seed)[0] = T{1};
    for (Id id = root + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
      // Intermediate gradients are not needed once propagated.
      if (!n.inputs.empty()) n.grad = Tensor<T>();
    }
  }

 private:
  struct Node {
    std::string op;
    std::string label;
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    std::vector<Id> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool any_grad(const std::vector<Id>& ids) const {
    for (Id id : ids) {
      if (nodes_.at(id).requires_grad) return true;
    }
    return false;
  }

  Id push(std::string op, Tensor<T> value, std::vector<Id> inputs, bool requires_grad, BackwardFn backward) {
    if (check_finite_) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!std::isfinite(value[i])) throw NumericalError(op + ": non-finite value in output");
      }
    }
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Backend backend_;
  bool check_finite_ = false;
  std::vector<Node> nodes_;
};

}  // namespace canopy::nn
