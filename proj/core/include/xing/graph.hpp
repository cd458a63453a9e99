#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xing/tensor.hpp"

namespace xing {

/// Learned weight with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;  // same length as value, zero-initialized

  Parameter(std::string n, Tensor v);
  Tensor grad_tensor() const { return Tensor(value.shape(), grad); }
  void zero_grad();
  /// Replace the value; the old storage stays valid for tensors that still hold it.
  void assign(std::vector<double> data);
};

/// Owns parameters with stable addresses and unique names.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose names start with `prefix`, in insertion order.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::map<std::string, Parameter*> index_;
};

namespace detail {

class GradAccess;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradAccess& access)>;

struct Node {
  const char* op = "";
  std::vector<int> parents;  // -1 marks an untracked input
  std::size_t numel = 0;
  BackwardFn backward;
  Parameter* param = nullptr;
};

/// Append-only operation record. Parents always precede their children.
class Tape {
 public:
  int add(Node node);
  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }

  void run_backward(int loss_node);
  bool has_grad(int id) const { return !grads_[id].empty(); }
  std::span<const double> grad(int id) const { return grads_[id]; }
  std::span<double> grad_buffer(int id);

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

/// Handle a backward closure uses to reach the gradient buffers of its inputs.
class GradAccess {
 public:
  GradAccess(Tape& tape, const Node& node) : tape_(tape), node_(node) {}
  bool wants(std::size_t input) const { return node_.parents[input] >= 0; }
  std::span<double> grad(std::size_t input) { return tape_.grad_buffer(node_.parents[input]); }

 private:
  Tape& tape_;
  const Node& node_;
};

/// Record an op result. Inputs that are not tracked get parent id -1; if no
/// input is tracked the result is a plain value and `fn` is dropped.
Tensor record(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn);
Tensor record(const char* op, Shape shape, std::vector<double> values,
              const std::vector<const Tensor*>& inputs, BackwardFn fn);

}  // namespace detail

/// Reverse-mode tape. Rebuilt for every forward pass.
class Graph {
 public:
  Graph();

  /// Leaf whose gradient is kept inside the graph (see `grad`).
  Tensor variable(const Tensor& value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Tensor param(Parameter& p);

  /// Accumulates (+=) parameter gradients. May be called repeatedly.
  void backward(const Tensor& loss);
  Tensor grad(const Tensor& leaf) const;

  std::size_t size() const { return tape_->size(); }

 private:
  std::shared_ptr<detail::Tape> tape_;
  std::map<Parameter*, Tensor> bound_;
};

/// How a forward pass obtains parameter tensors: tracked on a graph, or as
/// constants (inference, frozen networks, the opposing GAN player).
class Bind {
 public:
  Bind() = default;
  explicit Bind(Graph* graph) : graph_(graph) {}
  static Bind frozen() { return Bind(); }

  Tensor operator()(Parameter& p) const { return graph_ ? graph_->param(p) : p.value; }
  Tensor operator()(Parameter* p) const { return (*this)(*p); }
  Graph* graph() const { return graph_; }

 private:
  Graph* graph_ = nullptr;
};

}  // namespace xing
