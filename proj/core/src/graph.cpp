#include "xing/graph.hpp"

#include <algorithm>

namespace xing {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(v.detach()), grad(value.numel(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Parameter::assign(std::vector<double> data) {
  value = Tensor(value.shape(), std::move(data));
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  auto& p = params_.emplace_back(name, std::move(value));
  index_[name] = &p;
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return *it->second;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  }
  return out;
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace detail {

int Tape::add(Node node) {
  for (int parent : node.parents) {
    if (parent >= static_cast<int>(nodes_.size())) {
      throw ContractError("tape parent must precede child");
    }
  }
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

std::span<double> Tape::grad_buffer(int id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].numel, 0.0);
  return g;
}

void Tape::run_backward(int loss_node) {
  for (auto& g : grads_) {
    g.clear();
    g.shrink_to_fit();
  }
  grad_buffer(loss_node)[0] = 1.0;
  for (int id = loss_node; id >= 0; --id) {
    if (grads_[id].empty()) continue;
    const Node& node = nodes_[id];
    if (node.param != nullptr) {
      auto& dst = node.param->grad;
      const auto& src = grads_[id];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (node.backward) {
      GradAccess access(*this, node);
      node.backward(grads_[id], access);
      // Interior gradients are no longer needed once propagated.
      if (!node.parents.empty()) {
        grads_[id].clear();
        grads_[id].shrink_to_fit();
      }
    }
  }
}

Tensor record(const char* op, Shape shape, std::vector<double> values,
              const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  std::shared_ptr<Tape> tape;
  for (const Tensor* in : inputs) {
    if (in != nullptr && in->requires_grad()) {
      if (!tape) {
        tape = in->tape();
      } else if (tape != in->tape()) {
        throw ContractError(std::string(op) + ": inputs recorded on different graphs");
      }
    }
  }
  Tensor out(std::move(shape), std::move(values));
  if (!tape) return out;
  Node node;
  node.op = op;
  node.numel = out.numel();
  node.parents.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    node.parents.push_back(in != nullptr && in->requires_grad() ? in->node() : -1);
  }
  node.backward = std::move(fn);
  const int id = tape->add(std::move(node));
  return out.with_node(tape, id);
}

Tensor record(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return record(op, std::move(shape), std::move(values), std::vector<const Tensor*>(inputs),
                std::move(fn));
}

}  // namespace detail

Graph::Graph() : tape_(std::make_shared<detail::Tape>()) {}

Tensor Graph::variable(const Tensor& value) {
  detail::Node node;
  node.op = "variable";
  node.numel = value.numel();
  const int id = tape_->add(std::move(node));
  return value.with_node(tape_, id);
}

Tensor Graph::param(Parameter& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  detail::Node node;
  node.op = "param";
  node.numel = p.value.numel();
  node.param = &p;
  const int id = tape_->add(std::move(node));
  Tensor t = p.value.with_node(tape_, id);
  bound_.emplace(&p, t);
  return t;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.requires_grad() || loss.tape() != tape_) {
    throw ContractError("backward: loss is not recorded on this graph");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  tape_->run_backward(loss.node());
}

Tensor Graph::grad(const Tensor& leaf) const {
  if (!leaf.requires_grad() || leaf.tape() != tape_) {
    throw ContractError("grad: tensor is not recorded on this graph");
  }
  if (!tape_->has_grad(leaf.node())) return Tensor::zeros(leaf.shape());
  const auto g = tape_->grad(leaf.node());
  return Tensor(leaf.shape(), std::vector<double>(g.begin(), g.end()));
}

}  // namespace xing
