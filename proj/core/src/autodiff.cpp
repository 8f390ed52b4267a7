// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/autodiff.hpp"

#include "e2est/errors.hpp"

namespace e2est {

Var Graph::constant(Tensor value) {
  value.check_finite("constant");
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (bound_store_ && bound_store_ != &store) {
    throw GraphError("graph already bound to a different parameter store");
  }
  bound_store_ = &store;
  auto it = params_.find(name);
  if (it != params_.end()) return it->second;
  const Tensor& t = store.at(name);
  t.check_finite("parameter " + name);
  nodes_.push_back(Node{t, {}, {}, record_});
  Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  params_.emplace(name, v);
  return v;
}

Var Graph::emit(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
  }
  value.check_finite(op);
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::emit(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
  }
  value.check_finite(op);
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

GradMap Graph::backward(Var loss, const ParamStore& store) {
  if (!record_) throw GraphError("backward on a graph whose forward pass was not recorded");
  if (!loss.valid() || loss.id >= nodes_.size()) throw GraphError("backward: loss is not a node of this graph");
  if (nodes_[loss.id].value.size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  if (backward_done_) throw GraphError("backward already ran on this graph");
  backward_done_ = true;

  if (nodes_[loss.id].requires_grad) {
    grad(loss)[0] = 1.0;
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward(*this, Var{id});
    }
  }

  GradMap out;
  for (const auto& [name, value] : store) {
    auto it = params_.find(name);
    if (it != params_.end() && has_grad(it->second)) {
      Tensor g = nodes_[it->second.id].grad;
      g.check_finite("gradient of " + name);
      out.emplace(name, std::move(g));
    } else {
      out.emplace(name, Tensor(value.shape()));
    }
  }
  return out;
}

}  // namespace e2est
