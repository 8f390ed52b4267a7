// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "e2est/param_store.hpp"
#include "e2est/tensor.hpp"

namespace e2est {

/// Handle to a value recorded on a Graph.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

using GradMap = std::map<std::string, Tensor>;

class Graph;
using BackwardFn = std::function<void(Graph&, Var self)>;

/// Reverse-mode tape.
///
/// Every op appends one node holding its value and, when any input requires
/// a gradient, a closure that pushes the node's gradient into its inputs.
/// Nodes are processed in reverse creation order, which is a valid
/// topological order because inputs always precede outputs.
///
/// A graph built with `record = false` evaluates values only; calling
/// backward() on it is an error.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Leaf bound to `store[name]`; repeated calls return the same Var.
  Var param(const ParamStore& store, const std::string& name);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records an op result. `op` names the op in NumericError messages.
  Var emit(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var emit(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Gradient buffer of `v`, allocated as zeros on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradients of the scalar `loss` for every parameter of `store`.
  /// Parameters that did not participate map to zero tensors.
  GradMap backward(Var loss, const ParamStore& store);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, Var> params_;
  const ParamStore* bound_store_ = nullptr;
};

}  // namespace e2est
