// Copyright 2026 The pxfer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pxfer/errors.hpp"
#include "pxfer/nn/array.hpp"

namespace pxfer::nn {

template <typename S>
struct Parameter {
  std::string name;
  Array<S> value;
  Array<S> grad;

  void zero_grad() { grad = Array<S>(value.dims); }
};

// Owns named parameters with stable addresses. Registration order is the
// serialization order.
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<S>& add(const std::string& name, Array<S> init) {
    if (index_.count(name)) throw InvalidConfig("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->grad = Array<S>(init.dims);
    p->value = std::move(init);
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter<S>*> all() {
    std::vector<Parameter<S>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
class Tape;

// Handle to a node of a Tape.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  std::size_t id = 0;

  const Array<S>& value() const { return tape->value(*this); }
  const Dims& dims() const { return value().dims; }
  std::size_t dim(std::size_t i) const { return value().dims.at(i); }
  bool needs_grad() const { return tape->needs_grad(*this); }
};

// Append-only reverse-mode computation record. Nodes are created in
// topological order, so backward is a single reverse sweep.
template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Array<S>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Array<S> value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}, {}});
    return Var<S>{this, nodes_.size() - 1};
  }

  // Parameters are deduplicated: repeated use shares one leaf node.
  Var<S> param(Parameter<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<S>{this, it->second};
    const bool trainable = !frozen_.count(&p);
    nodes_.push_back(Node{p.value, {}, trainable, trainable ? &p : nullptr, {}, {}});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var<S>{this, nodes_.size() - 1};
  }

  // Parameters of `ps` enter this tape as constants from now on.
  void freeze(ParameterSet<S>& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) frozen_.insert(&ps[i]);
  }

  Var<S> emit(Array<S> value, std::initializer_list<Var<S>> parents, Backward fn) {
    return emit(std::move(value), std::vector<Var<S>>(parents), std::move(fn));
  }

  Var<S> emit(Array<S> value, const std::vector<Var<S>>& parents, Backward fn) {
    Node n;
    n.value = std::move(value);
    const std::size_t self = nodes_.size();
    for (const auto& p : parents) {
      if (p.tape != this) throw InternalError("variable from a different tape");
      if (p.id >= self) throw InternalError("cycle in computation record");
      n.parents.push_back(p.id);
      n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<S>{this, self};
  }

  const Array<S>& value(Var<S> v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var<S> v) const { return nodes_.at(v.id).needs_grad; }

  // Gradient buffer of `v`, zero-initialized on first access.
  Array<S>& grad(Var<S> v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.dims != n.value.dims || n.grad.size() != n.value.size()) n.grad = Array<S>(n.value.dims);
    return n.grad;
  }

  bool has_grad(Var<S> v) const { return nodes_.at(v.id).grad.size() == nodes_.at(v.id).value.size(); }

  // Propagates d(loss)/d(node) to every reachable trainable parameter,
  // accumulating into Parameter::grad.
  void backward(Var<S> loss) {
    if (value(loss).size() != 1) throw InvalidInput("backward: loss must be a scalar");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss)[0] = S(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() != n.value.size()) continue;
      for (std::size_t p : n.parents)
        if (p >= i) throw InternalError("cycle in computation record");
      // No nodes are appended during the sweep, so references stay valid.
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        Parameter<S>& p = *n.param;
        if (p.grad.dims != p.value.dims) p.zero_grad();
        for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array<S> value;
    Array<S> grad;
    bool needs_grad = false;
    Parameter<S>* param = nullptr;
    std::vector<std::size_t> parents;
    Backward backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<S>*, std::size_t> param_nodes_;
  std::unordered_set<const Parameter<S>*> frozen_;
};

}  // namespace pxfer::nn
