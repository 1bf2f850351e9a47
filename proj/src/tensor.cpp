// Copyright (c) 2026 The digitsv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "digitsv/tensor.hpp"

#include <numeric>

#include "digitsv/error.hpp"

namespace digitsv {

Parameter::Parameter(std::string name_, std::vector<Index> shape_, Index rows,
                     Index cols, bool trainable_)
    : name(std::move(name_)),
      shape(std::move(shape_)),
      value(Matrix::Zero(rows, cols)),
      grad(Matrix::Zero(rows, cols)),
      trainable(trainable_) {
  const Index n = std::accumulate(shape.begin(), shape.end(), Index{1},
                                  std::multiplies<>{});
  if (n != rows * cols) {
    throw DimensionError("parameter '" + name + "' shape does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Parameter& ParameterStore::create(const std::string& name,
                                  std::vector<Index> shape, Index rows,
                                  Index cols, bool trainable) {
  if (contains(name)) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  params_.push_back(std::make_unique<Parameter>(name, std::move(shape), rows,
                                                cols, trainable));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ContractError("unknown parameter '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ContractError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

const Matrix& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value_of(id_);
}

Matrix Var::grad() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->grad_of(id_);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad_of(id_);
}

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw DimensionError("item() on a " + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  if (!value.allFinite()) throw NumericError("non-finite constant");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Matrix value) {
  if (!value.allFinite()) throw NumericError("non-finite leaf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (!p.value.allFinite()) {
    throw NumericError("non-finite parameter '" + p.name + "'");
  }
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  return push(std::move(n));
}

Var Tape::record(const char* op, Matrix value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite output from ") + op);
  }
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw ContractError(std::string(op) + ": input from another tape");
    }
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

bool Tape::needs_grad(const Var& v) const {
  return nodes_[v.id()].requires_grad;
}

void Tape::accumulate(const Var& v, const Matrix& delta) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.has_grad) {
    n.grad += delta;
  } else {
    n.grad = delta;
    n.has_grad = true;
  }
}

void Tape::accumulate_block(const Var& v, Index row, Index col,
                            const Matrix& delta) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  n.grad.block(row, col, delta.rows(), delta.cols()) += delta;
}

Matrix Tape::grad_of(int id) const {
  const Node& n = nodes_[id];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ContractError("loss is not on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  if (backward_done_) {
    throw ContractError("backward() called twice without zero_grad()");
  }
  backward_done_ = true;
  accumulate(loss, Matrix::Ones(1, 1));
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.backward) {
      // The closure only touches earlier nodes, so the reference stays valid.
      n.backward(*this, n.grad);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  backward_done_ = false;
}

}  // namespace digitsv
