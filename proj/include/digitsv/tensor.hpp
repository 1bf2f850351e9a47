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

// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// Every value flowing through a network is a rank-2 matrix. Higher-rank
// parameters (conv kernels) keep their logical shape in Parameter::shape and
// are stored flattened row-major into a matrix, so a C_out x C_in x K kernel
// is a C_out x (C_in * K) matrix whose column index is c * K + k.
//
// A Tape owns the nodes created during one forward pass. It is confined to a
// single thread while a pass is in flight.

#ifndef DIGITSV_TENSOR_HPP_
#define DIGITSV_TENSOR_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace digitsv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// A named learnable (or persistent, non-trainable) array.
struct Parameter {
  std::string name;
  std::vector<Index> shape;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name, std::vector<Index> shape, Index rows, Index cols,
            bool trainable = true);

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owning, address-stable collection of parameters in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  // Registers a parameter. `shape` must multiply out to rows * cols.
  Parameter& create(const std::string& name, std::vector<Index> shape,
                    Index rows, Index cols, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();
  void zero_grad();
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Accumulated gradient after Tape::backward; zeros if none reached it.
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  // Scalar value of a 1x1 node.
  double item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the gradient flowing into the node and pushes contributions to
  // its inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Free-standing leaf that collects its own gradient.
  Var leaf(Matrix value);
  // Leaf bound to a parameter; backward adds into parameter.grad.
  Var param(Parameter& p);

  // Records an op output. `inputs` decides whether the node needs a gradient.
  // Throws NumericError when `value` is not finite.
  Var record(const char* op, Matrix value, const std::vector<Var>& inputs,
             BackwardFn backward);

  // Reverse sweep from a 1x1 loss. A second call requires zero_grad().
  void backward(const Var& loss);
  void zero_grad();

  bool needs_grad(const Var& v) const;
  void accumulate(const Var& v, const Matrix& delta);
  // Adds `delta` into the block of v's gradient at (row, col).
  void accumulate_block(const Var& v, Index row, Index col,
                        const Matrix& delta);

  const Matrix& value_of(int id) const { return nodes_[id].value; }
  Matrix grad_of(int id) const;
  bool requires_grad_of(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace digitsv

#endif  // DIGITSV_TENSOR_HPP_
