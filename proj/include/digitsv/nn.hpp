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

#ifndef DIGITSV_NN_HPP_
#define DIGITSV_NN_HPP_

#include <random>
#include <span>
#include <string>

#include "digitsv/ops.hpp"
#include "digitsv/tensor.hpp"

namespace digitsv {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

// Forward-pass settings shared by every layer of a model.
struct Context {
  Mode mode = Mode::kEval;
  // In train mode, batch norm folds batch statistics into its running
  // statistics only when this is set.
  bool update_stats = true;
};

// Uniform(-bound, bound) with bound = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Parameter& p, Index fan_in, Index fan_out, Rng& rng);

// Sinusoidal position table, positions x dim: sin on even columns, cos on
// odd ones, wavelengths growing geometrically up to 10000 * 2pi.
Matrix sinusoidal_encoding(Index positions, Index dim);

// y = x W^T + b for x: N x in.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out,
         bool bias, Rng& rng);

  Var operator()(Tape& tape, const Var& x) const;
  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }
  Index in() const { return in_; }
  Index out() const { return out_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  Index in_ = 0;
  Index out_ = 0;
};

// Cross-correlation over C x T inputs; optional per-segment application.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, Index in, Index out,
         Index kernel, Index dilation, Index padding, Rng& rng);

  Var operator()(Tape& tape, const Var& x) const;
  Var operator()(Tape& tape, const Var& x,
                 std::span<const Index> segments) const;

  // Same-padding for odd kernels.
  static Index same_padding(Index kernel, Index dilation) {
    return dilation * (kernel - 1) / 2;
  }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  Index kernel_ = 1;
  Index dilation_ = 1;
  Index padding_ = 0;
};

// Channel-wise (row-wise) batch normalization with running statistics.
// Variance is the biased estimate; eps = 1e-5, momentum = 0.1.
class BatchNorm1d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d() = default;
  BatchNorm1d(ParameterStore& store, const std::string& name, Index channels);

  Var operator()(Tape& tape, const Var& x, const Context& ctx) const;

  Parameter& gamma() const { return *gamma_; }
  Parameter& beta() const { return *beta_; }
  Parameter& running_mean() const { return *mean_; }
  Parameter& running_var() const { return *var_; }

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  Parameter* mean_ = nullptr;
  Parameter* var_ = nullptr;
};

// Row-wise layer normalization for N x d inputs.
class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index dim);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

}  // namespace digitsv

#endif  // DIGITSV_NN_HPP_
