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

#include "digitsv/nn.hpp"

#include <cmath>

namespace digitsv {

void xavier_uniform(Parameter& p, Index fan_in, Index fan_out, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index j = 0; j < p.value.cols(); ++j) {
    for (Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = dist(rng);
  }
}

Matrix sinusoidal_encoding(Index positions, Index dim) {
  Matrix pe(positions, dim);
  for (Index t = 0; t < positions; ++t) {
    for (Index j = 0; j < dim; ++j) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(j - j % 2) / dim);
      pe(t, j) = j % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    }
  }
  return pe;
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in,
               Index out, bool bias, Rng& rng)
    : in_(in), out_(out) {
  weight_ = &store.create(name + ".weight", {out, in}, out, in);
  xavier_uniform(*weight_, in, out, rng);
  if (bias) bias_ = &store.create(name + ".bias", {out}, 1, out);
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  Var b = bias_ ? tape.param(*bias_) : Var();
  return ops::linear(x, tape.param(*weight_), b);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, Index in,
               Index out, Index kernel, Index dilation, Index padding,
               Rng& rng)
    : kernel_(kernel), dilation_(dilation), padding_(padding) {
  weight_ = &store.create(name + ".weight", {out, in, kernel}, out,
                          in * kernel);
  xavier_uniform(*weight_, in * kernel, out * kernel, rng);
  bias_ = &store.create(name + ".bias", {out}, out, 1);
}

Var Conv1d::operator()(Tape& tape, const Var& x) const {
  return ops::conv1d(x, tape.param(*weight_), tape.param(*bias_), kernel_,
                     dilation_, padding_);
}

Var Conv1d::operator()(Tape& tape, const Var& x,
                       std::span<const Index> segments) const {
  return ops::conv1d_segments(x, tape.param(*weight_), tape.param(*bias_),
                              kernel_, dilation_, padding_, segments);
}

BatchNorm1d::BatchNorm1d(ParameterStore& store, const std::string& name,
                         Index channels) {
  gamma_ = &store.create(name + ".weight", {channels}, channels, 1);
  gamma_->value.setOnes();
  beta_ = &store.create(name + ".bias", {channels}, channels, 1);
  mean_ = &store.create(name + ".running_mean", {channels}, channels, 1,
                        /*trainable=*/false);
  var_ = &store.create(name + ".running_var", {channels}, channels, 1,
                       /*trainable=*/false);
  var_->value.setOnes();
}

Var BatchNorm1d::operator()(Tape& tape, const Var& x,
                            const Context& ctx) const {
  Var g = tape.param(*gamma_);
  Var b = tape.param(*beta_);
  if (ctx.mode == Mode::kEval) {
    return ops::batch_norm_eval(x, g, b, mean_->value.col(0),
                                var_->value.col(0), kEps);
  }
  Vector mu;
  Vector var;
  Var y = ops::batch_norm(x, g, b, kEps, &mu, &var);
  if (ctx.update_stats) {
    mean_->value.col(0) = (1.0 - kMomentum) * mean_->value.col(0) + kMomentum * mu;
    var_->value.col(0) = (1.0 - kMomentum) * var_->value.col(0) + kMomentum * var;
  }
  return y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name,
                     Index dim) {
  gamma_ = &store.create(name + ".weight", {dim}, 1, dim);
  gamma_->value.setOnes();
  beta_ = &store.create(name + ".bias", {dim}, 1, dim);
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return ops::layer_norm(x, tape.param(*gamma_), tape.param(*beta_), kEps);
}

}  // namespace digitsv
