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

// Differentiable operations on tape variables.
//
// Axis convention for reductions, softmax, concat and slice:
//   axis 0 runs down the rows (a column-wise reduction yields 1 x cols),
//   axis 1 runs across the columns (a row-wise reduction yields rows x 1).
//
// Binary element-wise ops accept a right operand that is the same shape as
// the left, a 1x1 scalar, a rows x 1 column or a 1 x cols row; the smaller
// operand is broadcast and its gradient is reduced back.

#ifndef DIGITSV_OPS_HPP_
#define DIGITSV_OPS_HPP_

#include <span>
#include <vector>

#include "digitsv/tensor.hpp"

namespace digitsv::ops {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Hadamard product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// Subgradient at 0 is 0.
Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
// Non-positive entries surface as NumericError.
Var log(const Var& a);
Var sqrt(const Var& a);

Var sum(const Var& a);
Var sum(const Var& a, int axis);
Var mean(const Var& a);
Var mean(const Var& a, int axis);

Var concat(const std::vector<Var>& parts, int axis);
// Half-open range [start, end) along `axis`.
Var slice(const Var& a, int axis, Index start, Index end);

// Max-subtracted softmax; slices along `axis` sum to one.
Var softmax(const Var& a, int axis);
Var log_softmax(const Var& a, int axis);

// x: N x in, weight: out x in, bias: 1 x out (may be an unbound Var).
Var linear(const Var& x, const Var& weight, const Var& bias);

// Cross-correlation (no kernel flip). x: C_in x T, weight: C_out x (C_in*K)
// with column c*K + k, bias: C_out x 1 (may be unbound).
// T_out = T + 2*padding - dilation*(K - 1).
Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel,
           Index dilation, Index padding);
// Same as conv1d applied independently to consecutive column segments of x
// with the given lengths; outputs are concatenated in order. Padding never
// reads across a segment boundary.
Var conv1d_segments(const Var& x, const Var& weight, const Var& bias,
                    Index kernel, Index dilation, Index padding,
                    std::span<const Index> lengths);
// Column means of consecutive segments: C x sum(lengths) -> C x S.
Var segment_mean(const Var& x, std::span<const Index> lengths);
Index conv1d_output_length(Index length, Index kernel, Index dilation,
                           Index padding);

// Per-row (channel) normalization with statistics over the columns. The
// biased batch mean/variance are written to the optional outputs.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps,
               Vector* batch_mean = nullptr, Vector* batch_var = nullptr);
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta,
                    const Vector& running_mean, const Vector& running_var,
                    double eps);
// Per-row normalization over the columns; gamma/beta are 1 x cols.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

// Each row scaled to unit L2 norm. A zero row is a NumericError.
Var normalize_rows(const Var& x);
Var gather_rows(const Var& table, std::span<const int> ids);

// Mean softmax cross-entropy of logits (N x K) against class labels.
Var cross_entropy(const Var& logits, std::span<const int> labels);
// Mean binary cross-entropy on logits (N x 1) against 0/1 labels.
Var bce_with_logits(const Var& logits, std::span<const int> labels);

}  // namespace digitsv::ops

#endif  // DIGITSV_OPS_HPP_
