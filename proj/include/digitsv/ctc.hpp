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

// Connectionist temporal classification over per-frame logits.

#ifndef DIGITSV_CTC_HPP_
#define DIGITSV_CTC_HPP_

#include <span>

#include "digitsv/tensor.hpp"

namespace digitsv {

// Fewest frames that can emit `target`: one per label plus one blank
// between each pair of equal neighbours.
Index ctc_min_frames(std::span<const int> target);

// -log sum over alignments of prod_t softmax(logits_t)[path_t], computed by
// the forward recursion in log space. logits: T x V. Throws ContractError
// when the target contains `blank`, a label is out of range, or
// T < ctc_min_frames(target).
double ctc_negative_log_likelihood(const Matrix& logits,
                                   std::span<const int> target, int blank);

// Differentiable form; the gradient is softmax(logits) minus the per-frame
// label occupancy.
Var ctc_loss(const Var& logits, std::span<const int> target, int blank);

}  // namespace digitsv

#endif  // DIGITSV_CTC_HPP_
