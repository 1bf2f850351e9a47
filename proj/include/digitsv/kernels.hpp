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

// Dense softmax kernels shared by the tape ops. Loops run over contiguous
// columns so the exponentials vectorize.

#ifndef DIGITSV_KERNELS_HPP_
#define DIGITSV_KERNELS_HPP_

#include "digitsv/tensor.hpp"

namespace digitsv::kernels {

// Max-subtracted softmax of every row (axis 1) or column (axis 0).
Matrix softmax(const Matrix& x, int axis);
// Log-softmax with the same layout.
Matrix log_softmax(const Matrix& x, int axis);
// Gradient of softmax given its output p and the upstream gradient g:
// p * (g - sum(g * p)) with sums along `axis`.
Matrix softmax_backward(const Matrix& p, const Matrix& g, int axis);

}  // namespace digitsv::kernels

#endif  // DIGITSV_KERNELS_HPP_
