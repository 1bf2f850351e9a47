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

// Central finite-difference oracle for reverse-mode gradients. Test-only.

#ifndef DIGITSV_TESTS_GRADCHECK_HPP_
#define DIGITSV_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "digitsv/ops.hpp"
#include "digitsv/tensor.hpp"

namespace digitsv::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTol = 1e-4;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

// ||a - b|| / max(||a||, ||b||, 1e-6). The floor keeps round-off in
// differences of a gradient that is zero by symmetry (for example a bias
// that only shifts softmax inputs) from reading as a relative error of 1.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-6});
  return (a - b).norm() / scale;
}

// Reduces an arbitrary output to a scalar through a fixed random weighting.
inline Var project(const Var& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Matrix w = random_matrix(out.rows(), out.cols(), rng);
  return ops::sum(ops::mul(out, out.tape()->constant(w)));
}

using LeafFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Relative error between tape gradients and central differences of the
// scalar returned by `f`, measured on the concatenation of all input
// gradients so that tensors whose gradient is near zero do not turn
// difference round-off into a large ratio.
inline double check_leaves(const LeafFn& f, std::vector<Matrix> inputs,
                           double h = kFdStep) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
    Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : xs) leaves.push_back(tape.constant(m));
    return f(tape, leaves).item();
  };
  double gap2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k](i);
      inputs[k](i) = x0 + h;
      const double fp = eval(inputs);
      inputs[k](i) = x0 - h;
      const double fm = eval(inputs);
      inputs[k](i) = x0;
      numeric(i) = (fp - fm) / (2.0 * h);
    }
    gap2 += (analytic[k] - numeric).squaredNorm();
    a2 += analytic[k].squaredNorm();
    n2 += numeric.squaredNorm();
  }
  return std::sqrt(gap2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
}

using ParamFn = std::function<Var(Tape&)>;

// Same check over the values of parameters used by `f` (and any leaves it
// creates are treated as constants).
inline double check_parameters(const ParamFn& f,
                               const std::vector<Parameter*>& params,
                               double h = kFdStep) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  double gap2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Parameter* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      const double x0 = p->value(i);
      p->value(i) = x0 + h;
      double fp;
      {
        Tape tape;
        fp = f(tape).item();
      }
      p->value(i) = x0 - h;
      double fm;
      {
        Tape tape;
        fm = f(tape).item();
      }
      p->value(i) = x0;
      numeric(i) = (fp - fm) / (2.0 * h);
    }
    gap2 += (p->grad - numeric).squaredNorm();
    a2 += p->grad.squaredNorm();
    n2 += numeric.squaredNorm();
  }
  return std::sqrt(gap2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
}

}  // namespace digitsv::testing

#endif  // DIGITSV_TESTS_GRADCHECK_HPP_
