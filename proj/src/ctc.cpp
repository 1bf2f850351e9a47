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

#include "digitsv/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "digitsv/error.hpp"
#include "digitsv/kernels.hpp"

namespace digitsv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Lattice {
  std::vector<int> labels;  // blank-interleaved, length 2L + 1
  Matrix alpha;             // T x S, log space, includes emission at t
  Matrix beta;              // T x S, log space, excludes emission at t
  double log_prob = 0.0;
};

void check_target(const Matrix& logits, std::span<const int> target,
                  int blank) {
  const Index vocab = logits.cols();
  if (blank < 0 || blank >= vocab) {
    throw ContractError("ctc: blank index outside the vocabulary");
  }
  for (int y : target) {
    if (y == blank) throw ContractError("ctc: target contains the blank");
    if (y < 0 || y >= vocab) throw ContractError("ctc: target label out of range");
  }
  if (logits.rows() < ctc_min_frames(target)) {
    throw ContractError("ctc: " + std::to_string(logits.rows()) +
                        " frames cannot emit a target that needs " +
                        std::to_string(ctc_min_frames(target)));
  }
}

// Transition into position s may come from s - 2 when it skips a blank
// between two different labels.
bool can_skip(const std::vector<int>& l, Index s, int blank) {
  return s >= 2 && l[static_cast<std::size_t>(s)] != blank &&
         l[static_cast<std::size_t>(s)] != l[static_cast<std::size_t>(s - 2)];
}

Lattice run_lattice(const Matrix& lp, std::span<const int> target, int blank) {
  Lattice lat;
  lat.labels.push_back(blank);
  for (int y : target) {
    lat.labels.push_back(y);
    lat.labels.push_back(blank);
  }
  const Index T = lp.rows();
  const auto S = static_cast<Index>(lat.labels.size());
  auto emit = [&](Index t, Index s) {
    return lp(t, lat.labels[static_cast<std::size_t>(s)]);
  };
  lat.alpha = Matrix::Constant(T, S, kNegInf);
  lat.alpha(0, 0) = emit(0, 0);
  if (S > 1) lat.alpha(0, 1) = emit(0, 1);
  for (Index t = 1; t < T; ++t) {
    for (Index s = 0; s < S; ++s) {
      double a = lat.alpha(t - 1, s);
      if (s >= 1) a = log_add(a, lat.alpha(t - 1, s - 1));
      if (can_skip(lat.labels, s, blank)) a = log_add(a, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = a == kNegInf ? kNegInf : a + emit(t, s);
    }
  }
  lat.beta = Matrix::Constant(T, S, kNegInf);
  lat.beta(T - 1, S - 1) = 0.0;
  if (S > 1) lat.beta(T - 1, S - 2) = 0.0;
  for (Index t = T - 2; t >= 0; --t) {
    for (Index s = 0; s < S; ++s) {
      double b = lat.beta(t + 1, s) + emit(t + 1, s);
      if (s + 1 < S) b = log_add(b, lat.beta(t + 1, s + 1) + emit(t + 1, s + 1));
      if (s + 2 < S && can_skip(lat.labels, s + 2, blank)) {
        b = log_add(b, lat.beta(t + 1, s + 2) + emit(t + 1, s + 2));
      }
      lat.beta(t, s) = b;
    }
  }
  lat.log_prob = lat.alpha(T - 1, S - 1);
  if (S > 1) lat.log_prob = log_add(lat.log_prob, lat.alpha(T - 1, S - 2));
  if (!std::isfinite(lat.log_prob)) {
    throw NumericError("ctc: target has zero probability");
  }
  return lat;
}

}  // namespace

Index ctc_min_frames(std::span<const int> target) {
  Index n = static_cast<Index>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

double ctc_negative_log_likelihood(const Matrix& logits,
                                   std::span<const int> target, int blank) {
  if (logits.rows() < 1) throw DimensionError("ctc: no frames");
  check_target(logits, target, blank);
  return -run_lattice(kernels::log_softmax(logits, 1), target, blank).log_prob;
}

Var ctc_loss(const Var& logits, std::span<const int> target, int blank) {
  if (!logits.valid()) throw ContractError("ctc: unbound logits");
  if (logits.rows() < 1) throw DimensionError("ctc: no frames");
  const Matrix& z = logits.value();
  check_target(z, target, blank);
  const Matrix lp = kernels::log_softmax(z, 1);
  const Lattice lat = run_lattice(lp, target, blank);
  // d(-log p)/dz = softmax - occupancy, occupancy_t(k) summing
  // exp(alpha + beta - log p) over lattice positions labelled k.
  Matrix grad = lp.array().exp().matrix();
  for (Index t = 0; t < z.rows(); ++t) {
    for (Index s = 0; s < lat.alpha.cols(); ++s) {
      const double w = lat.alpha(t, s) + lat.beta(t, s);
      if (w == kNegInf) continue;
      grad(t, lat.labels[static_cast<std::size_t>(s)]) -=
          std::exp(w - lat.log_prob);
    }
  }
  return logits.tape()->record(
      "ctc_loss", Matrix::Constant(1, 1, -lat.log_prob), {logits},
      [logits, grad = std::move(grad)](Tape& tp, const Matrix& g) {
        tp.accumulate(logits, grad * g(0, 0));
      });
}

}  // namespace digitsv
