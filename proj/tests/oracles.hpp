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

// Exhaustive reference computations for the CTC loss and the verification
// metrics. Test-only.

#ifndef DIGITSV_TESTS_ORACLES_HPP_
#define DIGITSV_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "digitsv/kernels.hpp"
#include "digitsv/metrics.hpp"
#include "digitsv/tensor.hpp"

namespace digitsv::testing {

// -log of the summed probability of every length-T path that collapses to
// `target`.
inline double brute_force_ctc(const Matrix& logits, const std::vector<int>& target,
                              int blank) {
  const Index T = logits.rows();
  const Index V = logits.cols();
  const Matrix p = kernels::softmax(logits, 1);
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total = 0.0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == target) {
      double prob = 1.0;
      for (Index t = 0; t < T; ++t) prob *= p(t, path[static_cast<std::size_t>(t)]);
      total += prob;
    }
    Index k = 0;
    while (k < T && ++path[static_cast<std::size_t>(k)] == V) {
      path[static_cast<std::size_t>(k)] = 0;
      ++k;
    }
    if (k == T) break;
  }
  return -std::log(total);
}

// Between 2 and 500 trials with at least one of each class; half of the sets
// are rounded to a coarse grid to force ties.
inline ScoreSet random_score_set(std::mt19937_64& rng) {
  const int n = std::uniform_int_distribution<int>(2, 500)(rng);
  const bool coarse = std::bernoulli_distribution(0.5)(rng);
  std::normal_distribution<double> g(0.0, 1.0);
  ScoreSet s;
  for (int i = 0; i < n; ++i) {
    const bool t = i == 0 ? true : i == 1 ? false : std::bernoulli_distribution(0.3)(rng);
    double v = g(rng) + (t ? 1.2 : 0.0);
    if (coarse) v = std::round(v * 4.0) / 4.0;
    s.scores.push_back(v);
    s.targets.push_back(t);
  }
  return s;
}

// Error rates at every candidate threshold by direct counting over all
// trials: below the minimum, each midpoint between distinct scores, above
// the maximum.
struct ThresholdSweep {
  std::vector<double> thr, far, frr;
};

inline ThresholdSweep brute_force_sweep(const ScoreSet& s) {
  std::set<double> distinct(s.scores.begin(), s.scores.end());
  std::vector<double> u(distinct.begin(), distinct.end());
  ThresholdSweep o;
  o.thr.push_back(u.front() - 1.0);
  for (std::size_t i = 0; i + 1 < u.size(); ++i) o.thr.push_back((u[i] + u[i + 1]) / 2.0);
  o.thr.push_back(u.back() + 1.0);
  double nt = 0, nn = 0;
  for (bool t : s.targets) (t ? nt : nn) += 1;
  for (double th : o.thr) {
    double fa = 0, fr = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.targets[i] && s.scores[i] < th) fr += 1;
      if (!s.targets[i] && s.scores[i] >= th) fa += 1;
    }
    o.far.push_back(fa / nn);
    o.frr.push_back(fr / nt);
  }
  return o;
}

// Crossing where FRR first reaches FAR, linearly interpolated on the gap.
inline ErrorRate brute_force_eer(const ThresholdSweep& o) {
  for (std::size_t i = 0; i < o.thr.size(); ++i) {
    if (o.frr[i] < o.far[i]) continue;
    if (i == 0 || o.frr[i] == o.far[i]) return {(o.far[i] + o.frr[i]) / 2.0, o.thr[i]};
    const double ga = o.far[i - 1] - o.frr[i - 1];
    const double gb = o.far[i] - o.frr[i];
    const double lam = ga / (ga - gb);
    return {o.far[i - 1] + lam * (o.far[i] - o.far[i - 1]),
            o.thr[i - 1] + lam * (o.thr[i] - o.thr[i - 1])};
  }
  return {std::numeric_limits<double>::quiet_NaN(), 0.0};
}

inline ErrorRate brute_force_dcf(const ThresholdSweep& o, const DcfParams& p) {
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  ErrorRate best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < o.thr.size(); ++i) {
    const double d = (p.c_miss * p.p_target * o.frr[i] +
                      p.c_fa * (1.0 - p.p_target) * o.far[i]) / norm;
    if (d < best.value) best = {d, o.thr[i]};
  }
  return best;
}

}  // namespace digitsv::testing

#endif  // DIGITSV_TESTS_ORACLES_HPP_
