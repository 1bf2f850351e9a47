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

#include "digitsv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "digitsv/error.hpp"

namespace digitsv {

void ScoreSet::validate() const {
  if (scores.size() != targets.size()) {
    throw DimensionError("score set: scores and labels differ in length");
  }
  const auto n_tar = std::count(targets.begin(), targets.end(), true);
  if (n_tar == 0 || n_tar == static_cast<long>(targets.size())) {
    throw ContractError("score set needs both target and non-target trials");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("non-finite score");
  }
}

std::vector<double> sweep_thresholds(const std::vector<double>& scores) {
  std::vector<double> u = scores;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> out;
  out.reserve(u.size() + 1);
  out.push_back(u.front() - 1.0);
  for (std::size_t i = 1; i < u.size(); ++i) {
    out.push_back(0.5 * (u[i - 1] + u[i]));
  }
  out.push_back(u.back() + 1.0);
  return out;
}

std::vector<DetPoint> det_curve(const ScoreSet& s) {
  s.validate();
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (s.targets[i] ? tar : non).push_back(s.scores[i]);
  }
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  const auto thresholds = sweep_thresholds(s.scores);
  std::vector<DetPoint> out;
  out.reserve(thresholds.size());
  std::size_t rejected_tar = 0, rejected_non = 0;
  for (double t : thresholds) {
    // Thresholds increase, so the rejected counts only grow.
    while (rejected_tar < tar.size() && tar[rejected_tar] < t) ++rejected_tar;
    while (rejected_non < non.size() && non[rejected_non] < t) ++rejected_non;
    out.push_back({t,
                   static_cast<double>(non.size() - rejected_non) /
                       static_cast<double>(non.size()),
                   static_cast<double>(rejected_tar) /
                       static_cast<double>(tar.size())});
  }
  return out;
}

namespace {

ErrorRate eer_from(const std::vector<DetPoint>& det) {
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (det[i].frr < det[i].far) continue;
    if (det[i].frr == det[i].far || i == 0) {
      return {det[i].far, det[i].threshold};
    }
    const DetPoint& a = det[i - 1];
    const DetPoint& b = det[i];
    const double gap_a = a.far - a.frr;  // > 0
    const double gap_b = b.far - b.frr;  // < 0
    const double lambda = gap_a / (gap_a - gap_b);
    return {a.far + lambda * (b.far - a.far),
            a.threshold + lambda * (b.threshold - a.threshold)};
  }
  // The last sweep point always has FRR = 1 >= FAR = 0.
  return {det.back().far, det.back().threshold};
}

}  // namespace

ErrorRate eer(const ScoreSet& s) { return eer_from(det_curve(s)); }

namespace {

ErrorRate min_dcf_from(const std::vector<DetPoint>& det, const DcfParams& p) {
  if (!(p.p_target > 0.0 && p.p_target < 1.0) || p.c_miss <= 0.0 ||
      p.c_fa <= 0.0) {
    throw ContractError("dcf: need 0 < p_target < 1 and positive costs");
  }
  const double norm =
      std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  ErrorRate best{INFINITY, 0.0};
  for (const DetPoint& d : det) {
    const double dcf =
        (p.c_miss * p.p_target * d.frr + p.c_fa * (1.0 - p.p_target) * d.far) /
        norm;
    if (dcf < best.value) best = {dcf, d.threshold};
  }
  return best;
}

}  // namespace

ErrorRate min_dcf(const ScoreSet& s, const DcfParams& p) {
  return min_dcf_from(det_curve(s), p);
}

EvalReport evaluate(const ScoreSet& s, const DcfParams& p) {
  EvalReport r;
  r.det = det_curve(s);
  r.eer = eer_from(r.det);
  r.min_dcf = min_dcf_from(r.det, p);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"eer", r.eer.value},
          {"threshold", r.eer.threshold},
          {"min_dcf", r.min_dcf.value},
          {"min_dcf_threshold", r.min_dcf.threshold}};
}

}  // namespace digitsv
