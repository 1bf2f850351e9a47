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

// Detection metrics over a set of scored trials.
//
// Thresholds are swept over min(score) - 1, the midpoints between
// consecutive distinct scores, and max(score) + 1, in increasing order. At a
// threshold t a trial is accepted when score >= t, so
//   FAR(t) = accepted non-targets / non-targets
//   FRR(t) = rejected targets / targets.

#ifndef DIGITSV_METRICS_HPP_
#define DIGITSV_METRICS_HPP_

#include <vector>

#include "json.hpp"

namespace digitsv {

struct ScoreSet {
  std::vector<double> scores;
  std::vector<bool> targets;

  std::size_t size() const { return scores.size(); }
  void validate() const;  // equal lengths, both classes, finite scores
};

struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

std::vector<double> sweep_thresholds(const std::vector<double>& scores);
std::vector<DetPoint> det_curve(const ScoreSet& s);

struct ErrorRate {
  double value = 0.0;
  double threshold = 0.0;
};

// First sweep point with FRR >= FAR; when they differ there, FAR and FRR are
// interpolated linearly from the previous point to where they meet.
ErrorRate eer(const ScoreSet& s);

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Minimum over the sweep of
//   (c_miss p FRR + c_fa (1 - p) FAR) / min(c_miss p, c_fa (1 - p)).
ErrorRate min_dcf(const ScoreSet& s, const DcfParams& p = {});

struct EvalReport {
  ErrorRate eer;
  ErrorRate min_dcf;
  std::vector<DetPoint> det;
};

EvalReport evaluate(const ScoreSet& s, const DcfParams& p = {});
nlohmann::json to_json(const EvalReport& r);

}  // namespace digitsv

#endif  // DIGITSV_METRICS_HPP_
