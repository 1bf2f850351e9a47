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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <cmath>

#include "digitsv/error.hpp"
#include "digitsv/metrics.hpp"
#include "oracles.hpp"

using namespace digitsv;
using digitsv::testing::brute_force_dcf;
using digitsv::testing::brute_force_eer;
using digitsv::testing::brute_force_sweep;
using digitsv::testing::random_score_set;
using digitsv::testing::ThresholdSweep;

namespace {

ScoreSet make_set(const std::vector<double>& tar, const std::vector<double>& non) {
  ScoreSet s;
  for (double v : tar) {
    s.scores.push_back(v);
    s.targets.push_back(true);
  }
  for (double v : non) {
    s.scores.push_back(v);
    s.targets.push_back(false);
  }
  return s;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("perfect separation") {
    const ScoreSet s = make_set({0.9, 0.8}, {0.1, 0.2});
    CHECK(eer(s).value == 0.0);
    CHECK(min_dcf(s).value == 0.0);
  }

  TEST_CASE("identical scores are at chance") {
    const ScoreSet s = make_set({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
    CHECK(eer(s).value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(min_dcf(s).value == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("reversed scores give full error") {
    const ScoreSet s = make_set({0.1, 0.2}, {0.8, 0.9});
    CHECK(eer(s).value == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("interpolated crossing on a hand example") {
    // Ascending thresholds: (FAR, FRR) = (1,0) (1/2,0) (1/2,1/2) ...
    // FRR first reaches FAR at the third point where they are equal.
    const ScoreSet s = make_set({0.4, 0.8}, {0.3, 0.6});
    CHECK(eer(s).value == doctest::Approx(0.5).epsilon(1e-15));
    // (FAR, FRR): (1,0) (2/3,0) (1/3,0) (1/3,1) ... -> gaps 1/3 then -2/3,
    // lambda = 1/3, EER = 1/3.
    const ScoreSet t = make_set({0.9}, {0.1, 0.2, 0.95});
    CHECK(eer(t).value == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("sweep matches exhaustive threshold counting") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 150; ++rep) {
      const ScoreSet s = random_score_set(rng);
      const ThresholdSweep o = brute_force_sweep(s);
      const auto det = det_curve(s);
      REQUIRE(det.size() == o.thr.size());
      for (std::size_t i = 0; i < det.size(); ++i) {
        CHECK(det[i].threshold == o.thr[i]);
        CHECK(std::abs(det[i].far - o.far[i]) <= 1e-12);
        CHECK(std::abs(det[i].frr - o.frr[i]) <= 1e-12);
      }
      const ErrorRate e = eer(s);
      const ErrorRate eo = brute_force_eer(o);
      CHECK(std::abs(e.value - eo.value) <= 1e-12);
      CHECK(std::abs(e.threshold - eo.threshold) <= 1e-12);
      CHECK(e.value >= 0.0);
      CHECK(e.value <= 1.0);
      const ErrorRate d = min_dcf(s);
      const ErrorRate dor = brute_force_dcf(o, DcfParams{});
      CHECK(std::abs(d.value - dor.value) <= 1e-12);
      CHECK(d.threshold == dor.threshold);
      CHECK(d.value <= 1.0 + 1e-12);
      const DcfParams other{0.05, 2.0, 1.0};
      CHECK(std::abs(min_dcf(s, other).value - brute_force_dcf(o, other).value) <= 1e-12);
    }
  }

  TEST_CASE("strictly monotone transforms leave both metrics unchanged") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 100; ++rep) {
      const ScoreSet s = random_score_set(rng);
      ScoreSet t = s;
      for (double& v : t.scores) v = 3.0 * std::exp(0.5 * v) + 1.0;
      ScoreSet a = s;
      for (double& v : a.scores) v = std::atan(v) - 7.0;
      CHECK(std::abs(eer(s).value - eer(t).value) <= 1e-12);
      CHECK(std::abs(eer(s).value - eer(a).value) <= 1e-12);
      CHECK(std::abs(min_dcf(s).value - min_dcf(t).value) <= 1e-12);
      CHECK(std::abs(min_dcf(s).value - min_dcf(a).value) <= 1e-12);
    }
  }

  TEST_CASE("report and contract errors") {
    const ScoreSet s = make_set({0.9, 0.3}, {0.1, 0.5});
    const EvalReport r = evaluate(s);
    const nlohmann::json j = to_json(r);
    CHECK(j.at("eer").get<double>() == r.eer.value);
    CHECK(j.at("min_dcf").get<double>() == r.min_dcf.value);
    CHECK(j.contains("threshold"));
    CHECK(r.det.size() == 5);
    for (const DetPoint& p : r.det) {
      const double d = (0.01 * p.frr + 0.99 * p.far) / 0.01;
      CHECK(r.min_dcf.value <= d + 1e-12);
    }
    CHECK_THROWS_AS(eer(make_set({0.1, 0.2}, {})), ContractError);
    CHECK_THROWS_AS(min_dcf(make_set({}, {0.1})), ContractError);
    ScoreSet bad = s;
    bad.targets.pop_back();
    CHECK_THROWS_AS(eer(bad), DimensionError);
    ScoreSet nan = s;
    nan.scores[0] = std::nan("");
    CHECK_THROWS_AS(eer(nan), NumericError);
  }
}
