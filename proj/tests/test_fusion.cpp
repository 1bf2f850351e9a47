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
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "digitsv/error.hpp"
#include "digitsv/fusion.hpp"

using namespace digitsv;
namespace fs = std::filesystem;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// In-memory manifest laid out like the default corpus: the last `test`
// utterances of each (speaker, pattern) cell are held out.
Manifest grid_manifest(int speakers, int patterns, int per_cell, int test) {
  Manifest m;
  for (int s = 0; s < speakers; ++s) {
    for (int p = 0; p < patterns; ++p) {
      for (int k = 0; k < per_cell; ++k) {
        Utterance u;
        u.speaker_id = "spk" + std::to_string(s);
        u.pattern_id = "d00" + std::to_string(p + 1);
        u.utterance_id = u.speaker_id + "_" + u.pattern_id + "_" + std::to_string(k);
        u.split = k >= per_cell - test ? "test" : "train";
        u.path = "wav/" + u.utterance_id + ".wav";
        u.tokens = {1, 2};
        m.utterances.push_back(u);
      }
    }
  }
  return m;
}

// Speaker and text embeddings clustered by speaker and pattern.
EmbeddingTable clustered_table(const Manifest& m, Index dim, double noise,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<std::string, Vector> spk, txt;
  std::vector<EmbeddingRecord> recs;
  std::normal_distribution<double> g(0.0, noise);
  for (const Utterance& u : m.utterances) {
    if (!spk.count(u.speaker_id)) spk[u.speaker_id] = random_vector(dim, rng);
    if (!txt.count(u.pattern_id)) txt[u.pattern_id] = random_vector(dim, rng);
    EmbeddingRecord r{u.utterance_id, u.speaker_id, u.pattern_id, spk[u.speaker_id],
                      txt[u.pattern_id]};
    for (Index i = 0; i < dim; ++i) {
      r.speaker(i) += g(rng);
      r.text(i) += g(rng);
    }
    recs.push_back(r);
  }
  return index_records(recs);
}

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("digitsv_test_fusion_" + name);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("cosine examples") {
    const Vector x = vec({0.3, -2.0, 1.5});
    CHECK(cosine(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine(x, -x) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(cosine(vec({1, 0}), vec({1, 1})) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(cosine(x, Vector::Zero(3)), NumericError);
    CHECK_THROWS_AS(cosine(x, vec({1, 2})), DimensionError);
  }

  TEST_CASE("fusion of normalized embeddings") {
    const Vector e = vec({3.0, 4.0});
    EmbeddingRecord r{"u", "s", "p", e, e};
    const Vector add = fuse_add(r);
    CHECK((add - 2.0 * e / e.norm()).norm() <= 1e-15);
    EmbeddingRecord zero{"u", "s", "p", e, Vector::Zero(2)};
    CHECK_THROWS_AS(fuse_add(zero), NumericError);
    EmbeddingRecord mismatch{"u", "s", "p", e, vec({1, 2, 3})};
    CHECK_THROWS_AS(fuse_mul(mismatch), DimensionError);
    EmbeddingRecord missing{"u", "s", "p", e, Vector()};
    CHECK_THROWS_AS(fuse_mul(missing), ContractError);

    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector a = random_vector(6, rng);
      const Vector b = random_vector(6, rng);
      const double fused = cosine(fuse_add({"a", "", "", a, a}),
                                  fuse_add({"b", "", "", b, b}));
      CHECK(std::abs(fused - cosine(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("constant text embedding makes mul fusion match speaker scores") {
    const Manifest m = grid_manifest(3, 2, 5, 5);
    EmbeddingTable table = clustered_table(m, 8, 0.5, 2);
    for (auto& [id, r] : table) r.text = Vector::Constant(8, 1.0 / std::sqrt(8.0));
    const auto trials = make_trials(m, "test", {10, 10, 10, 10}, 3);
    const auto spk = score_trials(table, trials, ScoreStrategy::kSpeaker);
    const auto mul = score_trials(table, trials, ScoreStrategy::kMul);
    REQUIRE(spk.size() == trials.size());
    for (std::size_t i = 0; i < spk.size(); ++i) CHECK(std::abs(spk[i] - mul[i]) <= 1e-12);
    // Any constant positive vector works, not only the unit one.
    for (auto& [id, r] : table) r.text = Vector::Constant(8, 7.5);
    const auto mul2 = score_trials(table, trials, ScoreStrategy::kMul);
    for (std::size_t i = 0; i < spk.size(); ++i) CHECK(std::abs(spk[i] - mul2[i]) <= 1e-12);
  }

  TEST_CASE("symmetry and scale invariance of cosine strategies") {
    const Manifest m = grid_manifest(3, 2, 4, 4);
    EmbeddingTable table = clustered_table(m, 6, 0.8, 4);
    auto trials = make_trials(m, "test", {8, 8, 8, 8}, 5);
    std::vector<Trial> swapped;
    for (const Trial& t : trials) swapped.push_back({t.test, t.enroll, t.target});
    EmbeddingTable scaled = table;
    double c = 0.5;
    for (auto& [id, r] : scaled) {
      r.speaker *= c;
      r.text *= 2.0 * c;
      c += 0.37;
    }
    for (ScoreStrategy s : {ScoreStrategy::kSpeaker, ScoreStrategy::kAdd,
                            ScoreStrategy::kMul}) {
      const auto a = score_trials(table, trials, s);
      const auto b = score_trials(table, swapped, s);
      const auto d = score_trials(scaled, trials, s);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(std::abs(a[i] - d[i]) <= 1e-12);
      }
    }
    Trial self{trials[0].enroll, trials[0].enroll, true};
    CHECK(score_trials(table, {self}, ScoreStrategy::kSpeaker)[0] ==
          doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(score_trials(table, {{"nope", trials[0].test, false}},
                              ScoreStrategy::kSpeaker));
    CHECK_THROWS_AS(score_trials(table, trials, ScoreStrategy::kCnn), ContractError);
  }

  TEST_CASE("trial sampling on the desk corpus layout") {
    const Manifest m = grid_manifest(12, 6, 20, 4);
    const auto trials = make_trials(m, "test", {100, 100, 100, 100}, 7);
    CHECK(trials.size() == 400);
    std::map<std::string, const Utterance*> by_id;
    for (const Utterance& u : m.utterances) by_id[u.utterance_id] = &u;
    int targets = 0;
    std::set<std::pair<std::string, std::string>> seen;
    for (const Trial& t : trials) {
      const Utterance* a = by_id.at(t.enroll);
      const Utterance* b = by_id.at(t.test);
      CHECK(t.enroll != t.test);
      CHECK(a->split == "test");
      CHECK(b->split == "test");
      CHECK(t.target == (a->speaker_id == b->speaker_id && a->pattern_id == b->pattern_id));
      CHECK(seen.insert({t.enroll, t.test}).second);
      CHECK(seen.count({t.test, t.enroll}) == (t.enroll == t.test ? 1u : 0u));
      targets += t.target ? 1 : 0;
    }
    CHECK(targets == 100);
    CHECK(make_trials(m, "test", {100, 100, 100, 100}, 7) == trials);
    CHECK(make_trials(m, "test", {100, 100, 100, 100}, 8) != trials);
    // 12 * 6 cells of 4 test utterances hold 72 * 6 = 432 target pairs.
    CHECK(make_trials(m, "test", {432, 1, 1, 1}, 1).size() == 435);
    CHECK_THROWS_AS(make_trials(m, "test", {433, 1, 1, 1}, 1), ContractError);
    CHECK_THROWS_AS(make_trials(m, "dev", {1, 1, 1, 1}, 1), ContractError);
    CHECK_THROWS(trial_counts_from_json({{"target", 1}, {"extra", 2}}));
  }

  TEST_CASE("csv round trips") {
    std::mt19937_64 rng(9);
    std::vector<EmbeddingRecord> recs;
    for (int i = 0; i < 4; ++i) {
      recs.push_back({"u" + std::to_string(i), "s" + std::to_string(i % 2), "d001",
                      random_vector(5, rng), i == 3 ? Vector() : random_vector(5, rng)});
    }
    const fs::path emb = scratch("emb.csv");
    write_embeddings(emb, recs);
    const auto back = read_embeddings(emb);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(back[i].utterance_id == recs[i].utterance_id);
      CHECK(back[i].speaker_id == recs[i].speaker_id);
      CHECK((back[i].speaker.array() == recs[i].speaker.array()).all());
      CHECK(back[i].text.size() == recs[i].text.size());
      if (recs[i].text.size() > 0) CHECK((back[i].text.array() == recs[i].text.array()).all());
    }

    const std::vector<Trial> trials{{"u0", "u1", true}, {"u2", "u3", false}};
    const fs::path tr = scratch("trials.csv");
    write_trials(tr, trials);
    CHECK(read_trials(tr) == trials);
    const fs::path sc = scratch("scores.csv");
    write_scores(sc, trials, {0.123456789012345678, -1.0 / 3.0});
    std::vector<Trial> again;
    const ScoreSet s = read_scores(sc, &again);
    CHECK(again == trials);
    CHECK(s.scores[0] == 0.123456789012345678);
    CHECK(s.scores[1] == -1.0 / 3.0);
    CHECK(s.targets == std::vector<bool>{true, false});
  }

  TEST_CASE("CNN fusion training") {
    const Manifest m = grid_manifest(4, 3, 6, 6);
    const auto trials = make_trials(m, "test", {40, 40, 40, 40}, 11);
    std::vector<double> deltas;
    for (std::uint64_t seed : {1, 2, 3}) {
      const EmbeddingTable table = clustered_table(m, 8, 0.6, 20 + seed);
      CnnFusionConfig cfg;
      cfg.epochs = 1;
      cfg.batch_size = 16;
      cfg.seed = seed;
      CnnFusionModel model(8, cfg);
      const double before = cnn_fusion_loss(model, table, trials);
      const auto log = train_cnn_fusion(model, table, trials);
      CHECK(log.size() == 1);
      deltas.push_back(cnn_fusion_loss(model, table, trials) - before);
    }
    CHECK(median(deltas) < 0.0);

    const EmbeddingTable table = clustered_table(m, 8, 0.6, 30);
    CnnFusionConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    CnnFusionModel a(8, cfg), b(8, cfg);
    train_cnn_fusion(a, table, trials);
    train_cnn_fusion(b, table, trials);
    const auto sa = score_trials(table, trials, ScoreStrategy::kCnn, &a);
    const auto sb = score_trials(table, trials, ScoreStrategy::kCnn, &b);
    CHECK(sa == sb);
    CHECK(score_trials(table, trials, ScoreStrategy::kCnn, &a) == sa);
    double lo = sa[0], hi = sa[0];
    for (double v : sa) {
      CHECK(std::isfinite(v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi > lo);
    const CnnFusionModel back = CnnFusionModel::from_json(a.to_json());
    CHECK(back.score(table, trials) == sa);

    std::vector<Trial> one_class;
    for (const Trial& t : trials) {
      if (t.target) one_class.push_back(t);
    }
    CHECK_THROWS_AS(train_cnn_fusion(a, table, one_class), ContractError);
  }
}
