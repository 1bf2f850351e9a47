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
#include <numeric>
#include <random>

#include "digitsv/error.hpp"
#include "digitsv/speaker_net.hpp"
#include "gradcheck.hpp"
#include "toy_corpus.hpp"

using namespace digitsv;
using digitsv::testing::check_leaves;
using digitsv::testing::check_parameters;
using digitsv::testing::kGradTol;
using digitsv::testing::project;
using digitsv::testing::random_matrix;
using digitsv::testing::toy_data;

namespace {

EcapaLiteConfig tiny_config(PoolingKind kind = PoolingKind::kAsp) {
  EcapaLiteConfig c;
  c.n_coeffs = 4;
  c.stem_channels = 4;
  c.stem_kernel = 3;
  c.dilations = {2, 3};
  c.channels = 8;
  c.embed_dim = 4;
  c.pooling.kind = kind;
  c.pooling.hidden = 4;
  c.pooling.window = 4;
  c.pooling.stride = 2;
  c.pooling.heads = 2;
  c.pooling.head_dim = 2;
  return c;
}

const std::vector<std::string> kTwoClasses{"a", "b"};

// Plain softmax cross-entropy over cosine logits, in scalar loops.
double ref_cosine_ce(const Matrix& e, const Matrix& w,
                     const std::vector<int>& labels) {
  double total = 0.0;
  for (Index b = 0; b < e.rows(); ++b) {
    std::vector<double> z;
    for (Index k = 0; k < w.rows(); ++k) {
      z.push_back(e.row(b).dot(w.row(k)) / (e.row(b).norm() * w.row(k).norm()));
    }
    double lse = 0.0;
    for (double v : z) lse += std::exp(v);
    total += std::log(lse) - z[static_cast<std::size_t>(labels[static_cast<std::size_t>(b)])];
  }
  return total / static_cast<double>(e.rows());
}

double aam_value(const Matrix& e, const Matrix& w, const std::vector<int>& y,
                 const AamConfig& cfg) {
  Tape tape;
  return aam_softmax_loss(tape.constant(e), y, tape.constant(w), cfg).item();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

LabeledSet toy_labels() {
  return label_features(toy_data().manifest, toy_data().train,
                        LabelMode::kSpeaker);
}

SpeakerTrainConfig toy_train_config(std::uint64_t seed) {
  SpeakerTrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.seed = seed;
  return c;
}

EcapaLiteConfig toy_model_config() {
  EcapaLiteConfig c;
  c.stem_channels = 16;
  c.channels = 24;
  c.embed_dim = 16;
  c.pooling.kind = PoolingKind::kAspSwasp;
  c.pooling.window = 20;
  c.pooling.stride = 10;
  return c;
}

}  // namespace

TEST_SUITE("speaker_net") {
  TEST_CASE("frame_encode preserves the frame count") {
    SpeakerModel model(EcapaLiteConfig{}, AamConfig{}, kTwoClasses, 1);
    std::mt19937_64 rng(1);
    for (Index t : {1, 98, 200}) {
      Matrix f = random_matrix(t, 20, rng);
      Tape tape;
      Var x = tape.constant(model.prepare(f));
      const std::vector<Index> lengths{t};
      Var m = model.frame_encode(tape, x, lengths, Context{});
      CHECK(m.rows() == 96);
      CHECK(m.cols() == t);
    }
  }

  TEST_CASE("embeddings of an untrained model are finite with width D") {
    SpeakerModel model(EcapaLiteConfig{}, AamConfig{}, kTwoClasses, 2);
    std::mt19937_64 rng(2);
    Matrix f = random_matrix(60, 20, rng);
    Vector e = model.embed(f);
    CHECK(e.size() == 64);
    CHECK(e.allFinite());
    CHECK((model.embed(f) - e).norm() == 0.0);
  }

  TEST_CASE("zeroed residual blocks pass their input through") {
    // With zero block weights every block output equals the stem output, so
    // the MFA input is [h; h; h] and any split of the 1x1 projection across
    // the three copies gives the same result.
    EcapaLiteConfig cfg = tiny_config();
    cfg.dilations = {2, 3, 4};
    SpeakerModel a(cfg, AamConfig{}, kTwoClasses, 5);
    SpeakerModel b(cfg, AamConfig{}, kTwoClasses, 5);
    for (SpeakerModel* m : {&a, &b}) {
      for (const Conv1d& c : m->block_convs()) {
        c.weight().value.setZero();
        c.bias().value.setZero();
      }
    }
    Matrix& w = b.params().get("mfa.conv.weight").value;
    const Index s = cfg.stem_channels;
    Matrix summed = w.leftCols(s) + w.middleCols(s, s) + w.rightCols(s);
    w.setZero();
    w.rightCols(s) = summed;
    std::mt19937_64 rng(3);
    Matrix f = random_matrix(9, cfg.n_coeffs, rng);
    const std::vector<Index> lengths{9};
    Tape tape;
    Matrix ma = a.frame_encode(tape, tape.constant(a.prepare(f)), lengths,
                               Context{}).value();
    Matrix mb = b.frame_encode(tape, tape.constant(b.prepare(f)), lengths,
                               Context{}).value();
    CHECK((ma - mb).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("gradient through the trunk and head on a tiny model") {
    for (PoolingKind kind : {PoolingKind::kAsp, PoolingKind::kAspSwasp}) {
      SpeakerModel model(tiny_config(kind), AamConfig{0.2, 5.0}, kTwoClasses,
                         11);
      std::mt19937_64 rng(4);
      Matrix f1 = random_matrix(7, 4, rng);
      Matrix f2 = random_matrix(5, 4, rng);
      const std::vector<int> labels{0, 1};
      const Context ctx{Mode::kTrain, false};
      auto f = [&](Tape& tape) {
        return model.loss(tape, {&f1, &f2}, labels, ctx);
      };
      CHECK(check_parameters(f, model.params().trainable()) < kGradTol);
    }
  }

  TEST_CASE("frame_encode gradient with respect to its input") {
    SpeakerModel model(tiny_config(), AamConfig{}, kTwoClasses, 12);
    std::mt19937_64 rng(6);
    const std::vector<Index> lengths{6, 4};
    for (int rep = 0; rep < 5; ++rep) {
      auto f = [&](Tape& tape, const std::vector<Var>& in) {
        return project(model.frame_encode(tape, in[0], lengths,
                                          Context{Mode::kTrain, false}));
      };
      CHECK(check_leaves(f, {random_matrix(4, 10, rng)}) < kGradTol);
    }
  }

  TEST_CASE("AAM without margin and scale is cosine-logit cross-entropy") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
      Matrix e = random_matrix(6, 5, rng);
      Matrix w = random_matrix(4, 5, rng);
      const std::vector<int> y{0, 3, 1, 2, 2, 0};
      CHECK(aam_value(e, w, y, AamConfig{0.0, 1.0}) ==
            doctest::Approx(ref_cosine_ce(e, w, y)).epsilon(1e-10));
      CHECK(std::abs(aam_value(e, w, y, AamConfig{0.0, 1.0}) -
                     ref_cosine_ce(e, w, y)) <= 1e-10);
    }
  }

  TEST_CASE("AAM loss never decreases as the margin grows") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
      Matrix e = random_matrix(5, 4, rng);
      Matrix w = random_matrix(3, 4, rng);
      const std::vector<int> y{0, 1, 2, 1, 0};
      double prev = -1.0;
      for (double m : {0.0, 0.1, 0.2, 0.3}) {
        const double v = aam_value(e, w, y, AamConfig{m, 30.0});
        CHECK(v >= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("AAM gradient") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 5; ++rep) {
      const std::vector<int> y{0, 2, 1, 2};
      auto f = [&](Tape&, const std::vector<Var>& in) {
        return aam_softmax_loss(in[0], y, in[1], AamConfig{0.2, 4.0});
      };
      CHECK(check_leaves(f, {random_matrix(4, 3, rng),
                             random_matrix(3, 3, rng)}) < kGradTol);
    }
  }

  TEST_CASE("AAM rejects out-of-range labels") {
    Tape tape;
    Var e = tape.constant(Matrix::Ones(2, 3));
    Var w = tape.constant(Matrix::Identity(3, 3));
    const std::vector<int> bad{0, 3};
    const std::vector<int> negative{-1, 0};
    CHECK_THROWS_AS(aam_softmax_loss(e, bad, w, AamConfig{}), ContractError);
    CHECK_THROWS_AS(aam_softmax_loss(e, negative, w, AamConfig{}),
                    ContractError);
    CHECK_THROWS_AS((AamConfig{1.6, 30.0}.validate()), ContractError);
    CHECK_THROWS_AS((AamConfig{0.2, 0.0}.validate()), ContractError);
  }

  TEST_CASE("ASP head ignores frame order; the sliding-window head does not") {
    std::mt19937_64 rng(10);
    Matrix m = random_matrix(8, 24, rng);
    std::vector<Index> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(8, 24);
    for (Index j = 0; j < 24; ++j) shuffled.col(j) = m.col(perm[static_cast<std::size_t>(j)]);

    auto pooled = [](const SpeakerModel& model, const Matrix& x) {
      Tape tape;
      return Matrix(model.pooling()(tape, tape.constant(x)).value());
    };
    SpeakerModel asp(tiny_config(PoolingKind::kAsp), AamConfig{}, kTwoClasses,
                     13);
    CHECK((pooled(asp, m) - pooled(asp, shuffled)).norm() <= 1e-8);
    SpeakerModel sw(tiny_config(PoolingKind::kAspSwasp), AamConfig{},
                    kTwoClasses, 13);
    CHECK((pooled(sw, m) - pooled(sw, shuffled)).norm() > 1e-6);
  }

  TEST_CASE("checkpoint round trip preserves every value") {
    SpeakerModel model(tiny_config(PoolingKind::kAspSwasp), AamConfig{0.3, 20.0},
                       kTwoClasses, 14);
    model.params().get("input.mean").value.setConstant(0.25);
    SpeakerModel back = SpeakerModel::from_json(model.to_json());
    CHECK(back.classes() == model.classes());
    CHECK(back.aam().margin == 0.3);
    CHECK(back.config().dilations == model.config().dilations);
    const auto a = model.params().all();
    const auto b = back.params().all();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      CHECK((a[i]->value.array() == b[i]->value.array()).all());
    }
  }

  TEST_CASE("config parsing rejects unknown keys") {
    nlohmann::json j = to_json(EcapaLiteConfig{});
    CHECK(ecapa_config_from_json(j).channels == 96);
    j["chanels"] = 4;
    CHECK_THROWS(ecapa_config_from_json(j));
    CHECK_THROWS(aam_config_from_json({{"margin", 0.2}, {"scale", 30}, {"x", 1}}));
  }

  TEST_CASE("learning rate follows the per-epoch decay") {
    const LabeledSet labels = toy_labels();
    SpeakerModel model(toy_model_config(), AamConfig{}, labels.classes, 1);
    model.fit_input_normalization(toy_data().train);
    SpeakerTrainer trainer(model, toy_data().train, labels.labels,
                           toy_train_config(1));
    for (int e = 0; e < 2; ++e) {
      const EpochRecord r = trainer.run_epoch();
      CHECK(r.epoch == e);
      CHECK(r.lr == doctest::Approx(0.001 * std::pow(0.97, e)).epsilon(1e-15));
    }
  }

  TEST_CASE("one epoch lowers the training loss (median of 3 seeds)") {
    const LabeledSet labels = toy_labels();
    std::vector<double> deltas;
    for (std::uint64_t seed : {1, 2, 3}) {
      SpeakerModel model(toy_model_config(), AamConfig{}, labels.classes, seed);
      model.fit_input_normalization(toy_data().train);
      SpeakerTrainer trainer(model, toy_data().train, labels.labels,
                             toy_train_config(seed));
      const double before = trainer.evaluate_loss();
      trainer.run_epoch();
      deltas.push_back(trainer.evaluate_loss() - before);
    }
    CHECK(median(deltas) < 0.0);
  }

  TEST_CASE("training is deterministic and resumes bit-exactly") {
    const LabeledSet labels = toy_labels();
    auto fresh = [&] {
      SpeakerModel m(toy_model_config(), AamConfig{}, labels.classes, 4);
      m.fit_input_normalization(toy_data().train);
      return m;
    };
    SpeakerModel a = fresh();
    SpeakerModel b = fresh();
    SpeakerTrainer ta(a, toy_data().train, labels.labels, toy_train_config(4));
    SpeakerTrainer tb(b, toy_data().train, labels.labels, toy_train_config(4));
    ta.run_epoch();
    tb.run_epoch();
    const auto pa = a.params().all();
    const auto pb = b.params().all();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK((pa[i]->value.array() == pb[i]->value.array()).all());
    }

    const nlohmann::json model_ckpt = a.to_json();
    const nlohmann::json state = ta.state();
    const double continued = ta.run_epoch().loss;

    SpeakerModel c = SpeakerModel::from_json(model_ckpt);
    SpeakerTrainer tc(c, toy_data().train, labels.labels, toy_train_config(4));
    tc.load_state(state);
    const EpochRecord resumed = tc.run_epoch();
    CHECK(resumed.epoch == 1);
    CHECK(resumed.loss == continued);
  }

  TEST_CASE("training rejects an empty feature set") {
    SpeakerModel model(tiny_config(), AamConfig{}, kTwoClasses, 1);
    const std::vector<FeatureMatrix> none;
    CHECK_THROWS(SpeakerTrainer(model, none, {}, toy_train_config(1)));
  }
}
