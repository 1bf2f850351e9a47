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

#include "digitsv/error.hpp"
#include "digitsv/pooling.hpp"
#include "gradcheck.hpp"

using namespace digitsv;
using digitsv::testing::check_leaves;
using digitsv::testing::check_parameters;
using digitsv::testing::kGradTol;
using digitsv::testing::project;
using digitsv::testing::random_matrix;

namespace {

Matrix eval_matrix(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value();
}

std::vector<Parameter*> all_params(ParameterStore& store) {
  std::vector<Parameter*> out;
  for (Parameter* p : store.trainable()) out.push_back(p);
  return out;
}

// Reference ASP in scalar loops.
struct RefStats {
  Vector mean, var;
  Matrix alpha;
};

RefStats ref_attend(const Matrix& x, const Matrix& w1, const Matrix& b1,
                    const Matrix& w2, const Matrix& b2) {
  const Index c = x.rows(), t = x.cols(), h = w1.rows();
  Matrix score(c, t);
  for (Index j = 0; j < t; ++j) {
    std::vector<double> hid(static_cast<std::size_t>(h));
    for (Index r = 0; r < h; ++r) {
      double acc = b1(r, 0);
      for (Index k = 0; k < c; ++k) acc += w1(r, k) * x(k, j);
      hid[static_cast<std::size_t>(r)] = std::tanh(acc);
    }
    for (Index i = 0; i < c; ++i) {
      double acc = b2(i, 0);
      for (Index r = 0; r < h; ++r) acc += w2(i, r) * hid[static_cast<std::size_t>(r)];
      score(i, j) = acc;
    }
  }
  RefStats out{Vector(c), Vector(c), Matrix(c, t)};
  for (Index i = 0; i < c; ++i) {
    double mx = score(i, 0);
    for (Index j = 1; j < t; ++j) mx = std::max(mx, score(i, j));
    double z = 0.0;
    for (Index j = 0; j < t; ++j) z += std::exp(score(i, j) - mx);
    double m = 0.0, s = 0.0;
    for (Index j = 0; j < t; ++j) {
      const double a = std::exp(score(i, j) - mx) / z;
      out.alpha(i, j) = a;
      m += a * x(i, j);
      s += a * x(i, j) * x(i, j);
    }
    out.mean(i) = m;
    out.var(i) = s - m * m;
  }
  return out;
}

Matrix permute_columns(const Matrix& x, const std::vector<Index>& perm) {
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    out.col(j) = x.col(perm[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace

TEST_CASE("scaled_dot_attention examples") {
  Rng rng(1);
  Tape tape;
  const Matrix v = random_matrix(1, 3, rng);
  Var one = scaled_dot_attention(tape.constant(random_matrix(1, 3, rng)),
                                 tape.constant(random_matrix(1, 3, rng)),
                                 tape.constant(v));
  CHECK((one.value() - v).cwiseAbs().maxCoeff() <= 1e-15);

  const Matrix vv = random_matrix(5, 3, rng);
  Var flat = scaled_dot_attention(tape.constant(Matrix::Zero(5, 3)),
                                  tape.constant(random_matrix(5, 3, rng)),
                                  tape.constant(vv));
  const RowVector colmean = vv.colwise().mean();
  for (Index i = 0; i < 5; ++i) {
    CHECK((flat.value().row(i) - colmean).cwiseAbs().maxCoeff() <= 1e-14);
  }

  // 3 x 2 case evaluated term by term.
  const Matrix q = random_matrix(3, 2, rng), k = random_matrix(3, 2, rng),
               w = random_matrix(3, 2, rng);
  Var out = scaled_dot_attention(tape.constant(q), tape.constant(k),
                                 tape.constant(w));
  for (Index i = 0; i < 3; ++i) {
    double e[3], z = 0.0;
    for (Index j = 0; j < 3; ++j) {
      e[j] = std::exp((q(i, 0) * k(j, 0) + q(i, 1) * k(j, 1)) / std::sqrt(2.0));
      z += e[j];
    }
    for (Index c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (Index j = 0; j < 3; ++j) acc += e[j] / z * w(j, c);
      CHECK(std::abs(out.value()(i, c) - acc) <= 1e-14);
    }
  }
  CHECK_THROWS_AS(scaled_dot_attention(tape.constant(q),
                                       tape.constant(random_matrix(3, 3, rng)),
                                       tape.constant(w)),
                  DimensionError);
}

TEST_CASE("attend_stats examples") {
  Rng rng(2);
  Tape tape;
  auto c = [&tape](const Matrix& m) { return tape.constant(m); };

  SUBCASE("single frame") {
    const Matrix x = random_matrix(4, 1, rng);
    PooledStats st = attend_stats(c(x), c(random_matrix(3, 4, rng)),
                                  c(random_matrix(3, 1, rng)),
                                  c(random_matrix(4, 3, rng)),
                                  c(random_matrix(4, 1, rng)));
    CHECK((st.mean.value() - x).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(st.stddev.value().maxCoeff() <= 1e-4);
  }
  SUBCASE("zero attention parameters give plain moments") {
    for (Index t : {2, 5, 31}) {
      const Matrix x = random_matrix(6, t, rng, -3.0, 3.0);
      PooledStats st = attend_stats(c(x), c(Matrix::Zero(4, 6)),
                                    c(Matrix::Zero(4, 1)),
                                    c(Matrix::Zero(6, 4)),
                                    c(Matrix::Zero(6, 1)));
      const Vector mean = x.rowwise().mean();
      const Vector var =
          (x.colwise() - mean).array().square().rowwise().mean();
      CHECK((st.mean.value() - mean).cwiseAbs().maxCoeff() <= 1e-10);
      const Vector s2 = st.stddev.value().array().square() - kStdFloor;
      CHECK((s2 - var).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("hand-sized case against scalar loops") {
    const Matrix x{{0.5, -1.25}, {2.0, 0.75}};
    const Matrix w1{{0.3, -0.2}, {0.1, 0.4}, {-0.5, 0.25}};
    const Matrix b1{{0.05}, {-0.1}, {0.2}};
    const Matrix w2{{0.7, -0.3, 0.2}, {-0.4, 0.6, 0.1}};
    const Matrix b2{{0.01}, {-0.02}};
    PooledStats st = attend_stats(c(x), c(w1), c(b1), c(w2), c(b2));
    const RefStats ref = ref_attend(x, w1, b1, w2, b2);
    CHECK((st.mean.value() - ref.mean).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((st.weights.value() - ref.alpha).cwiseAbs().maxCoeff() <= 1e-12);
    const Vector sd = (ref.var.array().max(0.0) + kStdFloor).sqrt();
    CHECK((st.stddev.value() - sd).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("attention weights are row-stochastic and variance stays sane") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index ch = 1 + static_cast<Index>(rng() % 6);
    const Index t = 1 + static_cast<Index>(rng() % 40);
    ParameterStore store;
    AttentiveStatsPooling asp(store, "asp", ch, 8, rng);
    for (Parameter* p : store.trainable()) {
      p->value = random_matrix(p->value.rows(), p->value.cols(), rng, -2, 2);
    }
    const Matrix x = random_matrix(ch, t, rng, -4.0, 4.0);
    Tape tape;
    PooledStats st = asp(tape, tape.constant(x));
    const Vector rows = st.weights.value().rowwise().sum();
    CHECK((rows.array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(st.stddev.value().minCoeff() >= 0.0);
    const RefStats ref = ref_attend(x, asp.w1().value, asp.b1().value,
                                    asp.w2().value, asp.b2().value);
    CHECK(ref.var.minCoeff() >= -1e-9);
  }
}

TEST_CASE("multi-head pooling shape and degenerate configuration") {
  Rng rng(4);
  ParameterStore store;
  MultiHeadStatsPooling mh(store, "mh", 6, MultiHeadConfig{2, 3, 5}, rng);
  for (Index t : {1, 7, 50}) {
    const Matrix out = eval_matrix([&](Tape& tape) {
      return mh(tape, tape.constant(random_matrix(6, t, rng)));
    });
    CHECK(out.rows() == 6);
    CHECK(out.cols() == 1);
    CHECK(out.allFinite());
  }

  // One head, zero query/key maps (uniform attention), identity values and
  // zero statistics parameters: every attended frame is the frame mean, so
  // the output is the projection of [mean(X); sqrt(floor)].
  ParameterStore s1;
  MultiHeadStatsPooling one(s1, "one", 4, MultiHeadConfig{1, 4, 3}, rng);
  for (Parameter* p : s1.trainable()) p->value.setZero();
  one.values()[0].weight().value.setIdentity();
  const Matrix proj = random_matrix(4, 8, rng);
  one.projection().weight().value = proj;
  const Matrix x = random_matrix(4, 9, rng);
  const Matrix out =
      eval_matrix([&](Tape& tape) { return one(tape, tape.constant(x)); });
  Vector stats(8);
  stats << x.rowwise().mean(), Vector::Constant(4, std::sqrt(kStdFloor));
  CHECK((out - proj * stats).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("segment_windows examples") {
  auto starts = [](Index t, Index w, Index s) {
    std::vector<Index> out;
    for (const Window& win : segment_windows(t, w, s)) out.push_back(win.start);
    return out;
  };
  CHECK(starts(200, 50, 25) ==
        std::vector<Index>{0, 25, 50, 75, 100, 125, 150});
  for (const Window& w : segment_windows(200, 50, 25)) CHECK(w.length == 50);
  CHECK(segment_windows(50, 50, 25) == std::vector<Window>{{0, 50}});
  CHECK(segment_windows(60, 50, 25) == std::vector<Window>{{0, 50}, {10, 50}});
  CHECK(segment_windows(3, 10, 4) == std::vector<Window>{{0, 3}});
  CHECK_THROWS_AS(segment_windows(0, 5, 5), DimensionError);
  CHECK_THROWS_AS(segment_windows(10, 0, 5), ContractError);
  CHECK_THROWS_AS(segment_windows(10, 5, 0), ContractError);
}

TEST_CASE("segment_windows count sweep") {
  for (Index t = 1; t <= 64; ++t) {
    for (Index w = 1; w <= 16; ++w) {
      for (Index s = 1; s <= 16; ++s) {
        const auto wins = segment_windows(t, w, s);
        const Index we = std::min(w, t);
        const Index regular = (t - we) / s + 1;
        const bool tail = (regular - 1) * s + we < t;
        REQUIRE(static_cast<Index>(wins.size()) == regular + (tail ? 1 : 0));
        std::vector<int> covered(static_cast<std::size_t>(t), 0);
        for (const Window& win : wins) {
          REQUIRE(win.length == we);
          REQUIRE(win.start >= 0);
          REQUIRE(win.start + win.length <= t);
          for (Index k = win.start; k < win.start + win.length; ++k) {
            covered[static_cast<std::size_t>(k)] = 1;
          }
        }
        // Gaps are expected only when the stride skips past the window.
        if (s <= w) {
          REQUIRE(std::all_of(covered.begin(), covered.end(),
                              [](int c) { return c == 1; }));
        }
      }
    }
  }
}

TEST_CASE("sliding-window pooling shapes") {
  Rng rng(5);
  for (const auto& [t, w, s] : std::vector<std::array<int, 3>>{
           {1, 4, 2}, {8, 4, 4}, {13, 5, 3}, {40, 50, 25}, {64, 16, 7}}) {
    ParameterStore store;
    SwaspConfig cfg;
    cfg.window = w;
    cfg.stride = s;
    cfg.inner = cfg.outer = MultiHeadConfig{2, 3, 4};
    SlidingWindowPooling sw(store, "sw", 5, cfg, rng);
    const Matrix out = eval_matrix([&](Tape& tape) {
      return sw(tape, tape.constant(random_matrix(5, t, rng)));
    });
    CHECK(out.rows() == 5);
    CHECK(out.cols() == 1);
    CHECK(out.allFinite());
  }
}

TEST_CASE("permutation contract") {
  Rng rng(6);
  PoolingConfig asp_cfg;
  asp_cfg.kind = PoolingKind::kAsp;
  PoolingConfig sw_cfg;
  sw_cfg.kind = PoolingKind::kSwasp;
  sw_cfg.window = 4;
  sw_cfg.stride = 4;
  sw_cfg.head_dim = 2;
  sw_cfg.hidden = 4;
  ParameterStore s_asp, s_sw;
  PoolingHead asp(s_asp, "p", 4, asp_cfg, rng);
  PoolingHead sw(s_sw, "p", 4, sw_cfg, rng);

  std::vector<Index> half_swap{4, 5, 6, 7, 0, 1, 2, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(4, 8, rng);
    auto run = [&](const PoolingHead& head, const Matrix& in) {
      return eval_matrix([&](Tape& tape) { return head(tape, tape.constant(in)); });
    };
    std::vector<Index> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK((run(asp, x) - run(asp, permute_columns(x, perm))).norm() <= 1e-10);
    CHECK((run(asp, x) - run(asp, permute_columns(x, half_swap))).norm() <=
          1e-10);
    CHECK((run(sw, x) - run(sw, permute_columns(x, half_swap))).norm() > 1e-6);
  }

  // A permutation that moves frames between windows changes the output even
  // without the window-index code.
  sw_cfg.window_position = false;
  ParameterStore s_plain;
  PoolingHead plain(s_plain, "p", 4, sw_cfg, rng);
  const Matrix x = random_matrix(4, 8, rng);
  std::vector<Index> cross{0, 1, 2, 4, 3, 5, 6, 7};
  auto out = [&](const Matrix& in) {
    return eval_matrix([&](Tape& tape) { return plain(tape, tape.constant(in)); });
  };
  CHECK((out(x) - out(permute_columns(x, cross))).norm() > 1e-6);
  // Whole-window swaps are invisible to it, which is what the code is for.
  CHECK((out(x) - out(permute_columns(x, half_swap))).norm() <= 1e-10);
}

TEST_CASE("multi-scale pooling output width and branch isolation") {
  Rng rng(7);
  for (Index ch : {4, 96, 1536}) {
    PoolingConfig cfg;
    cfg.window = 3;
    cfg.stride = 2;
    ParameterStore store;
    PoolingHead head(store, "pool", ch, cfg, rng);
    CHECK(head.output_dim() == 3 * ch);
    const Matrix out = eval_matrix([&](Tape& tape) {
      return head(tape, tape.constant(random_matrix(ch, 5, rng)));
    });
    CHECK(out.rows() == 3 * ch);
  }

  PoolingConfig cfg;
  cfg.window = 4;
  cfg.stride = 2;
  ParameterStore store;
  PoolingHead head(store, "pool", 6, cfg, rng);
  head.swasp()->outer().projection().weight().value.setZero();
  const Matrix x = random_matrix(6, 11, rng);
  const Matrix out =
      eval_matrix([&](Tape& tape) { return head(tape, tape.constant(x)); });
  const RefStats ref =
      ref_attend(x, head.asp()->w1().value, head.asp()->b1().value,
                 head.asp()->w2().value, head.asp()->b2().value);
  CHECK((out.topRows(6) - ref.mean).cwiseAbs().maxCoeff() <= 1e-12);
  const Vector sd = (ref.var.array().max(0.0) + kStdFloor).sqrt();
  CHECK((out.middleRows(6, 6) - sd).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(out.bottomRows(6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multi-scale pooling sends gradient to both branches") {
  Rng rng(8);
  PoolingConfig cfg;
  cfg.window = 4;
  cfg.stride = 3;
  ParameterStore store;
  PoolingHead head(store, "pool", 5, cfg, rng);
  const Matrix x = random_matrix(5, 12, rng);
  Tape tape;
  tape.backward(project(head(tape, tape.constant(x))));
  CHECK(head.asp()->w1().grad.norm() > 0.0);
  CHECK(head.swasp()->inner().queries()[0].weight().grad.norm() > 0.0);
  CHECK(head.swasp()->outer().projection().weight().grad.norm() > 0.0);
}

TEST_CASE("gradient suite: pooling") {
  Rng rng(9);
  for (int inst = 0; inst < 5; ++inst) {
    const Index ch = 2 + inst % 3;
    const Index t = 3 + inst;
    CHECK(check_leaves([](Tape&, const std::vector<Var>& v) {
            return project(scaled_dot_attention(v[0], v[1], v[2]));
          }, {random_matrix(t, 3, rng), random_matrix(t, 3, rng),
              random_matrix(t, 3, rng)}) < kGradTol);
    Matrix mask = random_matrix(t - 1, t, rng);
    mask(0, t - 1) = -1e30;
    CHECK(check_leaves([&mask](Tape& tape, const std::vector<Var>& v) {
            return project(scaled_dot_attention(v[0], v[1], v[2],
                                                tape.constant(mask)));
          }, {random_matrix(t - 1, 2, rng), random_matrix(t, 2, rng),
              random_matrix(t, 4, rng)}) < kGradTol);
    CHECK(check_leaves([](Tape&, const std::vector<Var>& v) {
            PooledStats st = attend_stats(v[0], v[1], v[2], v[3], v[4]);
            return ops::add(project(st.mean, 1), project(st.stddev, 2));
          }, {random_matrix(ch, t, rng), random_matrix(4, ch, rng),
              random_matrix(4, 1, rng), random_matrix(ch, 4, rng),
              random_matrix(ch, 1, rng)}) < kGradTol);

    ParameterStore store;
    MultiHeadStatsPooling mh(store, "mh", ch, MultiHeadConfig{2, 2, 3}, rng);
    const Matrix x = random_matrix(ch, t, rng);
    CHECK(check_parameters([&](Tape& tape) {
            return project(mh(tape, tape.constant(x)));
          }, all_params(store)) < kGradTol);
    CHECK(check_leaves([&](Tape& tape, const std::vector<Var>& v) {
            return project(mh(tape, v[0]));
          }, {x}) < kGradTol);

    for (PoolingKind kind : {PoolingKind::kSwasp, PoolingKind::kAspSwasp,
                             PoolingKind::kAll}) {
      PoolingConfig cfg;
      cfg.kind = kind;
      cfg.window = 3;
      cfg.stride = 2;
      cfg.head_dim = 2;
      cfg.hidden = 3;
      ParameterStore ps;
      PoolingHead head(ps, "pool", ch, cfg, rng);
      CHECK(check_parameters([&](Tape& tape) {
              return project(head(tape, tape.constant(x)));
            }, all_params(ps)) < kGradTol);
      CHECK(check_leaves([&](Tape& tape, const std::vector<Var>& v) {
              return project(head(tape, v[0]));
            }, {x}) < kGradTol);
    }
  }
}

TEST_CASE("pooling config serialization") {
  for (const char* k : {"asp", "mhasp", "swasp", "asp+swasp", "mhasp+swasp",
                        "asp+mhasp+swasp"}) {
    CHECK(to_string(pooling_kind_from_string(k)) == k);
  }
  PoolingConfig c;
  c.kind = PoolingKind::kMhaspSwasp;
  c.window = 30;
  c.stride = 10;
  c.heads = 4;
  c.shared_outer = true;
  const PoolingConfig back = pooling_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(c.output_dim(96) == 192);
  CHECK_THROWS_AS(pooling_kind_from_string("max"), ContractError);
  CHECK_THROWS_AS(pooling_config_from_json({{"kind", "asp"}, {"extra", 1}}),
                  ContractError);
  CHECK_THROWS_AS(pooling_config_from_json({{"w", 0}}), ContractError);

  Rng rng(10);
  ParameterStore shared;
  c.heads = 1;
  PoolingHead head(shared, "pool", 4, c, rng);
  CHECK(&head.swasp()->outer() == &head.swasp()->inner());
}
