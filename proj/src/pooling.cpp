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

#include "digitsv/pooling.hpp"

#include <cmath>

#include "digitsv/error.hpp"
#include "digitsv/kernels.hpp"

namespace digitsv {

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v,
                         const Var& mask) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("attention: Q/K/V shapes disagree");
  }
  if (mask.valid() &&
      (mask.rows() != q.rows() || mask.cols() != k.rows())) {
    throw DimensionError("attention: mask must be T_q x T_k");
  }
  if (mask.valid() && mask.requires_grad()) {
    throw ContractError("attention: the mask must be a constant");
  }
  Tape& tape = *q.tape();
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix s = (q.value() * k.value().transpose()) * inv;
  if (mask.valid()) s += mask.value();
  Matrix p = kernels::softmax(s, 1);
  Matrix out = p * v.value();
  return tape.record(
      "scaled_dot_attention", std::move(out), {q, k, v},
      [q, k, v, p = std::move(p), inv](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(v)) tp.accumulate(v, p.transpose() * g);
        if (!tp.needs_grad(q) && !tp.needs_grad(k)) return;
        const Matrix ds =
            kernels::softmax_backward(p, g * v.value().transpose(), 1) * inv;
        if (tp.needs_grad(q)) tp.accumulate(q, ds * k.value());
        if (tp.needs_grad(k)) tp.accumulate(k, ds.transpose() * q.value());
      });
}

PooledStats attend_stats(const Var& x, const Var& w1, const Var& b1,
                         const Var& w2, const Var& b2) {
  if (x.cols() < 1) throw DimensionError("attend_stats: no frames");
  Var hidden = ops::tanh(ops::add(ops::matmul(w1, x), b1));
  Var scores = ops::add(ops::matmul(w2, hidden), b2);
  Var alpha = ops::softmax(scores, 1);
  Var mean = ops::sum(ops::mul(alpha, x), 1);
  Var second = ops::sum(ops::mul(alpha, ops::mul(x, x)), 1);
  Var var = ops::sub(second, ops::mul(mean, mean));
  Var stddev = ops::sqrt(ops::add_scalar(ops::relu(var), kStdFloor));
  return {mean, stddev, alpha};
}

AttentiveStatsPooling::AttentiveStatsPooling(ParameterStore& store,
                                             const std::string& name,
                                             Index channels, Index hidden,
                                             Rng& rng)
    : channels_(channels) {
  w1_ = &store.create(name + ".w1", {hidden, channels}, hidden, channels);
  b1_ = &store.create(name + ".b1", {hidden}, hidden, 1);
  w2_ = &store.create(name + ".w2", {channels, hidden}, channels, hidden);
  b2_ = &store.create(name + ".b2", {channels}, channels, 1);
  xavier_uniform(*w1_, channels, hidden, rng);
  xavier_uniform(*w2_, hidden, channels, rng);
}

PooledStats AttentiveStatsPooling::operator()(Tape& tape, const Var& x) const {
  if (x.rows() != channels_) {
    throw DimensionError("ASP expects " + std::to_string(channels_) +
                         " channels, got " + std::to_string(x.rows()));
  }
  return attend_stats(x, tape.param(*w1_), tape.param(*b1_), tape.param(*w2_),
                      tape.param(*b2_));
}

MultiHeadStatsPooling::MultiHeadStatsPooling(ParameterStore& store,
                                             const std::string& name,
                                             Index channels,
                                             const MultiHeadConfig& cfg,
                                             Rng& rng) {
  if (cfg.heads < 1 || cfg.head_dim < 1 || cfg.hidden < 1) {
    throw ContractError("MHASP needs heads, head_dim and hidden >= 1");
  }
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string p = name + ".head" + std::to_string(h);
    q_.emplace_back(store, p + ".query", channels, cfg.head_dim, true, rng);
    k_.emplace_back(store, p + ".key", channels, cfg.head_dim, true, rng);
    v_.emplace_back(store, p + ".value", channels, cfg.head_dim, true, rng);
  }
  const Index width = static_cast<Index>(cfg.heads) * cfg.head_dim;
  asp_ = AttentiveStatsPooling(store, name + ".stats", width, cfg.hidden, rng);
  proj_ = Linear(store, name + ".proj", 2 * width, channels, false, rng);
}

Var MultiHeadStatsPooling::operator()(Tape& tape, const Var& x) const {
  Var frames = ops::transpose(x);  // T x C
  std::vector<Var> heads;
  heads.reserve(q_.size());
  for (std::size_t h = 0; h < q_.size(); ++h) {
    heads.push_back(scaled_dot_attention(q_[h](tape, frames),
                                         k_[h](tape, frames),
                                         v_[h](tape, frames)));
  }
  Var attended = heads.size() == 1 ? heads.front() : ops::concat(heads, 1);
  PooledStats st = asp_(tape, ops::transpose(attended));
  Var stats = ops::concat({st.mean, st.stddev}, 0);  // 2C' x 1
  return ops::transpose(proj_(tape, ops::transpose(stats)));
}

std::vector<Window> segment_windows(Index frames, Index window, Index stride) {
  if (frames < 1) throw DimensionError("segment_windows: no frames");
  if (window < 1 || stride < 1) {
    throw ContractError("segment_windows: window and stride must be >= 1");
  }
  const Index w = std::min(window, frames);
  std::vector<Window> out;
  Index start = 0;
  for (; start + w <= frames; start += stride) out.push_back({start, w});
  if (out.back().start + w < frames) out.push_back({frames - w, w});
  return out;
}

SlidingWindowPooling::SlidingWindowPooling(ParameterStore& store,
                                           const std::string& name,
                                           Index channels,
                                           const SwaspConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  inner_ = MultiHeadStatsPooling(store, name + ".inner", channels, cfg.inner,
                                 rng);
  if (!cfg.shared_outer) {
    outer_ = MultiHeadStatsPooling(store, name + ".outer", channels, cfg.outer,
                                   rng);
  }
}

Var SlidingWindowPooling::operator()(Tape& tape, const Var& x) const {
  const auto windows = segment_windows(x.cols(), cfg_.window, cfg_.stride);
  std::vector<Var> pooled;
  pooled.reserve(windows.size());
  for (const Window& w : windows) {
    Var seg = w.length == x.cols()
                  ? x
                  : ops::slice(x, 1, w.start, w.start + w.length);
    pooled.push_back(inner_(tape, seg));
  }
  Var seq = pooled.size() == 1 ? pooled.front() : ops::concat(pooled, 1);
  if (cfg_.window_position) {
    Matrix code = sinusoidal_encoding(seq.cols(), seq.rows()).transpose();
    seq = ops::add(seq, tape.constant(std::move(code)));
  }
  return outer()(tape, seq);
}

std::string to_string(PoolingKind k) {
  switch (k) {
    case PoolingKind::kAsp:
      return "asp";
    case PoolingKind::kMhasp:
      return "mhasp";
    case PoolingKind::kSwasp:
      return "swasp";
    case PoolingKind::kAspSwasp:
      return "asp+swasp";
    case PoolingKind::kMhaspSwasp:
      return "mhasp+swasp";
    case PoolingKind::kAll:
      return "asp+mhasp+swasp";
  }
  return "?";
}

PoolingKind pooling_kind_from_string(const std::string& s) {
  for (PoolingKind k :
       {PoolingKind::kAsp, PoolingKind::kMhasp, PoolingKind::kSwasp,
        PoolingKind::kAspSwasp, PoolingKind::kMhaspSwasp, PoolingKind::kAll}) {
    if (to_string(k) == s) return k;
  }
  throw ContractError("unknown pooling kind '" + s + "'");
}

bool PoolingConfig::has_asp() const {
  return kind == PoolingKind::kAsp || kind == PoolingKind::kAspSwasp ||
         kind == PoolingKind::kAll;
}

bool PoolingConfig::has_mhasp() const {
  return kind == PoolingKind::kMhasp || kind == PoolingKind::kMhaspSwasp ||
         kind == PoolingKind::kAll;
}

bool PoolingConfig::has_swasp() const {
  return kind != PoolingKind::kAsp && kind != PoolingKind::kMhasp;
}

Index PoolingConfig::output_dim(Index channels) const {
  Index d = 0;
  if (has_asp()) d += 2 * channels;
  if (has_mhasp()) d += channels;
  if (has_swasp()) d += channels;
  return d;
}

MultiHeadConfig PoolingConfig::multi_head() const {
  return MultiHeadConfig{heads, head_dim, hidden};
}

SwaspConfig PoolingConfig::swasp() const {
  return SwaspConfig{window,       stride,      multi_head(),
                     multi_head(), shared_outer, window_position};
}

void PoolingConfig::validate() const {
  if (window < 1 || stride < 1) {
    throw ContractError("pooling: window and stride must be >= 1");
  }
  if (heads < 1 || head_dim < 1 || hidden < 1) {
    throw ContractError("pooling: heads, head_dim and hidden must be >= 1");
  }
}

nlohmann::json to_json(const PoolingConfig& c) {
  return {{"kind", to_string(c.kind)}, {"w", c.window},
          {"s", c.stride},             {"heads", c.heads},
          {"head_dim", c.head_dim},    {"hidden", c.hidden},
          {"shared_outer", c.shared_outer},
          {"window_position", c.window_position}};
}

PoolingConfig pooling_config_from_json(const nlohmann::json& j) {
  PoolingConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") c.kind = pooling_kind_from_string(value.get<std::string>());
    else if (key == "w") c.window = value.get<int>();
    else if (key == "s") c.stride = value.get<int>();
    else if (key == "heads") c.heads = value.get<int>();
    else if (key == "head_dim") c.head_dim = value.get<int>();
    else if (key == "hidden") c.hidden = value.get<int>();
    else if (key == "shared_outer") c.shared_outer = value.get<bool>();
    else if (key == "window_position") c.window_position = value.get<bool>();
    else throw ContractError("pooling: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

PoolingHead::PoolingHead(ParameterStore& store, const std::string& name,
                         Index channels, const PoolingConfig& cfg, Rng& rng)
    : cfg_(cfg), channels_(channels) {
  cfg.validate();
  if (cfg.has_asp()) {
    asp_.emplace(store, name + ".asp", channels, cfg.hidden, rng);
  }
  if (cfg.has_mhasp()) {
    mhasp_.emplace(store, name + ".mhasp", channels, cfg.multi_head(), rng);
  }
  if (cfg.has_swasp()) {
    swasp_.emplace(store, name + ".swasp", channels, cfg.swasp(), rng);
  }
}

Var PoolingHead::operator()(Tape& tape, const Var& x) const {
  std::vector<Var> parts;
  if (asp_) {
    PooledStats st = (*asp_)(tape, x);
    parts.push_back(st.mean);
    parts.push_back(st.stddev);
  }
  if (mhasp_) parts.push_back((*mhasp_)(tape, x));
  if (swasp_) parts.push_back((*swasp_)(tape, x));
  return parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
}

}  // namespace digitsv
