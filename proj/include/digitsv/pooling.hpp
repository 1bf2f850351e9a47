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

// Temporal pooling heads over frame-level features X (C x T, one column per
// frame).
//
//   ASP    attention-weighted mean and standard deviation per channel.
//   MHASP  multi-head QKV self-attention over frames, then ASP over the
//          concatenated head outputs, projected back to C.
//   SWASP  MHASP per sliding window; the window vectors form a new C x n
//          sequence, tagged with a sinusoidal window-index code, that a
//          second MHASP pools to C.
//
// Multi-scale pooling concatenates the enabled branches in the order
// ASP (2C), MHASP (C), SWASP (C).

#ifndef DIGITSV_POOLING_HPP_
#define DIGITSV_POOLING_HPP_

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "digitsv/nn.hpp"
#include "json.hpp"

namespace digitsv {

// Floor added to the clamped variance before the square root.
inline constexpr double kStdFloor = 1e-9;

struct PooledStats {
  Var mean;    // C x 1
  Var stddev;  // C x 1, >= 0
  Var weights; // C x T attention weights, rows sum to one
};

// softmax(Q K^T / sqrt(d_k) + mask) V for Q, K, V: T x d_k. `mask`, when
// bound, is an additive T_q x T_k constant.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v,
                         const Var& mask = Var());

// Attentive statistics pooling with a tanh bottleneck of width `hidden`.
class AttentiveStatsPooling {
 public:
  AttentiveStatsPooling() = default;
  AttentiveStatsPooling(ParameterStore& store, const std::string& name,
                        Index channels, Index hidden, Rng& rng);

  PooledStats operator()(Tape& tape, const Var& x) const;
  Index channels() const { return channels_; }

  Parameter& w1() const { return *w1_; }
  Parameter& b1() const { return *b1_; }
  Parameter& w2() const { return *w2_; }
  Parameter& b2() const { return *b2_; }

 private:
  Parameter* w1_ = nullptr;  // hidden x C
  Parameter* b1_ = nullptr;  // hidden x 1
  Parameter* w2_ = nullptr;  // C x hidden
  Parameter* b2_ = nullptr;  // C x 1
  Index channels_ = 0;
};

// attend_stats as a free function over explicit parameter variables.
PooledStats attend_stats(const Var& x, const Var& w1, const Var& b1,
                         const Var& w2, const Var& b2);

struct MultiHeadConfig {
  int heads = 2;
  int head_dim = 16;  // d_k
  int hidden = 32;    // ASP bottleneck width
};

class MultiHeadStatsPooling {
 public:
  MultiHeadStatsPooling() = default;
  MultiHeadStatsPooling(ParameterStore& store, const std::string& name,
                        Index channels, const MultiHeadConfig& cfg, Rng& rng);

  // C x T -> C x 1.
  Var operator()(Tape& tape, const Var& x) const;

  const std::vector<Linear>& queries() const { return q_; }
  const std::vector<Linear>& keys() const { return k_; }
  const std::vector<Linear>& values() const { return v_; }
  const AttentiveStatsPooling& stats() const { return asp_; }
  const Linear& projection() const { return proj_; }

 private:
  std::vector<Linear> q_;
  std::vector<Linear> k_;
  std::vector<Linear> v_;
  AttentiveStatsPooling asp_;
  Linear proj_;  // 2 * heads * d_k -> C, no bias
};

struct Window {
  Index start = 0;
  Index length = 0;

  bool operator==(const Window&) const = default;
};

// Windows start at 0, s, 2s, ... while start + w <= T; when the last one
// ends before T a tail window [T - w, T) is appended. w is clamped to T.
std::vector<Window> segment_windows(Index frames, Index window, Index stride);

struct SwaspConfig {
  int window = 50;
  int stride = 25;
  MultiHeadConfig inner;
  MultiHeadConfig outer;
  // Reuse the per-window pooling for the outer stage.
  bool shared_outer = false;
  // Add a sinusoidal code of the window index before the outer stage.
  // Without it both stages are blind to window order.
  bool window_position = true;
};

class SlidingWindowPooling {
 public:
  SlidingWindowPooling() = default;
  SlidingWindowPooling(ParameterStore& store, const std::string& name,
                       Index channels, const SwaspConfig& cfg, Rng& rng);

  // C x T -> C x 1.
  Var operator()(Tape& tape, const Var& x) const;
  const SwaspConfig& config() const { return cfg_; }
  const MultiHeadStatsPooling& inner() const { return inner_; }
  const MultiHeadStatsPooling& outer() const {
    return cfg_.shared_outer ? inner_ : outer_;
  }

 private:
  SwaspConfig cfg_;
  MultiHeadStatsPooling inner_;
  MultiHeadStatsPooling outer_;
};

enum class PoolingKind { kAsp, kMhasp, kSwasp, kAspSwasp, kMhaspSwasp, kAll };

std::string to_string(PoolingKind k);
PoolingKind pooling_kind_from_string(const std::string& s);

struct PoolingConfig {
  PoolingKind kind = PoolingKind::kAspSwasp;
  int window = 50;
  int stride = 25;
  int heads = 2;
  int head_dim = 16;
  int hidden = 32;
  bool shared_outer = false;
  bool window_position = true;

  bool has_asp() const;
  bool has_mhasp() const;
  bool has_swasp() const;
  // Width of the pooled vector for C input channels.
  Index output_dim(Index channels) const;
  SwaspConfig swasp() const;
  MultiHeadConfig multi_head() const;
  void validate() const;
};

nlohmann::json to_json(const PoolingConfig& c);
PoolingConfig pooling_config_from_json(const nlohmann::json& j);

// The configured combination of branches.
class PoolingHead {
 public:
  PoolingHead() = default;
  PoolingHead(ParameterStore& store, const std::string& name, Index channels,
              const PoolingConfig& cfg, Rng& rng);

  // C x T -> output_dim x 1.
  Var operator()(Tape& tape, const Var& x) const;
  Index output_dim() const { return cfg_.output_dim(channels_); }
  const PoolingConfig& config() const { return cfg_; }

  const AttentiveStatsPooling* asp() const { return asp_ ? &*asp_ : nullptr; }
  const MultiHeadStatsPooling* mhasp() const {
    return mhasp_ ? &*mhasp_ : nullptr;
  }
  const SlidingWindowPooling* swasp() const {
    return swasp_ ? &*swasp_ : nullptr;
  }

 private:
  PoolingConfig cfg_;
  Index channels_ = 0;
  std::optional<AttentiveStatsPooling> asp_;
  std::optional<MultiHeadStatsPooling> mhasp_;
  std::optional<SlidingWindowPooling> swasp_;
};

}  // namespace digitsv

#endif  // DIGITSV_POOLING_HPP_
