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

// Transformer text network with three heads sharing one encoder:
//
//   MFCC -> input normalization -> linear -> + positions -> encoder X
//   X -> conv/ReLU/BN -> ASP -> linear -> text embedding -> FC -> BN -> CE
//   X -> 3 x (conv/ReLU/BN) -> linear -> CTC over the token sequence
//   X -> decoder over [BOS, pattern hint, tokens] -> CE against [tokens, EOS]
//
// The three losses are combined with weights 0.6, 0.2, 0.2.

#ifndef DIGITSV_TEXT_NET_HPP_
#define DIGITSV_TEXT_NET_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "digitsv/corpus.hpp"
#include "digitsv/features.hpp"
#include "digitsv/nn.hpp"
#include "digitsv/optim.hpp"
#include "digitsv/pooling.hpp"
#include "digitsv/training.hpp"
#include "json.hpp"

namespace digitsv {

// Token ids: digits 0-9, then PAUSE, BLANK (CTC only), BOS and EOS
// (decoder only).
namespace vocab {
inline constexpr int kPause = kPauseToken;
inline constexpr int kBlank = 11;
inline constexpr int kBos = 12;
inline constexpr int kEos = 13;
inline constexpr int kSize = 14;

std::string symbol(int id);
std::vector<std::string> symbols();
}  // namespace vocab

struct TextNetConfig {
  int n_coeffs = 20;
  int d_model = 64;
  int d_qkv = 64;  // total query/key/value width, split across heads
  int heads = 4;
  int encoder_blocks = 4;
  int decoder_blocks = 4;
  int ffn = 128;
  int conv_channels = 64;
  int kernel = 3;
  int ctc_blocks = 3;
  int asp_hidden = 32;
  int embed_dim = 64;

  void validate() const;
};

nlohmann::json to_json(const TextNetConfig& c);
TextNetConfig text_config_from_json(const nlohmann::json& j);

struct LossWeights {
  double classification = 0.6;
  double ctc = 0.2;
  double decoder = 0.2;

  void validate() const;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

double total_loss(double l1, double l2, double l3, const LossWeights& w = {});
Var total_loss(const Var& l1, const Var& l2, const Var& l3,
               const LossWeights& w = {});

// Additive mask that hides positions j > i from position i.
Matrix causal_mask(Index n);

// Queries from `xq`, keys and values from `xkv`; heads split the d_qkv
// projection evenly.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name,
                     Index d_model, Index d_qkv, Index heads, Rng& rng);

  Var operator()(Tape& tape, const Var& xq, const Var& xkv,
                 const Var& mask = Var()) const;

 private:
  Linear query_, key_, value_, out_;
  Index heads_ = 1;
  Index head_dim_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, Index d_model,
              Index hidden, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  Linear in_, out_;
};

// Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x)).
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParameterStore& store, const std::string& name,
               const TextNetConfig& cfg, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  LayerNorm ln_attn_, ln_ffn_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
};

// Pre-norm block: causal self-attention, cross-attention to the encoder
// output, feed-forward.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParameterStore& store, const std::string& name,
               const TextNetConfig& cfg, Rng& rng);
  Var operator()(Tape& tape, const Var& y, const Var& memory,
                 const Var& mask) const;

 private:
  LayerNorm ln_self_, ln_cross_, ln_ffn_;
  MultiHeadAttention self_, cross_;
  FeedForward ffn_;
};

struct TextExample {
  const Matrix* frames = nullptr;  // T x n_coeffs
  std::span<const int> tokens;     // digits and PAUSE
  int pattern = 0;                 // class index
};

struct TextLosses {
  Var classification;
  Var ctc;
  Var decoder;
  Var total;
};

class TextModel {
 public:
  TextModel(const TextNetConfig& cfg, std::vector<std::string> patterns,
            std::uint64_t seed);
  TextModel(TextModel&&) = default;
  TextModel& operator=(TextModel&&) = default;

  // T x n_coeffs -> T x d_model.
  Var encode(Tape& tape, const Matrix& frames) const;
  // Text embeddings (B x E) for encoder outputs.
  Var embed_batch(Tape& tape, const std::vector<Var>& encoded,
                  const Context& ctx) const;
  // Pattern logits (B x P) from text embeddings.
  Var class_logits(Tape& tape, const Var& embeddings, const Context& ctx) const;
  // Per-utterance CTC logits (T_i x vocab::kSize).
  std::vector<Var> ctc_logits(Tape& tape, const std::vector<Var>& encoded,
                              const Context& ctx) const;
  // Decoder logits (U x vocab::kSize) for input [BOS, hint(pattern), prefix].
  Var decode_logits(Tape& tape, const Var& encoded, int pattern,
                    std::span<const int> prefix) const;

  // Teacher-forced decoder loss: mean CE of [tokens, EOS] predicted from
  // positions 1.. of [BOS, hint, tokens].
  Var decoder_loss(Tape& tape, const Var& encoded, int pattern,
                   std::span<const int> tokens) const;
  TextLosses losses(Tape& tape, const std::vector<TextExample>& batch,
                    const Context& ctx, const LossWeights& w = {}) const;

  // Eval-mode inference.
  Vector embed(const Matrix& frames) const;
  std::vector<Vector> embed_all(const std::vector<FeatureMatrix>& feats) const;
  int classify(const Matrix& frames) const;
  // Greedy decoding seeded with the predicted pattern's hint; stops at EOS
  // or after 2T tokens.
  std::vector<int> greedy_decode(const Matrix& frames) const;

  void fit_input_normalization(const std::vector<FeatureMatrix>& feats);
  int pattern_index(const std::string& pattern_id) const;

  nlohmann::json to_json() const;
  static TextModel from_json(const nlohmann::json& j);

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const TextNetConfig& config() const { return cfg_; }
  const std::vector<std::string>& patterns() const { return patterns_; }

 private:
  Var decoder_input(Tape& tape, int pattern, std::span<const int> prefix) const;

  TextNetConfig cfg_;
  std::vector<std::string> patterns_;
  ParameterStore store_;
  Parameter* input_mean_ = nullptr;
  Parameter* input_scale_ = nullptr;
  Linear input_;
  std::vector<EncoderBlock> encoder_;
  LayerNorm encoder_ln_;
  Conv1d cls_conv_;
  BatchNorm1d cls_bn_;
  AttentiveStatsPooling cls_pool_;
  Linear embed_;
  Linear cls_fc_;
  BatchNorm1d cls_out_bn_;
  std::vector<Conv1d> ctc_conv_;
  std::vector<BatchNorm1d> ctc_bn_;
  Linear ctc_out_;
  Parameter* token_table_ = nullptr;  // vocab::kSize x d_model
  Parameter* hint_table_ = nullptr;   // patterns x d_model
  std::vector<DecoderBlock> decoder_;
  LayerNorm decoder_ln_;
  Linear decoder_out_;
};

// Levenshtein distance between token sequences.
std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

struct TextEval {
  double accuracy = 0.0;           // pattern classification
  double token_error_rate = 0.0;   // total edits / total reference tokens
};

TextEval evaluate_text(const TextModel& model, const Manifest& m,
                       const std::vector<FeatureMatrix>& feats);

struct TextTrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = kInitialLearningRate;
  std::uint64_t seed = 1;
  LossWeights weights;

  void validate() const;
};

nlohmann::json to_json(const TextTrainConfig& c);
TextTrainConfig text_train_config_from_json(const nlohmann::json& j);

struct StepLosses {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  double classification = 0.0;
  double ctc = 0.0;
  double decoder = 0.0;
  double total = 0.0;
};

// CSV with header epoch,step,lr,l1,l2,l3,total.
void write_step_log(const std::filesystem::path& path,
                    const std::vector<StepLosses>& log);
std::vector<StepLosses> read_step_log(const std::filesystem::path& path);

class TextTrainer {
 public:
  // Features must be in the manifest; tokens and patterns come from it.
  TextTrainer(TextModel& model, const Manifest& m,
              const std::vector<FeatureMatrix>& feats,
              const TextTrainConfig& cfg);

  EpochRecord run_epoch();

  int epoch() const { return epoch_; }
  const std::vector<EpochRecord>& log() const { return log_; }
  const std::vector<StepLosses>& steps() const { return steps_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  TextModel& model_;
  const std::vector<FeatureMatrix>& feats_;
  std::vector<std::vector<int>> tokens_;
  std::vector<int> patterns_;
  TextTrainConfig cfg_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<EpochRecord> log_;
  std::vector<StepLosses> steps_;
};

}  // namespace digitsv

#endif  // DIGITSV_TEXT_NET_HPP_
