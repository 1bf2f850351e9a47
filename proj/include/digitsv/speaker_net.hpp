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

// Compact ECAPA-style speaker encoder.
//
//   MFCC (T x n) -> input normalization -> stem conv/ReLU/BN
//     -> residual dilated blocks -> concat of block outputs -> 1x1 conv (MFA)
//     -> pooling head -> BN -> linear -> D-dim embedding
//
// trained with an additive angular margin softmax over speaker classes.

#ifndef DIGITSV_SPEAKER_NET_HPP_
#define DIGITSV_SPEAKER_NET_HPP_

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

struct EcapaLiteConfig {
  int n_coeffs = 20;
  int stem_channels = 48;
  int stem_kernel = 5;
  std::vector<int> dilations{2, 3, 4};
  int kernel = 3;
  int channels = 96;  // MFA width C
  int embed_dim = 64;
  PoolingConfig pooling;

  void validate() const;
};

nlohmann::json to_json(const EcapaLiteConfig& c);
EcapaLiteConfig ecapa_config_from_json(const nlohmann::json& j);

struct AamConfig {
  double margin = 0.2;
  double scale = 30.0;

  void validate() const;
};

nlohmann::json to_json(const AamConfig& c);
AamConfig aam_config_from_json(const nlohmann::json& j);

// Cosine logits between length-normalized embeddings (B x D) and class
// weights (K x D); the target angle is widened by the margin (capped at pi)
// and every logit is multiplied by the scale. Mean cross-entropy.
Var aam_softmax_loss(const Var& embeddings, std::span<const int> labels,
                     const Var& weights, const AamConfig& cfg);

// What a training class is: a speaker, or a (speaker, pattern) pair.
enum class LabelMode { kSpeaker, kSpeakerText };

std::string to_string(LabelMode m);
LabelMode label_mode_from_string(const std::string& s);
std::string class_key(const Utterance& u, LabelMode mode);

class SpeakerModel {
 public:
  SpeakerModel(const EcapaLiteConfig& cfg, const AamConfig& aam,
               std::vector<std::string> classes, std::uint64_t seed);
  SpeakerModel(SpeakerModel&&) = default;
  SpeakerModel& operator=(SpeakerModel&&) = default;

  // x: n_coeffs x sum(lengths), utterances side by side. Returns C x same.
  Var frame_encode(Tape& tape, const Var& x, std::span<const Index> lengths,
                   const Context& ctx) const;
  // Embeddings (B x D, unnormalized) for a batch of T_i x n_coeffs inputs.
  Var embed_batch(Tape& tape, const std::vector<const Matrix*>& frames,
                  const Context& ctx) const;
  Var loss(Tape& tape, const std::vector<const Matrix*>& frames,
           std::span<const int> labels, const Context& ctx) const;

  // Eval-mode embedding of one utterance.
  Vector embed(const Matrix& frames) const;
  std::vector<Vector> embed_all(const std::vector<FeatureMatrix>& feats,
                                std::size_t batch = 16) const;

  // Sets the per-coefficient input shift and scale from training features.
  void fit_input_normalization(const std::vector<FeatureMatrix>& feats);
  // Input as the trunk sees it: normalized and transposed to n x T.
  Matrix prepare(const Matrix& frames) const;

  nlohmann::json to_json() const;
  static SpeakerModel from_json(const nlohmann::json& j);

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const EcapaLiteConfig& config() const { return cfg_; }
  const AamConfig& aam() const { return aam_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const PoolingHead& pooling() const { return pool_; }
  const std::vector<Conv1d>& block_convs() const { return block_conv_; }

 private:
  EcapaLiteConfig cfg_;
  AamConfig aam_;
  std::vector<std::string> classes_;
  ParameterStore store_;
  Parameter* input_mean_ = nullptr;
  Parameter* input_scale_ = nullptr;
  Conv1d stem_;
  BatchNorm1d stem_bn_;
  std::vector<Conv1d> block_conv_;
  std::vector<BatchNorm1d> block_bn_;
  Conv1d mfa_;
  PoolingHead pool_;
  BatchNorm1d head_bn_;
  Linear head_;
  Parameter* class_weights_ = nullptr;  // K x D
};

struct SpeakerTrainConfig {
  int epochs = 10;
  int batch_size = 24;
  double lr = kInitialLearningRate;
  std::uint64_t seed = 1;
  LabelMode label_mode = LabelMode::kSpeaker;

  void validate() const;
};

nlohmann::json to_json(const SpeakerTrainConfig& c);
SpeakerTrainConfig speaker_train_config_from_json(const nlohmann::json& j);

struct LabeledSet {
  std::vector<std::string> classes;
  std::vector<int> labels;  // one per feature matrix
};

// Sorted class list and per-utterance labels; every feature id must be in
// the manifest.
LabeledSet label_features(const Manifest& m,
                          const std::vector<FeatureMatrix>& feats,
                          LabelMode mode);

// Mini-batch Adam over a fixed feature set. Epoch e runs at lr * 0.97^e
// over an order derived from (seed, e).
class SpeakerTrainer {
 public:
  SpeakerTrainer(SpeakerModel& model, const std::vector<FeatureMatrix>& feats,
                 std::vector<int> labels, const SpeakerTrainConfig& cfg);

  EpochRecord run_epoch();
  // Mean batch loss with batch statistics and no parameter or running
  // statistic updates.
  double evaluate_loss() const;

  int epoch() const { return epoch_; }
  const std::vector<EpochRecord>& log() const { return log_; }

  // Optimizer state, epoch counter and log; parameters live in the model.
  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  SpeakerModel& model_;
  const std::vector<FeatureMatrix>& feats_;
  std::vector<int> labels_;
  SpeakerTrainConfig cfg_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<EpochRecord> log_;
};

}  // namespace digitsv

#endif  // DIGITSV_SPEAKER_NET_HPP_
