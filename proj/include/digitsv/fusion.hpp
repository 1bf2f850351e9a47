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

// Back-end scoring: trial lists under the joint speaker+text protocol,
// cosine scoring of speaker or fused embeddings, and a small CNN scorer.

#ifndef DIGITSV_FUSION_HPP_
#define DIGITSV_FUSION_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "digitsv/corpus.hpp"
#include "digitsv/metrics.hpp"
#include "digitsv/nn.hpp"
#include "digitsv/training.hpp"
#include "json.hpp"

namespace digitsv {

struct EmbeddingRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::string pattern_id;
  Vector speaker;  // empty when absent
  Vector text;     // empty when absent
};

using EmbeddingTable = std::map<std::string, EmbeddingRecord>;

EmbeddingTable index_records(const std::vector<EmbeddingRecord>& records);

// One row per (utterance, kind) with kind "spk" or "txt".
void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;

  bool operator==(const Trial&) const = default;
};

void write_trials(const std::filesystem::path& path,
                  const std::vector<Trial>& trials);
std::vector<Trial> read_trials(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path,
                  const std::vector<Trial>& trials,
                  const std::vector<double>& scores);
// Trials plus their scores from a score file.
ScoreSet read_scores(const std::filesystem::path& path,
                     std::vector<Trial>* trials = nullptr);

// Pair counts per cell of the joint protocol.
struct TrialCounts {
  int target = 400;            // same speaker, same pattern
  int same_speaker = 400;      // same speaker, different pattern
  int same_pattern = 400;      // different speaker, same pattern
  int different_both = 400;

  void validate() const;
};

nlohmann::json to_json(const TrialCounts& c);
TrialCounts trial_counts_from_json(const nlohmann::json& j);

// Samples unordered utterance pairs of `split` without replacement in each
// cell. Throws ContractError when a cell has fewer pairs than requested.
std::vector<Trial> make_trials(const Manifest& m, const std::string& split,
                               const TrialCounts& counts, std::uint64_t seed);

// Inner product of the length-normalized inputs.
double cosine(const Vector& a, const Vector& b);
// Length-normalized speaker and text embeddings, summed or multiplied.
Vector fuse_add(const EmbeddingRecord& r);
Vector fuse_mul(const EmbeddingRecord& r);

enum class ScoreStrategy { kSpeaker, kAdd, kMul, kCnn };

std::string to_string(ScoreStrategy s);
ScoreStrategy score_strategy_from_string(const std::string& s);

struct CnnFusionConfig {
  int channels = 8;
  int kernel = 3;
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const CnnFusionConfig& c);
CnnFusionConfig cnn_fusion_config_from_json(const nlohmann::json& j);

// Scores a trial from the 4 x D map of normalized (speaker, text) embeddings
// of enrollment and test: two conv/ReLU blocks over the embedding axis,
// global average pooling and a linear layer.
class CnnFusionModel {
 public:
  CnnFusionModel(Index dim, const CnnFusionConfig& cfg);
  CnnFusionModel(CnnFusionModel&&) = default;
  CnnFusionModel& operator=(CnnFusionModel&&) = default;

  static Matrix trial_map(const EmbeddingRecord& enroll,
                          const EmbeddingRecord& test);
  // Logits (N x 1) for maps stacked side by side (4 x N*D).
  Var forward(Tape& tape, const Matrix& maps, Index n) const;
  std::vector<double> score(const EmbeddingTable& table,
                            const std::vector<Trial>& trials) const;

  Index dim() const { return dim_; }
  const CnnFusionConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  nlohmann::json to_json() const;
  static CnnFusionModel from_json(const nlohmann::json& j);

 private:
  Index dim_;
  CnnFusionConfig cfg_;
  ParameterStore store_;
  Conv1d conv1_;
  Conv1d conv2_;
  Linear out_;
};

// Mean binary cross-entropy per epoch. Throws ContractError when the trials
// are all of one class.
std::vector<EpochRecord> train_cnn_fusion(CnnFusionModel& model,
                                          const EmbeddingTable& table,
                                          const std::vector<Trial>& trials);

// Mean binary cross-entropy over all trials in eval mode.
double cnn_fusion_loss(const CnnFusionModel& model, const EmbeddingTable& table,
                       const std::vector<Trial>& trials);

// Scores aligned with `trials`. kCnn needs `cnn`.
std::vector<double> score_trials(const EmbeddingTable& table,
                                 const std::vector<Trial>& trials,
                                 ScoreStrategy strategy,
                                 const CnnFusionModel* cnn = nullptr);

ScoreSet to_score_set(const std::vector<Trial>& trials,
                      const std::vector<double>& scores);

}  // namespace digitsv

#endif  // DIGITSV_FUSION_HPP_
