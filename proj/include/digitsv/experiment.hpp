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

// Experiment configuration, run manifests and the pipeline steps shared by
// the command-line tool: training, embedding extraction and the pooling
// window sweep.

#ifndef DIGITSV_EXPERIMENT_HPP_
#define DIGITSV_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "digitsv/corpus.hpp"
#include "digitsv/features.hpp"
#include "digitsv/fusion.hpp"
#include "digitsv/speaker_net.hpp"
#include "digitsv/text_net.hpp"
#include "json.hpp"

namespace digitsv {

nlohmann::json to_json(const CorpusConfig& c);
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

struct SweepCell {
  int window = 0;
  int stride = 0;

  bool operator==(const SweepCell&) const = default;
};

// One JSON document; every section is optional and unknown keys are
// rejected. The master seed drives speaker and text training, trial
// sampling and CNN fusion; the corpus keeps its own seed.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  CorpusConfig corpus;
  MfccConfig mfcc;
  EcapaLiteConfig speaker;
  AamConfig aam;
  SpeakerTrainConfig speaker_train;
  TextNetConfig text;
  TextTrainConfig text_train;
  TrialCounts trials;
  ScoreStrategy strategy = ScoreStrategy::kMul;
  CnnFusionConfig cnn;
  std::vector<SweepCell> sweep{{4, 2}, {4, 4}, {8, 2}, {8, 4}};

  void validate() const;
  // Sets the master seed and every seed derived from it.
  void set_seed(std::uint64_t s);
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Reads DIGITSV_SEED; throws ContractError when it is set but not a
// non-negative integer.
std::optional<std::uint64_t> seed_from_env();

// Defaults when `path` is empty, then DIGITSV_SEED if set. `path` may be
// a config document or a run manifest written by write_run_manifest.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
// Hash of the compact dump of `j` (object keys are sorted).
std::string config_hash(const nlohmann::json& j);
// Hash of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Everything needed to repeat a run: command line, effective config and
// its hash, seed, and the hash of every input file.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::filesystem::path> inputs;
  std::map<std::string, std::filesystem::path> outputs;
};

nlohmann::json to_json(const RunManifest& r);
// Writes <dir>/run.json.
void write_run_manifest(const std::filesystem::path& dir, const RunManifest& r);

// Looks up utterances by id.
class UtteranceIndex {
 public:
  explicit UtteranceIndex(const Manifest& m);
  const Utterance& at(const std::string& utterance_id) const;

 private:
  std::map<std::string, const Utterance*> by_id_;
};

// Features of the utterances of `split` in manifest order.
std::vector<FeatureMatrix> select_split(const Manifest& m,
                                        const std::vector<FeatureMatrix>& feats,
                                        const std::string& split);

SpeakerModel train_speaker_model(const Manifest& m,
                                 const std::vector<FeatureMatrix>& train,
                                 const EcapaLiteConfig& model_cfg,
                                 const AamConfig& aam,
                                 const SpeakerTrainConfig& train_cfg,
                                 std::vector<EpochRecord>* log = nullptr);

// Patterns are the sorted pattern ids of the manifest.
TextModel train_text_model(const Manifest& m,
                           const std::vector<FeatureMatrix>& train,
                           const TextNetConfig& model_cfg,
                           const TextTrainConfig& train_cfg,
                           std::vector<EpochRecord>* log = nullptr,
                           std::vector<StepLosses>* steps = nullptr);

// Records with whichever embeddings the given models produce.
std::vector<EmbeddingRecord> embed_utterances(
    const Manifest& m, const std::vector<FeatureMatrix>& feats,
    const SpeakerModel* speaker, const TextModel* text);

struct SweepRow {
  int window = 0;
  int stride = 0;
  double eer = 0.0;
  double min_dcf = 0.0;
};

// Trains one speaker model per (window, stride) cell with the config's seed
// and scores speaker-only cosine trials on the test split. A failing cell is
// reported with its window and stride.
std::vector<SweepRow> sweep_pooling(const Manifest& m,
                                    const std::vector<FeatureMatrix>& feats,
                                    const ExperimentConfig& cfg);

// CSV with header window,stride,eer,min_dcf.
void write_sweep(const std::filesystem::path& path,
                 const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep(const std::filesystem::path& path);

// CSV with header threshold,far,frr.
void write_det(const std::filesystem::path& path,
               const std::vector<DetPoint>& det);

}  // namespace digitsv

#endif  // DIGITSV_EXPERIMENT_HPP_
