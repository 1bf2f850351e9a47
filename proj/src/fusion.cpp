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

#include "digitsv/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>

#include "digitsv/checkpoint.hpp"
#include "digitsv/csv.hpp"
#include "digitsv/error.hpp"
#include "digitsv/ops.hpp"
#include "digitsv/optim.hpp"

namespace digitsv {

EmbeddingTable index_records(const std::vector<EmbeddingRecord>& records) {
  EmbeddingTable t;
  for (const EmbeddingRecord& r : records) {
    if (!t.emplace(r.utterance_id, r).second) {
      throw ContractError("duplicate embedding record '" + r.utterance_id + "'");
    }
  }
  return t;
}

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records) {
  Index width = 0;
  for (const EmbeddingRecord& r : records) {
    width = std::max({width, r.speaker.size(), r.text.size()});
  }
  std::vector<csv::Row> rows;
  csv::Row header{"utterance_id", "speaker_id", "pattern_id", "kind"};
  for (Index i = 0; i < width; ++i) header.push_back("v" + std::to_string(i));
  rows.push_back(std::move(header));
  auto emit = [&rows](const EmbeddingRecord& r, const char* kind,
                      const Vector& v) {
    if (v.size() == 0) return;
    if (!v.allFinite()) {
      throw NumericError("non-finite embedding for '" + r.utterance_id + "'");
    }
    csv::Row row{r.utterance_id, r.speaker_id, r.pattern_id, kind};
    for (Index i = 0; i < v.size(); ++i) {
      row.push_back(csv::format_double(v(i)));
    }
    rows.push_back(std::move(row));
  };
  for (const EmbeddingRecord& r : records) {
    emit(r, "spk", r.speaker);
    emit(r, "txt", r.text);
  }
  csv::write(path, rows);
}

std::vector<EmbeddingRecord> read_embeddings(
    const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front().size() < 4 ||
      rows.front()[0] != "utterance_id" || rows.front()[3] != "kind") {
    throw IoError("embedding file '" + path.string() + "' has a bad header");
  }
  std::vector<EmbeddingRecord> out;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const csv::Row& row = rows[i];
    if (row.size() < 5) {
      throw IoError("embedding row " + std::to_string(i) + " is too short");
    }
    auto [it, fresh] = pos.emplace(row[0], out.size());
    if (fresh) out.push_back({row[0], row[1], row[2], {}, {}});
    EmbeddingRecord& r = out[it->second];
    if (r.speaker_id != row[1] || r.pattern_id != row[2]) {
      throw IoError("inconsistent labels for '" + row[0] + "'");
    }
    Vector v(static_cast<Index>(row.size() - 4));
    for (Index k = 0; k < v.size(); ++k) {
      v(k) = csv::parse_double(row[static_cast<std::size_t>(k) + 4]);
    }
    Vector* slot = row[3] == "spk"   ? &r.speaker
                   : row[3] == "txt" ? &r.text
                                     : nullptr;
    if (slot == nullptr) throw IoError("unknown embedding kind '" + row[3] + "'");
    if (slot->size() != 0) throw IoError("duplicate embedding row for '" + row[0] + "'");
    *slot = std::move(v);
  }
  return out;
}

void write_trials(const std::filesystem::path& path,
                  const std::vector<Trial>& trials) {
  std::vector<csv::Row> rows{{"enroll_id", "test_id", "label"}};
  for (const Trial& t : trials) {
    rows.push_back({t.enroll, t.test, t.target ? "1" : "0"});
  }
  csv::write(path, rows);
}

namespace {

bool parse_label(const std::string& s) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw IoError("trial label must be 0 or 1, got '" + s + "'");
}

}  // namespace

std::vector<Trial> read_trials(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front().size() < 3 ||
      rows.front()[0] != "enroll_id" || rows.front()[1] != "test_id" ||
      rows.front()[2] != "label") {
    throw IoError("trial file '" + path.string() + "' has a bad header");
  }
  std::vector<Trial> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 3) {
      throw IoError("trial row " + std::to_string(i) + " is too short");
    }
    out.push_back({rows[i][0], rows[i][1], parse_label(rows[i][2])});
  }
  return out;
}

void write_scores(const std::filesystem::path& path,
                  const std::vector<Trial>& trials,
                  const std::vector<double>& scores) {
  if (trials.size() != scores.size()) {
    throw DimensionError("one score per trial required");
  }
  std::vector<csv::Row> rows{{"enroll_id", "test_id", "label", "score"}};
  for (std::size_t i = 0; i < trials.size(); ++i) {
    rows.push_back({trials[i].enroll, trials[i].test,
                    trials[i].target ? "1" : "0",
                    csv::format_double(scores[i])});
  }
  csv::write(path, rows);
}

ScoreSet read_scores(const std::filesystem::path& path,
                     std::vector<Trial>* trials) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows.front().size() < 4 ||
      rows.front()[2] != "label" || rows.front()[3] != "score") {
    throw IoError("score file '" + path.string() + "' has a bad header");
  }
  ScoreSet s;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 4) {
      throw IoError("score row " + std::to_string(i) + " is too short");
    }
    const bool target = parse_label(rows[i][2]);
    s.targets.push_back(target);
    s.scores.push_back(csv::parse_double(rows[i][3]));
    if (trials) trials->push_back({rows[i][0], rows[i][1], target});
  }
  return s;
}

void TrialCounts::validate() const {
  if (target < 0 || same_speaker < 0 || same_pattern < 0 ||
      different_both < 0) {
    throw ContractError("trial counts must be non-negative");
  }
  if (target + same_speaker + same_pattern + different_both == 0) {
    throw ContractError("trial counts are all zero");
  }
}

nlohmann::json to_json(const TrialCounts& c) {
  return {{"target", c.target},
          {"same_speaker", c.same_speaker},
          {"same_pattern", c.same_pattern},
          {"different_both", c.different_both}};
}

TrialCounts trial_counts_from_json(const nlohmann::json& j) {
  TrialCounts c;
  for (const auto& [key, value] : j.items()) {
    if (key == "target") c.target = value.get<int>();
    else if (key == "same_speaker") c.same_speaker = value.get<int>();
    else if (key == "same_pattern") c.same_pattern = value.get<int>();
    else if (key == "different_both") c.different_both = value.get<int>();
    else throw ContractError("trial counts: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::vector<Trial> make_trials(const Manifest& m, const std::string& split,
                               const TrialCounts& counts, std::uint64_t seed) {
  counts.validate();
  const auto utts = m.split(split);
  if (utts.empty()) throw ContractError("split '" + split + "' is empty");
  using Pair = std::pair<std::uint32_t, std::uint32_t>;
  std::array<std::vector<Pair>, 4> cells;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    for (std::size_t j = i + 1; j < utts.size(); ++j) {
      const bool spk = utts[i]->speaker_id == utts[j]->speaker_id;
      const bool pat = utts[i]->pattern_id == utts[j]->pattern_id;
      const int cell = spk ? (pat ? 0 : 1) : (pat ? 2 : 3);
      cells[static_cast<std::size_t>(cell)].emplace_back(
          static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  const std::array<int, 4> want{counts.target, counts.same_speaker,
                                counts.same_pattern, counts.different_both};
  const std::array<const char*, 4> names{"target", "same_speaker",
                                         "same_pattern", "different_both"};
  std::vector<Trial> out;
  for (std::size_t c = 0; c < 4; ++c) {
    auto& pool = cells[c];
    const auto n = static_cast<std::size_t>(want[c]);
    if (n > pool.size()) {
      throw ContractError(std::string("trial cell '") + names[c] + "' has " +
                          std::to_string(pool.size()) + " pairs, " +
                          std::to_string(n) + " requested");
    }
    std::mt19937_64 rng(mix_seed(seed, c));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    for (const auto& [i, j] : pool) {
      out.push_back({utts[i]->utterance_id, utts[j]->utterance_id, c == 0});
    }
  }
  return out;
}

namespace {

Vector unit(const Vector& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericError(std::string(what) + ": zero or non-finite vector");
  }
  return v / n;
}

void check_pair(const EmbeddingRecord& r) {
  if (r.speaker.size() == 0 || r.text.size() == 0) {
    throw ContractError("fusion needs speaker and text embeddings for '" +
                        r.utterance_id + "'");
  }
  if (r.speaker.size() != r.text.size()) {
    throw DimensionError("fusion: speaker and text dimensions differ");
  }
}

}  // namespace

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  return unit(a, "cosine").dot(unit(b, "cosine"));
}

Vector fuse_add(const EmbeddingRecord& r) {
  check_pair(r);
  return unit(r.speaker, "fuse_add") + unit(r.text, "fuse_add");
}

Vector fuse_mul(const EmbeddingRecord& r) {
  check_pair(r);
  return unit(r.speaker, "fuse_mul").cwiseProduct(unit(r.text, "fuse_mul"));
}

std::string to_string(ScoreStrategy s) {
  switch (s) {
    case ScoreStrategy::kSpeaker: return "speaker";
    case ScoreStrategy::kAdd: return "add";
    case ScoreStrategy::kMul: return "mul";
    case ScoreStrategy::kCnn: return "cnn";
  }
  throw ContractError("unknown score strategy");
}

ScoreStrategy score_strategy_from_string(const std::string& s) {
  for (ScoreStrategy k : {ScoreStrategy::kSpeaker, ScoreStrategy::kAdd,
                          ScoreStrategy::kMul, ScoreStrategy::kCnn}) {
    if (to_string(k) == s) return k;
  }
  throw ContractError("unknown score strategy '" + s + "'");
}

void CnnFusionConfig::validate() const {
  if (channels < 1) throw ContractError("cnn fusion: channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) {
    throw ContractError("cnn fusion: kernel must be odd");
  }
  if (epochs < 0) throw ContractError("cnn fusion: epochs must be >= 0");
  if (batch_size < 1) throw ContractError("cnn fusion: batch size must be >= 1");
  if (!(lr > 0.0)) throw ContractError("cnn fusion: lr must be positive");
}

nlohmann::json to_json(const CnnFusionConfig& c) {
  return {{"channels", c.channels}, {"kernel", c.kernel},
          {"epochs", c.epochs},     {"batch_size", c.batch_size},
          {"lr", c.lr},             {"seed", c.seed}};
}

CnnFusionConfig cnn_fusion_config_from_json(const nlohmann::json& j) {
  CnnFusionConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "channels") c.channels = value.get<int>();
    else if (key == "kernel") c.kernel = value.get<int>();
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ContractError("cnn fusion: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

CnnFusionModel::CnnFusionModel(Index dim, const CnnFusionConfig& cfg)
    : dim_(dim), cfg_(cfg) {
  cfg_.validate();
  if (dim < 1) throw ContractError("cnn fusion: embedding dimension must be >= 1");
  Rng rng(cfg_.seed);
  const Index ch = cfg_.channels;
  const Index pad = Conv1d::same_padding(cfg_.kernel, 1);
  conv1_ = Conv1d(store_, "conv1", 4, ch, cfg_.kernel, 1, pad, rng);
  conv2_ = Conv1d(store_, "conv2", ch, ch, cfg_.kernel, 1, pad, rng);
  out_ = Linear(store_, "out", ch, 1, true, rng);
}

Matrix CnnFusionModel::trial_map(const EmbeddingRecord& enroll,
                                 const EmbeddingRecord& test) {
  check_pair(enroll);
  check_pair(test);
  if (enroll.speaker.size() != test.speaker.size()) {
    throw DimensionError("cnn fusion: enroll and test dimensions differ");
  }
  Matrix m(4, enroll.speaker.size());
  m.row(0) = unit(enroll.speaker, "cnn fusion").transpose();
  m.row(1) = unit(enroll.text, "cnn fusion").transpose();
  m.row(2) = unit(test.speaker, "cnn fusion").transpose();
  m.row(3) = unit(test.text, "cnn fusion").transpose();
  return m;
}

Var CnnFusionModel::forward(Tape& tape, const Matrix& maps, Index n) const {
  if (maps.rows() != 4 || maps.cols() != n * dim_) {
    throw DimensionError("cnn fusion: expected 4 x N*D trial maps");
  }
  const std::vector<Index> segs(static_cast<std::size_t>(n), dim_);
  Var h = ops::relu(conv1_(tape, tape.constant(maps), segs));
  h = ops::relu(conv2_(tape, h, segs));
  return out_(tape, ops::transpose(ops::segment_mean(h, segs)));
}

namespace {

const EmbeddingRecord& lookup(const EmbeddingTable& table,
                              const std::string& id) {
  auto it = table.find(id);
  if (it == table.end()) {
    throw ContractError("no embedding record for '" + id + "'");
  }
  return it->second;
}

Matrix stack_maps(const EmbeddingTable& table, const std::vector<Trial>& trials,
                  std::span<const std::size_t> idx, Index dim) {
  Matrix maps(4, static_cast<Index>(idx.size()) * dim);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Trial& t = trials[idx[k]];
    Matrix m = CnnFusionModel::trial_map(lookup(table, t.enroll),
                                         lookup(table, t.test));
    if (m.cols() != dim) throw DimensionError("cnn fusion: embedding size mismatch");
    maps.middleCols(static_cast<Index>(k) * dim, dim) = m;
  }
  return maps;
}

constexpr std::size_t kScoreBatch = 256;

}  // namespace

std::vector<double> CnnFusionModel::score(
    const EmbeddingTable& table, const std::vector<Trial>& trials) const {
  std::vector<double> out;
  out.reserve(trials.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < trials.size(); start += kScoreBatch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(trials.size(), start + kScoreBatch);
         ++i) {
      idx.push_back(i);
    }
    Tape tape;
    const Matrix logits =
        forward(tape, stack_maps(table, trials, idx, dim_),
                static_cast<Index>(idx.size()))
            .value();
    for (Index i = 0; i < logits.rows(); ++i) out.push_back(logits(i, 0));
  }
  return out;
}

nlohmann::json CnnFusionModel::to_json() const {
  return {{"format", "digitsv-cnn-fusion-v1"},
          {"dim", dim_},
          {"config", digitsv::to_json(cfg_)},
          {"parameters", parameters_to_json(store_)}};
}

CnnFusionModel CnnFusionModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "digitsv-cnn-fusion-v1") {
    throw IoError("not a cnn fusion checkpoint");
  }
  CnnFusionModel m(j.at("dim").get<Index>(),
                   cnn_fusion_config_from_json(j.at("config")));
  parameters_from_json(m.store_, j.at("parameters"));
  return m;
}

namespace {

void check_both_classes(const std::vector<Trial>& trials) {
  const auto n_tar = std::count_if(trials.begin(), trials.end(),
                                   [](const Trial& t) { return t.target; });
  if (n_tar == 0 || n_tar == static_cast<long>(trials.size())) {
    throw ContractError("cnn fusion needs target and non-target trials");
  }
}

std::vector<int> labels_of(const std::vector<Trial>& trials,
                           std::span<const std::size_t> idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(trials[i].target ? 1 : 0);
  return y;
}

}  // namespace

double cnn_fusion_loss(const CnnFusionModel& model, const EmbeddingTable& table,
                       const std::vector<Trial>& trials) {
  check_both_classes(trials);
  const auto scores = model.score(table, trials);
  double loss = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const double z = scores[i];
    const double y = trials[i].target ? 1.0 : 0.0;
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return loss / static_cast<double>(trials.size());
}

std::vector<EpochRecord> train_cnn_fusion(CnnFusionModel& model,
                                          const EmbeddingTable& table,
                                          const std::vector<Trial>& trials) {
  check_both_classes(trials);
  const CnnFusionConfig& cfg = model.config();
  Adam adam;
  std::vector<EpochRecord> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = decay_lr(cfg.lr, epoch);
    const auto batches =
        make_batches(epoch_order(trials.size(), cfg.seed, epoch),
                     static_cast<std::size_t>(cfg.batch_size));
    double total = 0.0;
    for (const auto& batch : batches) {
      model.params().zero_grad();
      Tape tape;
      Var logits = model.forward(tape, stack_maps(table, trials, batch, model.dim()),
                                 static_cast<Index>(batch.size()));
      const auto y = labels_of(trials, batch);
      Var loss = ops::bce_with_logits(logits, y);
      tape.backward(loss);
      adam.step(model.params(), lr);
      total += loss.item();
    }
    log.push_back({epoch, lr, total / static_cast<double>(batches.size())});
  }
  return log;
}

std::vector<double> score_trials(const EmbeddingTable& table,
                                 const std::vector<Trial>& trials,
                                 ScoreStrategy strategy,
                                 const CnnFusionModel* cnn) {
  if (strategy == ScoreStrategy::kCnn) {
    if (cnn == nullptr) throw ContractError("cnn scoring needs a model");
    return cnn->score(table, trials);
  }
  std::vector<double> out;
  out.reserve(trials.size());
  for (const Trial& t : trials) {
    const EmbeddingRecord& e = lookup(table, t.enroll);
    const EmbeddingRecord& v = lookup(table, t.test);
    switch (strategy) {
      case ScoreStrategy::kSpeaker:
        if (e.speaker.size() == 0 || v.speaker.size() == 0) {
          throw ContractError("speaker scoring needs speaker embeddings");
        }
        out.push_back(cosine(e.speaker, v.speaker));
        break;
      case ScoreStrategy::kAdd:
        out.push_back(cosine(fuse_add(e), fuse_add(v)));
        break;
      case ScoreStrategy::kMul:
        out.push_back(cosine(fuse_mul(e), fuse_mul(v)));
        break;
      case ScoreStrategy::kCnn:
        break;
    }
  }
  return out;
}

ScoreSet to_score_set(const std::vector<Trial>& trials,
                      const std::vector<double>& scores) {
  if (trials.size() != scores.size()) {
    throw DimensionError("one score per trial required");
  }
  ScoreSet s;
  s.scores = scores;
  for (const Trial& t : trials) s.targets.push_back(t.target);
  return s;
}

}  // namespace digitsv
