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

#include "digitsv/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "digitsv/checkpoint.hpp"
#include "digitsv/csv.hpp"
#include "digitsv/error.hpp"
#include "digitsv/metrics.hpp"

namespace digitsv {

namespace {

nlohmann::json synth_to_json(const SynthConfig& s) {
  return {{"sample_rate", s.sample_rate},
          {"digit_seconds", s.digit_seconds},
          {"pause_seconds", s.pause_seconds},
          {"jitter", s.jitter},
          {"amplitude", s.amplitude},
          {"max_speakers", s.max_speakers}};
}

SynthConfig synth_from_json(const nlohmann::json& j) {
  SynthConfig s;
  for (const auto& [key, value] : j.items()) {
    if (key == "sample_rate") s.sample_rate = value.get<int>();
    else if (key == "digit_seconds") s.digit_seconds = value.get<double>();
    else if (key == "pause_seconds") s.pause_seconds = value.get<double>();
    else if (key == "jitter") s.jitter = value.get<double>();
    else if (key == "amplitude") s.amplitude = value.get<double>();
    else if (key == "max_speakers") s.max_speakers = value.get<int>();
    else throw ContractError("synth: unknown key '" + key + "'");
  }
  return s;
}

TextPattern pattern_from_json(const nlohmann::json& j) {
  TextPattern p;
  for (const auto& [key, value] : j.items()) {
    if (key == "id") p.id = value.get<std::string>();
    else if (key == "tokens") p.tokens = tokens_from_string(value.get<std::string>());
    else if (key == "nominal_duration") p.nominal_duration = value.get<double>();
    else throw ContractError("pattern: unknown key '" + key + "'");
  }
  if (p.id.empty() || p.tokens.empty()) {
    throw ContractError("pattern needs an id and tokens");
  }
  return p;
}

void check_object(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw ContractError(what + " must be a JSON object");
}

template <typename T>
T parse_section(const nlohmann::json& j, const std::string& what,
                T (*parse)(const nlohmann::json&)) {
  check_object(j, what);
  return parse(j);
}

}  // namespace

nlohmann::json to_json(const CorpusConfig& c) {
  nlohmann::json patterns = nlohmann::json::array();
  for (const TextPattern& p : c.patterns) {
    patterns.push_back({{"id", p.id},
                        {"tokens", tokens_to_string(p.tokens)},
                        {"nominal_duration", p.nominal_duration}});
  }
  return {{"speakers", c.speakers},
          {"utterances_per_cell", c.utterances_per_cell},
          {"patterns", patterns},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed},
          {"synth", synth_to_json(c.synth)},
          {"speed_factors", c.speed_factors}};
}

CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  check_object(j, "corpus");
  CorpusConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "speakers") c.speakers = value.get<int>();
    else if (key == "utterances_per_cell") c.utterances_per_cell = value.get<int>();
    else if (key == "test_fraction") c.test_fraction = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "synth") c.synth = synth_from_json(value);
    else if (key == "speed_factors") c.speed_factors = value.get<std::vector<double>>();
    else if (key == "patterns") {
      c.patterns.clear();
      for (const auto& p : value) c.patterns.push_back(pattern_from_json(p));
    } else {
      throw ContractError("corpus: unknown key '" + key + "'");
    }
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ContractError("output_dir is empty");
  if (corpus.speakers < 2) throw ContractError("corpus: need at least 2 speakers");
  if (corpus.patterns.size() < 2) throw ContractError("corpus: need at least 2 patterns");
  if (corpus.utterances_per_cell < 1) {
    throw ContractError("corpus: need at least 1 utterance per cell");
  }
  if (!(corpus.test_fraction > 0.0 && corpus.test_fraction < 1.0)) {
    throw ContractError("corpus: test_fraction must lie in (0, 1)");
  }
  for (double f : corpus.speed_factors) {
    if (!(f > 0.0)) throw ContractError("corpus: speed factors must be positive");
  }
  mfcc.validate();
  speaker.validate();
  aam.validate();
  speaker_train.validate();
  text.validate();
  text_train.validate();
  trials.validate();
  cnn.validate();
  if (speaker.n_coeffs != mfcc.n_coeffs || text.n_coeffs != mfcc.n_coeffs) {
    throw ContractError("model n_coeffs must equal mfcc n_coeffs");
  }
  if ((strategy == ScoreStrategy::kAdd || strategy == ScoreStrategy::kMul ||
       strategy == ScoreStrategy::kCnn) &&
      speaker.embed_dim != text.embed_dim) {
    throw ContractError("fusion needs equal speaker and text embedding widths");
  }
  if (sweep.empty()) throw ContractError("sweep grid is empty");
  for (const SweepCell& c : sweep) {
    if (c.window < 1 || c.stride < 1) {
      throw ContractError("sweep cells need window >= 1 and stride >= 1");
    }
  }
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  speaker_train.seed = s;
  text_train.seed = s;
  cnn.seed = s;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json grid = nlohmann::json::array();
  for (const SweepCell& s : c.sweep) {
    grid.push_back({{"w", s.window}, {"s", s.stride}});
  }
  nlohmann::json speaker_train = to_json(c.speaker_train);
  nlohmann::json text_train = to_json(c.text_train);
  nlohmann::json cnn = to_json(c.cnn);
  speaker_train.erase("seed");
  text_train.erase("seed");
  cnn.erase("seed");
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"corpus", to_json(c.corpus)},
          {"mfcc", to_json(c.mfcc)},
          {"speaker",
           {{"model", to_json(c.speaker)},
            {"aam", to_json(c.aam)},
            {"train", speaker_train}}},
          {"text", {{"model", to_json(c.text)}, {"train", text_train}}},
          {"trials", to_json(c.trials)},
          {"fusion", {{"strategy", to_string(c.strategy)}, {"cnn", cnn}}},
          {"sweep", {{"grid", grid}}}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  check_object(j, "config");
  ExperimentConfig c;
  auto no_seed = [](const nlohmann::json& s, const std::string& what) {
    check_object(s, what);
    if (s.contains("seed")) {
      throw ContractError(what + ": seeds come from the top-level 'seed'");
    }
  };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "output_dir") {
        c.output_dir = value.get<std::string>();
      } else if (key == "corpus") {
        c.corpus = corpus_config_from_json(value);
      } else if (key == "mfcc") {
        c.mfcc = parse_section(value, "mfcc", &mfcc_config_from_json);
      } else if (key == "speaker") {
        check_object(value, "speaker");
        for (const auto& [k, v] : value.items()) {
          if (k == "model") c.speaker = parse_section(v, "speaker.model", &ecapa_config_from_json);
          else if (k == "aam") c.aam = parse_section(v, "speaker.aam", &aam_config_from_json);
          else if (k == "train") {
            no_seed(v, "speaker.train");
            c.speaker_train = speaker_train_config_from_json(v);
          } else {
            throw ContractError("speaker: unknown key '" + k + "'");
          }
        }
      } else if (key == "text") {
        check_object(value, "text");
        for (const auto& [k, v] : value.items()) {
          if (k == "model") c.text = parse_section(v, "text.model", &text_config_from_json);
          else if (k == "train") {
            no_seed(v, "text.train");
            c.text_train = text_train_config_from_json(v);
          } else {
            throw ContractError("text: unknown key '" + k + "'");
          }
        }
      } else if (key == "trials") {
        c.trials = parse_section(value, "trials", &trial_counts_from_json);
      } else if (key == "fusion") {
        check_object(value, "fusion");
        for (const auto& [k, v] : value.items()) {
          if (k == "strategy") c.strategy = score_strategy_from_string(v.get<std::string>());
          else if (k == "cnn") {
            no_seed(v, "fusion.cnn");
            c.cnn = cnn_fusion_config_from_json(v);
          } else {
            throw ContractError("fusion: unknown key '" + k + "'");
          }
        }
      } else if (key == "sweep") {
        check_object(value, "sweep");
        for (const auto& [k, v] : value.items()) {
          if (k != "grid") throw ContractError("sweep: unknown key '" + k + "'");
          c.sweep.clear();
          for (const auto& cell : v) {
            check_object(cell, "sweep cell");
            SweepCell s;
            for (const auto& [ck, cv] : cell.items()) {
              if (ck == "w") s.window = cv.get<int>();
              else if (ck == "s") s.stride = cv.get<int>();
              else throw ContractError("sweep cell: unknown key '" + ck + "'");
            }
            c.sweep.push_back(s);
          }
        }
      } else {
        throw ContractError("config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  c.set_seed(c.seed);
  c.validate();
  return c;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("DIGITSV_SEED");
  if (v == nullptr) return std::nullopt;
  const std::string s(v);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ContractError("DIGITSV_SEED must be a non-negative integer, got '" +
                        s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw ContractError("DIGITSV_SEED is out of range");
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig c;
  if (!path.empty()) {
    nlohmann::json j;
    try {
      j = read_json_file(path);
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("config '" + path.string() + "': " + e.what());
    }
    // A run manifest carries the effective config of the run it records.
    if (j.is_object() && j.value("format", "") == "digitsv-run-v1") {
      j = j.at("config");
    }
    c = experiment_config_from_json(j);
  }
  if (const auto s = seed_from_env()) c.set_seed(*s);
  c.validate();
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

nlohmann::json to_json(const RunManifest& r) {
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [name, path] : r.inputs) {
    inputs[name] = {{"path", path.string()}, {"fnv1a64", file_hash(path)}};
  }
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& [name, path] : r.outputs) {
    outputs[name] = {{"path", path.string()},
                     {"fnv1a64", std::filesystem::is_regular_file(path)
                                     ? file_hash(path)
                                     : std::string()}};
  }
  return {{"format", "digitsv-run-v1"},
          {"command", r.command},
          {"argv", r.argv},
          {"seed", r.seed},
          {"config", r.config},
          {"config_hash", config_hash(r.config)},
          {"inputs", inputs},
          {"outputs", outputs}};
}

void write_run_manifest(const std::filesystem::path& dir, const RunManifest& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_json_file(dir / "run.json", to_json(r));
}

UtteranceIndex::UtteranceIndex(const Manifest& m) {
  for (const Utterance& u : m.utterances) by_id_[u.utterance_id] = &u;
}

const Utterance& UtteranceIndex::at(const std::string& utterance_id) const {
  const auto it = by_id_.find(utterance_id);
  if (it == by_id_.end()) {
    throw ContractError("utterance '" + utterance_id + "' is not in the manifest");
  }
  return *it->second;
}

std::vector<FeatureMatrix> select_split(const Manifest& m,
                                        const std::vector<FeatureMatrix>& feats,
                                        const std::string& split) {
  std::map<std::string, const FeatureMatrix*> by_id;
  for (const FeatureMatrix& f : feats) by_id[f.utterance_id] = &f;
  std::vector<FeatureMatrix> out;
  for (const Utterance* u : m.split(split)) {
    const auto it = by_id.find(u->utterance_id);
    if (it == by_id.end()) {
      throw ContractError("no features for utterance '" + u->utterance_id + "'");
    }
    out.push_back(*it->second);
  }
  if (out.empty()) throw ContractError("split '" + split + "' is empty");
  return out;
}

SpeakerModel train_speaker_model(const Manifest& m,
                                 const std::vector<FeatureMatrix>& train,
                                 const EcapaLiteConfig& model_cfg,
                                 const AamConfig& aam,
                                 const SpeakerTrainConfig& train_cfg,
                                 std::vector<EpochRecord>* log) {
  if (train.empty()) throw ContractError("speaker training: empty corpus");
  const LabeledSet labels = label_features(m, train, train_cfg.label_mode);
  SpeakerModel model(model_cfg, aam, labels.classes, train_cfg.seed);
  model.fit_input_normalization(train);
  SpeakerTrainer trainer(model, train, labels.labels, train_cfg);
  for (int e = 0; e < train_cfg.epochs; ++e) trainer.run_epoch();
  if (log) *log = trainer.log();
  return model;
}

TextModel train_text_model(const Manifest& m,
                           const std::vector<FeatureMatrix>& train,
                           const TextNetConfig& model_cfg,
                           const TextTrainConfig& train_cfg,
                           std::vector<EpochRecord>* log,
                           std::vector<StepLosses>* steps) {
  if (train.empty()) throw ContractError("text training: empty corpus");
  std::set<std::string> ids;
  for (const Utterance& u : m.utterances) ids.insert(u.pattern_id);
  TextModel model(model_cfg, {ids.begin(), ids.end()}, train_cfg.seed);
  model.fit_input_normalization(train);
  TextTrainer trainer(model, m, train, train_cfg);
  for (int e = 0; e < train_cfg.epochs; ++e) trainer.run_epoch();
  if (log) *log = trainer.log();
  if (steps) *steps = trainer.steps();
  return model;
}

std::vector<EmbeddingRecord> embed_utterances(
    const Manifest& m, const std::vector<FeatureMatrix>& feats,
    const SpeakerModel* speaker, const TextModel* text) {
  if (!speaker && !text) throw ContractError("embed: no model given");
  const UtteranceIndex index(m);
  std::vector<Vector> spk, txt;
  if (speaker) spk = speaker->embed_all(feats);
  if (text) txt = text->embed_all(feats);
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const Utterance& u = index.at(feats[i].utterance_id);
    out.push_back({u.utterance_id, u.speaker_id, u.pattern_id,
                   speaker ? spk[i] : Vector(), text ? txt[i] : Vector()});
  }
  return out;
}

std::vector<SweepRow> sweep_pooling(const Manifest& m,
                                    const std::vector<FeatureMatrix>& feats,
                                    const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.speaker.pooling.has_swasp()) {
    throw ContractError("sweep: pooling kind '" +
                        to_string(cfg.speaker.pooling.kind) +
                        "' has no sliding window");
  }
  const auto train = select_split(m, feats, "train");
  const auto test = select_split(m, feats, "test");
  const auto trials = make_trials(m, "test", cfg.trials, cfg.seed);
  std::vector<SweepRow> rows;
  for (const SweepCell& cell : cfg.sweep) {
    const std::string where = "sweep cell (window=" + std::to_string(cell.window) +
                              ", stride=" + std::to_string(cell.stride) + "): ";
    try {
      EcapaLiteConfig model_cfg = cfg.speaker;
      model_cfg.pooling.window = cell.window;
      model_cfg.pooling.stride = cell.stride;
      const SpeakerModel model = train_speaker_model(m, train, model_cfg, cfg.aam,
                                                     cfg.speaker_train);
      const EmbeddingTable table =
          index_records(embed_utterances(m, test, &model, nullptr));
      const auto scores = score_trials(table, trials, ScoreStrategy::kSpeaker);
      const EvalReport r = evaluate(to_score_set(trials, scores));
      rows.push_back({cell.window, cell.stride, r.eer.value, r.min_dcf.value});
    } catch (const ContractError& e) {
      throw ContractError(where + e.what());
    } catch (const DimensionError& e) {
      throw DimensionError(where + e.what());
    } catch (const NumericError& e) {
      throw NumericError(where + e.what());
    } catch (const IoError& e) {
      throw IoError(where + e.what());
    }
  }
  return rows;
}

void write_sweep(const std::filesystem::path& path,
                 const std::vector<SweepRow>& rows) {
  std::vector<csv::Row> out{{"window", "stride", "eer", "min_dcf"}};
  for (const SweepRow& r : rows) {
    out.push_back({std::to_string(r.window), std::to_string(r.stride),
                   csv::format_double(r.eer), csv::format_double(r.min_dcf)});
  }
  csv::write(path, out);
}

std::vector<SweepRow> read_sweep(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  const csv::Row header{"window", "stride", "eer", "min_dcf"};
  if (rows.empty() || rows.front() != header) {
    throw IoError("sweep file '" + path.string() + "' has a bad header");
  }
  std::vector<SweepRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) {
      throw IoError("sweep row " + std::to_string(i) + " is malformed");
    }
    out.push_back({static_cast<int>(csv::parse_int(rows[i][0])),
                   static_cast<int>(csv::parse_int(rows[i][1])),
                   csv::parse_double(rows[i][2]), csv::parse_double(rows[i][3])});
  }
  return out;
}

void write_det(const std::filesystem::path& path,
               const std::vector<DetPoint>& det) {
  std::vector<csv::Row> out{{"threshold", "far", "frr"}};
  for (const DetPoint& p : det) {
    out.push_back({csv::format_double(p.threshold), csv::format_double(p.far),
                   csv::format_double(p.frr)});
  }
  csv::write(path, out);
}

}  // namespace digitsv
