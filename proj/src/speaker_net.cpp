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

#include "digitsv/speaker_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "digitsv/checkpoint.hpp"
#include "digitsv/error.hpp"

namespace digitsv {

void EcapaLiteConfig::validate() const {
  if (n_coeffs < 1 || stem_channels < 1 || channels < 1) {
    throw ContractError("ecapa: channel counts must be >= 1");
  }
  if (embed_dim < 2) throw ContractError("ecapa: embed_dim must be >= 2");
  if (stem_kernel < 1 || stem_kernel % 2 == 0 || kernel < 1 ||
      kernel % 2 == 0) {
    throw ContractError("ecapa: kernels must be odd");
  }
  if (dilations.empty()) throw ContractError("ecapa: need at least one block");
  for (int d : dilations) {
    if (d < 1) throw ContractError("ecapa: dilation must be >= 1");
  }
  pooling.validate();
}

nlohmann::json to_json(const EcapaLiteConfig& c) {
  return {{"n_coeffs", c.n_coeffs},       {"stem_channels", c.stem_channels},
          {"stem_kernel", c.stem_kernel}, {"dilations", c.dilations},
          {"kernel", c.kernel},           {"channels", c.channels},
          {"embed_dim", c.embed_dim},     {"pooling", to_json(c.pooling)}};
}

EcapaLiteConfig ecapa_config_from_json(const nlohmann::json& j) {
  EcapaLiteConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_coeffs") c.n_coeffs = value.get<int>();
    else if (key == "stem_channels") c.stem_channels = value.get<int>();
    else if (key == "stem_kernel") c.stem_kernel = value.get<int>();
    else if (key == "dilations") c.dilations = value.get<std::vector<int>>();
    else if (key == "kernel") c.kernel = value.get<int>();
    else if (key == "channels") c.channels = value.get<int>();
    else if (key == "embed_dim") c.embed_dim = value.get<int>();
    else if (key == "pooling") c.pooling = pooling_config_from_json(value);
    else throw ContractError("ecapa: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void AamConfig::validate() const {
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
    throw ContractError("aam: margin must be in [0, pi/2)");
  }
  if (!(scale > 0.0)) throw ContractError("aam: scale must be positive");
}

nlohmann::json to_json(const AamConfig& c) {
  return {{"margin", c.margin}, {"scale", c.scale}};
}

AamConfig aam_config_from_json(const nlohmann::json& j) {
  AamConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "margin") c.margin = value.get<double>();
    else if (key == "scale") c.scale = value.get<double>();
    else throw ContractError("aam: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

// Replaces each target cosine c by cos(min(acos(c) + m, pi)).
Var angular_margin(const Var& cosines, std::span<const int> labels,
                   double margin) {
  constexpr double kEdge = 1.0 - 1e-7;
  Matrix out = cosines.value();
  Vector slope = Vector::Zero(out.rows());
  for (Index b = 0; b < out.rows(); ++b) {
    const double c =
        std::clamp(out(b, labels[static_cast<std::size_t>(b)]), -kEdge, kEdge);
    const double widened = std::acos(c) + margin;
    if (widened < std::numbers::pi) {
      out(b, labels[static_cast<std::size_t>(b)]) = std::cos(widened);
      slope(b) = std::sin(widened) / std::sqrt(1.0 - c * c);
    } else {
      out(b, labels[static_cast<std::size_t>(b)]) = -1.0;
    }
  }
  std::vector<int> ids(labels.begin(), labels.end());
  return cosines.tape()->record(
      "angular_margin", std::move(out), {cosines},
      [cosines, ids = std::move(ids), slope](Tape& tp, const Matrix& g) {
        Matrix d = g;
        for (Index b = 0; b < d.rows(); ++b) {
          d(b, ids[static_cast<std::size_t>(b)]) *= slope(b);
        }
        tp.accumulate(cosines, d);
      });
}

}  // namespace

Var aam_softmax_loss(const Var& embeddings, std::span<const int> labels,
                     const Var& weights, const AamConfig& cfg) {
  cfg.validate();
  if (static_cast<Index>(labels.size()) != embeddings.rows()) {
    throw DimensionError("aam: one label per embedding required");
  }
  if (embeddings.cols() != weights.cols()) {
    throw DimensionError("aam: embedding and class weight widths differ");
  }
  for (int y : labels) {
    if (y < 0 || y >= weights.rows()) {
      throw ContractError("aam: class index " + std::to_string(y) +
                          " out of range");
    }
  }
  Var cosines = ops::matmul(ops::normalize_rows(embeddings),
                            ops::transpose(ops::normalize_rows(weights)));
  Var logits = ops::scale(angular_margin(cosines, labels, cfg.margin),
                          cfg.scale);
  return ops::cross_entropy(logits, labels);
}

std::string to_string(LabelMode m) {
  return m == LabelMode::kSpeaker ? "speaker" : "speaker_text";
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "speaker") return LabelMode::kSpeaker;
  if (s == "speaker_text") return LabelMode::kSpeakerText;
  throw ContractError("unknown label mode '" + s + "'");
}

std::string class_key(const Utterance& u, LabelMode mode) {
  return mode == LabelMode::kSpeaker ? u.speaker_id
                                     : u.speaker_id + "/" + u.pattern_id;
}

SpeakerModel::SpeakerModel(const EcapaLiteConfig& cfg, const AamConfig& aam,
                           std::vector<std::string> classes,
                           std::uint64_t seed)
    : cfg_(cfg), aam_(aam), classes_(std::move(classes)) {
  cfg_.validate();
  aam_.validate();
  if (classes_.size() < 2) throw ContractError("need at least two classes");
  Rng rng(seed);
  const Index n = cfg_.n_coeffs;
  const Index stem = cfg_.stem_channels;
  input_mean_ = &store_.create("input.mean", {n}, n, 1, false);
  input_scale_ = &store_.create("input.scale", {n}, n, 1, false);
  input_scale_->value.setOnes();

  stem_ = Conv1d(store_, "stem.conv", n, stem, cfg_.stem_kernel, 1,
                 Conv1d::same_padding(cfg_.stem_kernel, 1), rng);
  stem_bn_ = BatchNorm1d(store_, "stem.bn", stem);
  for (std::size_t i = 0; i < cfg_.dilations.size(); ++i) {
    const int d = cfg_.dilations[i];
    const std::string p = "block" + std::to_string(i);
    block_conv_.emplace_back(store_, p + ".conv", stem, stem, cfg_.kernel, d,
                             Conv1d::same_padding(cfg_.kernel, d), rng);
    block_bn_.emplace_back(store_, p + ".bn", stem);
  }
  const Index blocks = static_cast<Index>(cfg_.dilations.size());
  mfa_ = Conv1d(store_, "mfa.conv", blocks * stem, cfg_.channels, 1, 1, 0, rng);
  pool_ = PoolingHead(store_, "pooling", cfg_.channels, cfg_.pooling, rng);
  head_bn_ = BatchNorm1d(store_, "head.bn", pool_.output_dim());
  head_ = Linear(store_, "head.linear", pool_.output_dim(), cfg_.embed_dim,
                 true, rng);
  const Index k = static_cast<Index>(classes_.size());
  class_weights_ =
      &store_.create("aam.weight", {k, cfg_.embed_dim}, k, cfg_.embed_dim);
  xavier_uniform(*class_weights_, cfg_.embed_dim, k, rng);
}

Var SpeakerModel::frame_encode(Tape& tape, const Var& x,
                               std::span<const Index> lengths,
                               const Context& ctx) const {
  if (x.rows() != cfg_.n_coeffs) {
    throw DimensionError("speaker model expects " +
                         std::to_string(cfg_.n_coeffs) + " coefficients");
  }
  Var h = stem_bn_(tape, ops::relu(stem_(tape, x, lengths)), ctx);
  std::vector<Var> outs;
  for (std::size_t i = 0; i < block_conv_.size(); ++i) {
    Var y = block_bn_[i](tape, ops::relu(block_conv_[i](tape, h, lengths)),
                         ctx);
    h = ops::add(h, y);
    outs.push_back(h);
  }
  Var cat = outs.size() == 1 ? outs.front() : ops::concat(outs, 0);
  return ops::relu(mfa_(tape, cat));
}

Matrix SpeakerModel::prepare(const Matrix& frames) const {
  if (frames.cols() != cfg_.n_coeffs) {
    throw DimensionError("speaker model expects " +
                         std::to_string(cfg_.n_coeffs) + " coefficients, got " +
                         std::to_string(frames.cols()));
  }
  if (frames.rows() < 1) throw DimensionError("utterance has no frames");
  Matrix x = frames.transpose();
  x.colwise() -= input_mean_->value.col(0);
  x.array().colwise() *= input_scale_->value.col(0).array();
  return x;
}

Var SpeakerModel::embed_batch(Tape& tape,
                              const std::vector<const Matrix*>& frames,
                              const Context& ctx) const {
  if (frames.empty()) throw ContractError("empty batch");
  std::vector<Index> lengths;
  Index total = 0;
  for (const Matrix* f : frames) {
    lengths.push_back(f->rows());
    total += f->rows();
  }
  Matrix x(cfg_.n_coeffs, total);
  Index off = 0;
  for (const Matrix* f : frames) {
    x.middleCols(off, f->rows()) = prepare(*f);
    off += f->rows();
  }
  Var m = frame_encode(tape, tape.constant(std::move(x)), lengths, ctx);
  std::vector<Var> pooled;
  off = 0;
  for (Index len : lengths) {
    Var seg = frames.size() == 1 ? m : ops::slice(m, 1, off, off + len);
    pooled.push_back(pool_(tape, seg));
    off += len;
  }
  Var stats = pooled.size() == 1 ? pooled.front() : ops::concat(pooled, 1);
  stats = head_bn_(tape, stats, ctx);
  return head_(tape, ops::transpose(stats));
}

Var SpeakerModel::loss(Tape& tape, const std::vector<const Matrix*>& frames,
                       std::span<const int> labels, const Context& ctx) const {
  Var e = embed_batch(tape, frames, ctx);
  return aam_softmax_loss(e, labels, tape.param(*class_weights_), aam_);
}

Vector SpeakerModel::embed(const Matrix& frames) const {
  Tape tape;
  Var e = embed_batch(tape, {&frames}, Context{Mode::kEval, false});
  return e.value().row(0).transpose();
}

std::vector<Vector> SpeakerModel::embed_all(
    const std::vector<FeatureMatrix>& feats, std::size_t batch) const {
  std::vector<Vector> out;
  out.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); i += batch) {
    std::vector<const Matrix*> group;
    for (std::size_t k = i; k < std::min(feats.size(), i + batch); ++k) {
      group.push_back(&feats[k].frames);
    }
    Tape tape;
    Var e = embed_batch(tape, group, Context{Mode::kEval, false});
    for (Index r = 0; r < e.rows(); ++r) {
      out.push_back(e.value().row(r).transpose());
    }
  }
  return out;
}

void SpeakerModel::fit_input_normalization(
    const std::vector<FeatureMatrix>& feats) {
  const Standardizer st = fit_standardizer(feats, cfg_.n_coeffs);
  input_mean_->value = st.mean;
  input_scale_->value = st.inv_std;
}

nlohmann::json SpeakerModel::to_json() const {
  return {{"format", "digitsv-speaker-v1"},
          {"config", digitsv::to_json(cfg_)},
          {"aam", digitsv::to_json(aam_)},
          {"classes", classes_},
          {"parameters", parameters_to_json(store_)}};
}

SpeakerModel SpeakerModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "digitsv-speaker-v1") {
    throw IoError("not a speaker model checkpoint");
  }
  SpeakerModel m(ecapa_config_from_json(j.at("config")),
                 aam_config_from_json(j.at("aam")),
                 j.at("classes").get<std::vector<std::string>>(), 0);
  parameters_from_json(m.store_, j.at("parameters"));
  return m;
}

void SpeakerTrainConfig::validate() const {
  if (epochs < 0) throw ContractError("train: epochs must be >= 0");
  if (batch_size < 2) throw ContractError("train: batch size must be >= 2");
  if (!(lr > 0.0)) throw ContractError("train: lr must be positive");
}

nlohmann::json to_json(const SpeakerTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"label_mode", to_string(c.label_mode)}};
}

SpeakerTrainConfig speaker_train_config_from_json(const nlohmann::json& j) {
  SpeakerTrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "label_mode")
      c.label_mode = label_mode_from_string(value.get<std::string>());
    else throw ContractError("speaker training: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

LabeledSet label_features(const Manifest& m,
                          const std::vector<FeatureMatrix>& feats,
                          LabelMode mode) {
  std::map<std::string, const Utterance*> by_id;
  for (const Utterance& u : m.utterances) by_id[u.utterance_id] = &u;
  std::vector<std::string> keys;
  for (const FeatureMatrix& f : feats) {
    auto it = by_id.find(f.utterance_id);
    if (it == by_id.end()) {
      throw ContractError("utterance '" + f.utterance_id +
                          "' is not in the manifest");
    }
    keys.push_back(class_key(*it->second, mode));
  }
  std::set<std::string> unique(keys.begin(), keys.end());
  LabeledSet out;
  out.classes.assign(unique.begin(), unique.end());
  for (const std::string& k : keys) {
    out.labels.push_back(static_cast<int>(
        std::lower_bound(out.classes.begin(), out.classes.end(), k) -
        out.classes.begin()));
  }
  return out;
}

SpeakerTrainer::SpeakerTrainer(SpeakerModel& model,
                               const std::vector<FeatureMatrix>& feats,
                               std::vector<int> labels,
                               const SpeakerTrainConfig& cfg)
    : model_(model), feats_(feats), labels_(std::move(labels)), cfg_(cfg) {
  cfg_.validate();
  if (feats_.size() < 2) throw ContractError("train: need at least two utterances");
  if (labels_.size() != feats_.size()) {
    throw DimensionError("train: one label per utterance required");
  }
}

EpochRecord SpeakerTrainer::run_epoch() {
  const double lr = decay_lr(cfg_.lr, epoch_);
  const auto order = epoch_order(feats_.size(), cfg_.seed, epoch_);
  const auto batches =
      make_training_batches(order, static_cast<std::size_t>(cfg_.batch_size));
  const Context ctx{Mode::kTrain, true};
  double total = 0.0;
  for (const auto& batch : batches) {
    std::vector<const Matrix*> frames;
    std::vector<int> labels;
    for (std::size_t i : batch) {
      frames.push_back(&feats_[i].frames);
      labels.push_back(labels_[i]);
    }
    model_.params().zero_grad();
    Tape tape;
    Var loss = model_.loss(tape, frames, labels, ctx);
    tape.backward(loss);
    adam_.step(model_.params(), lr);
    total += loss.item();
  }
  EpochRecord rec{epoch_, lr, total / static_cast<double>(batches.size())};
  log_.push_back(rec);
  ++epoch_;
  return rec;
}

double SpeakerTrainer::evaluate_loss() const {
  std::vector<std::size_t> order(feats_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batches =
      make_training_batches(order, static_cast<std::size_t>(cfg_.batch_size));
  const Context ctx{Mode::kTrain, false};
  double total = 0.0;
  for (const auto& batch : batches) {
    std::vector<const Matrix*> frames;
    std::vector<int> labels;
    for (std::size_t i : batch) {
      frames.push_back(&feats_[i].frames);
      labels.push_back(labels_[i]);
    }
    Tape tape;
    total += model_.loss(tape, frames, labels, ctx).item();
  }
  return total / static_cast<double>(batches.size());
}

nlohmann::json SpeakerTrainer::state() const {
  return {{"epoch", epoch_},
          {"adam", adam_.to_json()},
          {"log", to_json(log_)},
          {"train", to_json(cfg_)}};
}

void SpeakerTrainer::load_state(const nlohmann::json& j) {
  epoch_ = j.at("epoch").get<int>();
  adam_.load_json(j.at("adam"));
  log_ = training_log_from_json(j.at("log"));
}

}  // namespace digitsv
