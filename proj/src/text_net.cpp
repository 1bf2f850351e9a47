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

#include "digitsv/text_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "digitsv/checkpoint.hpp"
#include "digitsv/csv.hpp"
#include "digitsv/ctc.hpp"
#include "digitsv/error.hpp"
#include "digitsv/ops.hpp"

namespace digitsv {

namespace vocab {

std::string symbol(int id) {
  if (id >= 0 && id < kPause) return std::to_string(id);
  switch (id) {
    case kPause: return "<pause>";
    case kBlank: return "<blank>";
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    default: break;
  }
  throw ContractError("token id " + std::to_string(id) + " outside the vocabulary");
}

std::vector<std::string> symbols() {
  std::vector<std::string> out;
  for (int i = 0; i < kSize; ++i) out.push_back(symbol(i));
  return out;
}

}  // namespace vocab

void TextNetConfig::validate() const {
  if (n_coeffs < 1 || d_model < 1 || d_qkv < 1 || ffn < 1 ||
      conv_channels < 1 || asp_hidden < 1 || embed_dim < 1) {
    throw ContractError("text net: widths must be >= 1");
  }
  if (heads < 1 || d_qkv % heads != 0) {
    throw ContractError("text net: d_qkv must be divisible by heads");
  }
  if (encoder_blocks < 1 || decoder_blocks < 1 || ctc_blocks < 1) {
    throw ContractError("text net: need at least one block per stack");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw ContractError("text net: kernel must be odd");
  }
}

nlohmann::json to_json(const TextNetConfig& c) {
  return {{"n_coeffs", c.n_coeffs},
          {"d_model", c.d_model},
          {"d_qkv", c.d_qkv},
          {"heads", c.heads},
          {"encoder_blocks", c.encoder_blocks},
          {"decoder_blocks", c.decoder_blocks},
          {"ffn", c.ffn},
          {"conv_channels", c.conv_channels},
          {"kernel", c.kernel},
          {"ctc_blocks", c.ctc_blocks},
          {"asp_hidden", c.asp_hidden},
          {"embed_dim", c.embed_dim}};
}

TextNetConfig text_config_from_json(const nlohmann::json& j) {
  TextNetConfig c;
  const std::map<std::string, int*> fields{
      {"n_coeffs", &c.n_coeffs},
      {"d_model", &c.d_model},
      {"d_qkv", &c.d_qkv},
      {"heads", &c.heads},
      {"encoder_blocks", &c.encoder_blocks},
      {"decoder_blocks", &c.decoder_blocks},
      {"ffn", &c.ffn},
      {"conv_channels", &c.conv_channels},
      {"kernel", &c.kernel},
      {"ctc_blocks", &c.ctc_blocks},
      {"asp_hidden", &c.asp_hidden},
      {"embed_dim", &c.embed_dim}};
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw ContractError("text net: unknown key '" + key + "'");
    }
    *it->second = value.get<int>();
  }
  c.validate();
  return c;
}

void LossWeights::validate() const {
  if (!(classification >= 0.0 && ctc >= 0.0 && decoder >= 0.0)) {
    throw ContractError("loss weights must be non-negative");
  }
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"classification", w.classification},
          {"ctc", w.ctc},
          {"decoder", w.decoder}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  for (const auto& [key, value] : j.items()) {
    if (key == "classification") w.classification = value.get<double>();
    else if (key == "ctc") w.ctc = value.get<double>();
    else if (key == "decoder") w.decoder = value.get<double>();
    else throw ContractError("loss weights: unknown key '" + key + "'");
  }
  w.validate();
  return w;
}

double total_loss(double l1, double l2, double l3, const LossWeights& w) {
  w.validate();
  return w.classification * l1 + w.ctc * l2 + w.decoder * l3;
}

Var total_loss(const Var& l1, const Var& l2, const Var& l3,
               const LossWeights& w) {
  w.validate();
  return ops::add(ops::add(ops::scale(l1, w.classification),
                           ops::scale(l2, w.ctc)),
                  ops::scale(l3, w.decoder));
}

Matrix causal_mask(Index n) {
  constexpr double kHidden = -1e30;
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) m(i, j) = kHidden;
  }
  return m;
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store,
                                       const std::string& name, Index d_model,
                                       Index d_qkv, Index heads, Rng& rng)
    : query_(store, name + ".query", d_model, d_qkv, true, rng),
      key_(store, name + ".key", d_model, d_qkv, true, rng),
      value_(store, name + ".value", d_model, d_qkv, true, rng),
      out_(store, name + ".out", d_qkv, d_model, true, rng),
      heads_(heads),
      head_dim_(d_qkv / heads) {}

Var MultiHeadAttention::operator()(Tape& tape, const Var& xq, const Var& xkv,
                                   const Var& mask) const {
  Var q = query_(tape, xq);
  Var k = key_(tape, xkv);
  Var v = value_(tape, xkv);
  std::vector<Var> heads;
  for (Index h = 0; h < heads_; ++h) {
    const Index a = h * head_dim_, b = a + head_dim_;
    heads.push_back(scaled_dot_attention(ops::slice(q, 1, a, b),
                                         ops::slice(k, 1, a, b),
                                         ops::slice(v, 1, a, b), mask));
  }
  Var cat = heads.size() == 1 ? heads.front() : ops::concat(heads, 1);
  return out_(tape, cat);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name,
                         Index d_model, Index hidden, Rng& rng)
    : in_(store, name + ".in", d_model, hidden, true, rng),
      out_(store, name + ".out", hidden, d_model, true, rng) {}

Var FeedForward::operator()(Tape& tape, const Var& x) const {
  return out_(tape, ops::relu(in_(tape, x)));
}

EncoderBlock::EncoderBlock(ParameterStore& store, const std::string& name,
                           const TextNetConfig& cfg, Rng& rng)
    : ln_attn_(store, name + ".ln_attn", cfg.d_model),
      ln_ffn_(store, name + ".ln_ffn", cfg.d_model),
      attn_(store, name + ".attn", cfg.d_model, cfg.d_qkv, cfg.heads, rng),
      ffn_(store, name + ".ffn", cfg.d_model, cfg.ffn, rng) {}

Var EncoderBlock::operator()(Tape& tape, const Var& x) const {
  Var n = ln_attn_(tape, x);
  Var h = ops::add(x, attn_(tape, n, n));
  return ops::add(h, ffn_(tape, ln_ffn_(tape, h)));
}

DecoderBlock::DecoderBlock(ParameterStore& store, const std::string& name,
                           const TextNetConfig& cfg, Rng& rng)
    : ln_self_(store, name + ".ln_self", cfg.d_model),
      ln_cross_(store, name + ".ln_cross", cfg.d_model),
      ln_ffn_(store, name + ".ln_ffn", cfg.d_model),
      self_(store, name + ".self", cfg.d_model, cfg.d_qkv, cfg.heads, rng),
      cross_(store, name + ".cross", cfg.d_model, cfg.d_qkv, cfg.heads, rng),
      ffn_(store, name + ".ffn", cfg.d_model, cfg.ffn, rng) {}

Var DecoderBlock::operator()(Tape& tape, const Var& y, const Var& memory,
                             const Var& mask) const {
  Var n = ln_self_(tape, y);
  Var h = ops::add(y, self_(tape, n, n, mask));
  h = ops::add(h, cross_(tape, ln_cross_(tape, h), memory));
  return ops::add(h, ffn_(tape, ln_ffn_(tape, h)));
}

TextModel::TextModel(const TextNetConfig& cfg,
                     std::vector<std::string> patterns, std::uint64_t seed)
    : cfg_(cfg), patterns_(std::move(patterns)) {
  cfg_.validate();
  if (patterns_.size() < 2) throw ContractError("need at least two patterns");
  if (!std::is_sorted(patterns_.begin(), patterns_.end()) ||
      std::adjacent_find(patterns_.begin(), patterns_.end()) != patterns_.end()) {
    throw ContractError("pattern list must be sorted and unique");
  }
  Rng rng(seed);
  const Index n = cfg_.n_coeffs, d = cfg_.d_model, c = cfg_.conv_channels;
  const Index pad = Conv1d::same_padding(cfg_.kernel, 1);
  const auto p = static_cast<Index>(patterns_.size());
  input_mean_ = &store_.create("input.mean", {n}, n, 1, false);
  input_scale_ = &store_.create("input.scale", {n}, n, 1, false);
  input_scale_->value.setOnes();
  input_ = Linear(store_, "input.linear", n, d, true, rng);
  for (int i = 0; i < cfg_.encoder_blocks; ++i) {
    encoder_.emplace_back(store_, "encoder" + std::to_string(i), cfg_, rng);
  }
  encoder_ln_ = LayerNorm(store_, "encoder.ln", d);

  cls_conv_ = Conv1d(store_, "cls.conv", d, c, cfg_.kernel, 1, pad, rng);
  cls_bn_ = BatchNorm1d(store_, "cls.bn", c);
  cls_pool_ = AttentiveStatsPooling(store_, "cls.pool", c, cfg_.asp_hidden, rng);
  embed_ = Linear(store_, "cls.embed", 2 * c, cfg_.embed_dim, true, rng);
  cls_fc_ = Linear(store_, "cls.fc", cfg_.embed_dim, p, true, rng);
  cls_out_bn_ = BatchNorm1d(store_, "cls.out_bn", p);

  for (int i = 0; i < cfg_.ctc_blocks; ++i) {
    const std::string name = "ctc" + std::to_string(i);
    ctc_conv_.emplace_back(store_, name + ".conv", i == 0 ? d : c, c,
                           cfg_.kernel, 1, pad, rng);
    ctc_bn_.emplace_back(store_, name + ".bn", c);
  }
  ctc_out_ = Linear(store_, "ctc.out", c, vocab::kSize, true, rng);

  token_table_ = &store_.create("decoder.tokens", {vocab::kSize, d},
                                vocab::kSize, d);
  xavier_uniform(*token_table_, vocab::kSize, d, rng);
  hint_table_ = &store_.create("decoder.hints", {p, d}, p, d);
  xavier_uniform(*hint_table_, p, d, rng);
  for (int i = 0; i < cfg_.decoder_blocks; ++i) {
    decoder_.emplace_back(store_, "decoder" + std::to_string(i), cfg_, rng);
  }
  decoder_ln_ = LayerNorm(store_, "decoder.ln", d);
  decoder_out_ = Linear(store_, "decoder.out", d, vocab::kSize, true, rng);
}

Var TextModel::encode(Tape& tape, const Matrix& frames) const {
  if (frames.cols() != cfg_.n_coeffs) {
    throw DimensionError("text model expects " +
                         std::to_string(cfg_.n_coeffs) + " coefficients, got " +
                         std::to_string(frames.cols()));
  }
  if (frames.rows() < 1) throw DimensionError("utterance has no frames");
  Matrix x = frames;
  x.rowwise() -= input_mean_->value.col(0).transpose();
  x.array().rowwise() *= input_scale_->value.col(0).transpose().array();
  Var h = input_(tape, tape.constant(std::move(x)));
  h = ops::add(h, tape.constant(sinusoidal_encoding(frames.rows(),
                                                    cfg_.d_model)));
  for (const EncoderBlock& b : encoder_) h = b(tape, h);
  return encoder_ln_(tape, h);
}

namespace {

// Encoder outputs side by side as d_model x sum(T), with the lengths.
Var channels_by_time(const std::vector<Var>& encoded,
                     std::vector<Index>* lengths) {
  if (encoded.empty()) throw ContractError("empty batch");
  std::vector<Var> cols;
  for (const Var& x : encoded) {
    cols.push_back(ops::transpose(x));
    lengths->push_back(x.rows());
  }
  return cols.size() == 1 ? cols.front() : ops::concat(cols, 1);
}

std::vector<Var> split_columns(const Var& x, std::span<const Index> lengths) {
  std::vector<Var> out;
  if (lengths.size() == 1) return {x};
  Index off = 0;
  for (Index len : lengths) {
    out.push_back(ops::slice(x, 1, off, off + len));
    off += len;
  }
  return out;
}

void check_tokens(std::span<const int> tokens) {
  for (int t : tokens) {
    if (t < 0 || t > vocab::kPause) {
      throw ContractError("target token " + std::to_string(t) +
                          " is not a digit or pause");
    }
  }
}

}  // namespace

Var TextModel::embed_batch(Tape& tape, const std::vector<Var>& encoded,
                           const Context& ctx) const {
  std::vector<Index> lengths;
  Var x = channels_by_time(encoded, &lengths);
  Var h = cls_bn_(tape, ops::relu(cls_conv_(tape, x, lengths)), ctx);
  std::vector<Var> pooled;
  for (const Var& seg : split_columns(h, lengths)) {
    PooledStats s = cls_pool_(tape, seg);
    pooled.push_back(ops::concat({s.mean, s.stddev}, 0));
  }
  Var stats = pooled.size() == 1 ? pooled.front() : ops::concat(pooled, 1);
  return embed_(tape, ops::transpose(stats));
}

Var TextModel::class_logits(Tape& tape, const Var& embeddings,
                            const Context& ctx) const {
  Var z = cls_fc_(tape, embeddings);
  return ops::transpose(cls_out_bn_(tape, ops::transpose(z), ctx));
}

std::vector<Var> TextModel::ctc_logits(Tape& tape,
                                       const std::vector<Var>& encoded,
                                       const Context& ctx) const {
  std::vector<Index> lengths;
  Var h = channels_by_time(encoded, &lengths);
  for (std::size_t i = 0; i < ctc_conv_.size(); ++i) {
    h = ctc_bn_[i](tape, ops::relu(ctc_conv_[i](tape, h, lengths)), ctx);
  }
  Var logits = ctc_out_(tape, ops::transpose(h));
  std::vector<Var> out;
  if (lengths.size() == 1) return {logits};
  Index off = 0;
  for (Index len : lengths) {
    out.push_back(ops::slice(logits, 0, off, off + len));
    off += len;
  }
  return out;
}

Var TextModel::decoder_input(Tape& tape, int pattern,
                             std::span<const int> prefix) const {
  if (pattern < 0 || pattern >= static_cast<int>(patterns_.size())) {
    throw ContractError("pattern index " + std::to_string(pattern) +
                        " out of range");
  }
  check_tokens(prefix);
  Var tokens = tape.param(*token_table_);
  const int bos = vocab::kBos;
  std::vector<Var> rows{ops::gather_rows(tokens, std::span<const int>(&bos, 1)),
                        ops::gather_rows(tape.param(*hint_table_),
                                         std::span<const int>(&pattern, 1))};
  if (!prefix.empty()) rows.push_back(ops::gather_rows(tokens, prefix));
  Var y = ops::concat(rows, 0);
  return ops::add(y, tape.constant(sinusoidal_encoding(y.rows(), cfg_.d_model)));
}

Var TextModel::decode_logits(Tape& tape, const Var& encoded, int pattern,
                             std::span<const int> prefix) const {
  Var y = decoder_input(tape, pattern, prefix);
  Var mask = tape.constant(causal_mask(y.rows()));
  for (const DecoderBlock& b : decoder_) y = b(tape, y, encoded, mask);
  return decoder_out_(tape, decoder_ln_(tape, y));
}

Var TextModel::decoder_loss(Tape& tape, const Var& encoded, int pattern,
                            std::span<const int> tokens) const {
  Var logits = decode_logits(tape, encoded, pattern, tokens);
  std::vector<int> targets(tokens.begin(), tokens.end());
  targets.push_back(vocab::kEos);
  return ops::cross_entropy(ops::slice(logits, 0, 1, logits.rows()), targets);
}

TextLosses TextModel::losses(Tape& tape, const std::vector<TextExample>& batch,
                             const Context& ctx, const LossWeights& w) const {
  if (batch.empty()) throw ContractError("empty batch");
  std::vector<Var> encoded;
  std::vector<int> patterns;
  for (const TextExample& ex : batch) {
    check_tokens(ex.tokens);
    encoded.push_back(encode(tape, *ex.frames));
    patterns.push_back(ex.pattern);
  }
  TextLosses out;
  out.classification = ops::cross_entropy(
      class_logits(tape, embed_batch(tape, encoded, ctx), ctx), patterns);

  // Per-utterance CTC loss normalized by target length, then averaged.
  const auto logits = ctc_logits(tape, encoded, ctx);
  std::vector<Var> ctc, dec;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double len = std::max<double>(1.0, batch[i].tokens.size());
    ctc.push_back(ops::scale(ctc_loss(logits[i], batch[i].tokens, vocab::kBlank),
                             1.0 / len));
    dec.push_back(decoder_loss(tape, encoded[i], batch[i].pattern,
                               batch[i].tokens));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.ctc = ops::scale(ops::sum(ops::concat(ctc, 0)), inv);
  out.decoder = ops::scale(ops::sum(ops::concat(dec, 0)), inv);
  out.total = total_loss(out.classification, out.ctc, out.decoder, w);
  return out;
}

Vector TextModel::embed(const Matrix& frames) const {
  Tape tape;
  Var e = embed_batch(tape, {encode(tape, frames)}, Context{Mode::kEval, false});
  return e.value().row(0).transpose();
}

std::vector<Vector> TextModel::embed_all(
    const std::vector<FeatureMatrix>& feats) const {
  std::vector<Vector> out;
  out.reserve(feats.size());
  for (const FeatureMatrix& f : feats) out.push_back(embed(f.frames));
  return out;
}

int TextModel::classify(const Matrix& frames) const {
  Tape tape;
  const Context ctx{Mode::kEval, false};
  Var z = class_logits(
      tape, embed_batch(tape, {encode(tape, frames)}, ctx), ctx);
  Index best = 0;
  z.value().row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<int> TextModel::greedy_decode(const Matrix& frames) const {
  const int pattern = classify(frames);
  Matrix memory;
  {
    Tape tape;
    memory = encode(tape, frames).value();
  }
  const std::size_t cap = 2 * static_cast<std::size_t>(frames.rows());
  std::vector<int> out;
  while (out.size() < cap) {
    Tape tape;
    Var logits = decode_logits(tape, tape.constant(memory), pattern, out);
    Eigen::RowVectorXd last = logits.value().row(logits.rows() - 1);
    last(vocab::kBlank) = -INFINITY;
    last(vocab::kBos) = -INFINITY;
    Index best = 0;
    last.maxCoeff(&best);
    if (best == vocab::kEos) break;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

void TextModel::fit_input_normalization(const std::vector<FeatureMatrix>& feats) {
  const Standardizer st = fit_standardizer(feats, cfg_.n_coeffs);
  input_mean_->value = st.mean;
  input_scale_->value = st.inv_std;
}

int TextModel::pattern_index(const std::string& pattern_id) const {
  auto it = std::lower_bound(patterns_.begin(), patterns_.end(), pattern_id);
  if (it == patterns_.end() || *it != pattern_id) {
    throw ContractError("unknown pattern '" + pattern_id + "'");
  }
  return static_cast<int>(it - patterns_.begin());
}

nlohmann::json TextModel::to_json() const {
  return {{"format", "digitsv-text-v1"},
          {"config", digitsv::to_json(cfg_)},
          {"patterns", patterns_},
          {"vocab", vocab::symbols()},
          {"parameters", parameters_to_json(store_)}};
}

TextModel TextModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "digitsv-text-v1") {
    throw IoError("not a text model checkpoint");
  }
  if (j.at("vocab").get<std::vector<std::string>>() != vocab::symbols()) {
    throw IoError("text model checkpoint uses a different vocabulary");
  }
  TextModel m(text_config_from_json(j.at("config")),
              j.at("patterns").get<std::vector<std::string>>(), 0);
  parameters_from_json(m.store_, j.at("parameters"));
  return m;
}

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::map<std::string, const Utterance*> index_manifest(const Manifest& m) {
  std::map<std::string, const Utterance*> out;
  for (const Utterance& u : m.utterances) out[u.utterance_id] = &u;
  return out;
}

const Utterance& find_utterance(
    const std::map<std::string, const Utterance*>& by_id,
    const std::string& id) {
  auto it = by_id.find(id);
  if (it == by_id.end()) {
    throw ContractError("utterance '" + id + "' is not in the manifest");
  }
  return *it->second;
}

}  // namespace

TextEval evaluate_text(const TextModel& model, const Manifest& m,
                       const std::vector<FeatureMatrix>& feats) {
  if (feats.empty()) throw ContractError("no utterances to evaluate");
  const auto by_id = index_manifest(m);
  std::size_t correct = 0, edits = 0, ref_tokens = 0;
  for (const FeatureMatrix& f : feats) {
    const Utterance& u = find_utterance(by_id, f.utterance_id);
    if (model.classify(f.frames) == model.pattern_index(u.pattern_id)) {
      ++correct;
    }
    edits += edit_distance(model.greedy_decode(f.frames), u.tokens);
    ref_tokens += u.tokens.size();
  }
  TextEval e;
  e.accuracy = static_cast<double>(correct) / static_cast<double>(feats.size());
  e.token_error_rate =
      static_cast<double>(edits) / static_cast<double>(std::max<std::size_t>(1, ref_tokens));
  return e;
}

void TextTrainConfig::validate() const {
  if (epochs < 0) throw ContractError("text training: epochs must be >= 0");
  if (batch_size < 2) throw ContractError("text training: batch size must be >= 2");
  if (!(lr > 0.0)) throw ContractError("text training: lr must be positive");
  weights.validate();
}

nlohmann::json to_json(const TextTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"weights", to_json(c.weights)}};
}

TextTrainConfig text_train_config_from_json(const nlohmann::json& j) {
  TextTrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "weights") c.weights = loss_weights_from_json(value);
    else throw ContractError("text training: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void write_step_log(const std::filesystem::path& path,
                    const std::vector<StepLosses>& log) {
  std::vector<csv::Row> rows{{"epoch", "step", "lr", "l1", "l2", "l3", "total"}};
  for (const StepLosses& s : log) {
    rows.push_back({std::to_string(s.epoch), std::to_string(s.step),
                    csv::format_double(s.lr),
                    csv::format_double(s.classification),
                    csv::format_double(s.ctc), csv::format_double(s.decoder),
                    csv::format_double(s.total)});
  }
  csv::write(path, rows);
}

std::vector<StepLosses> read_step_log(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  const csv::Row header{"epoch", "step", "lr", "l1", "l2", "l3", "total"};
  if (rows.empty() || rows.front() != header) {
    throw IoError("step log '" + path.string() + "' has a bad header");
  }
  std::vector<StepLosses> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const csv::Row& r = rows[i];
    if (r.size() != header.size()) {
      throw IoError("step log row " + std::to_string(i) + " has " +
                    std::to_string(r.size()) + " fields");
    }
    out.push_back({static_cast<int>(csv::parse_int(r[0])),
                   static_cast<int>(csv::parse_int(r[1])),
                   csv::parse_double(r[2]), csv::parse_double(r[3]),
                   csv::parse_double(r[4]), csv::parse_double(r[5]),
                   csv::parse_double(r[6])});
  }
  return out;
}

namespace {

nlohmann::json steps_to_json(const std::vector<StepLosses>& steps) {
  nlohmann::json out = nlohmann::json::array();
  for (const StepLosses& s : steps) {
    out.push_back({s.epoch, s.step, s.lr, s.classification, s.ctc, s.decoder,
                   s.total});
  }
  return out;
}

std::vector<StepLosses> steps_from_json(const nlohmann::json& j) {
  std::vector<StepLosses> out;
  for (const auto& r : j) {
    out.push_back({r.at(0).get<int>(), r.at(1).get<int>(),
                   r.at(2).get<double>(), r.at(3).get<double>(),
                   r.at(4).get<double>(), r.at(5).get<double>(),
                   r.at(6).get<double>()});
  }
  return out;
}

}  // namespace

TextTrainer::TextTrainer(TextModel& model, const Manifest& m,
                         const std::vector<FeatureMatrix>& feats,
                         const TextTrainConfig& cfg)
    : model_(model), feats_(feats), cfg_(cfg) {
  cfg_.validate();
  if (feats_.size() < 2) {
    throw ContractError("text training: need at least two utterances");
  }
  const auto by_id = index_manifest(m);
  for (const FeatureMatrix& f : feats_) {
    const Utterance& u = find_utterance(by_id, f.utterance_id);
    check_tokens(u.tokens);
    tokens_.push_back(u.tokens);
    patterns_.push_back(model_.pattern_index(u.pattern_id));
  }
}

EpochRecord TextTrainer::run_epoch() {
  const double lr = decay_lr(cfg_.lr, epoch_);
  const auto batches = make_training_batches(
      epoch_order(feats_.size(), cfg_.seed, epoch_),
      static_cast<std::size_t>(cfg_.batch_size));
  const Context ctx{Mode::kTrain, true};
  double sum = 0.0;
  int step = 0;
  for (const auto& batch : batches) {
    std::vector<TextExample> examples;
    for (std::size_t i : batch) {
      examples.push_back({&feats_[i].frames, tokens_[i], patterns_[i]});
    }
    model_.params().zero_grad();
    Tape tape;
    TextLosses l = model_.losses(tape, examples, ctx, cfg_.weights);
    tape.backward(l.total);
    adam_.step(model_.params(), lr);
    steps_.push_back({epoch_, step++, lr, l.classification.item(), l.ctc.item(),
                      l.decoder.item(), l.total.item()});
    sum += l.total.item();
  }
  EpochRecord rec{epoch_, lr, sum / static_cast<double>(batches.size())};
  log_.push_back(rec);
  ++epoch_;
  return rec;
}

nlohmann::json TextTrainer::state() const {
  return {{"epoch", epoch_},
          {"adam", adam_.to_json()},
          {"log", to_json(log_)},
          {"steps", steps_to_json(steps_)},
          {"train", to_json(cfg_)}};
}

void TextTrainer::load_state(const nlohmann::json& j) {
  epoch_ = j.at("epoch").get<int>();
  adam_.load_json(j.at("adam"));
  log_ = training_log_from_json(j.at("log"));
  steps_ = steps_from_json(j.at("steps"));
}

}  // namespace digitsv
