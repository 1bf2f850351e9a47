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

// digitsv command-line tool. Exit status: 0 success, 1 runtime failure,
// 2 usage or configuration error. Failures also print one JSON object on
// stderr.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "digitsv/checkpoint.hpp"
#include "digitsv/error.hpp"
#include "digitsv/experiment.hpp"
#include "digitsv/metrics.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace digitsv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for bad arguments discovered after parsing.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void print_error(const std::string& command, const std::string& kind,
                 const std::string& message) {
  nlohmann::json j{{"error", kind}, {"command", command}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

struct Common {
  std::string config;
  std::string out;
};

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  ExperimentConfig cfg;
};

ExperimentConfig load_config(const std::string& path) {
  try {
    return load_experiment_config(path);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
}

void finish(const Invocation& ctx, const fs::path& dir,
            std::map<std::string, fs::path> inputs,
            std::map<std::string, fs::path> outputs) {
  RunManifest r;
  r.command = ctx.command;
  r.argv = ctx.argv;
  r.config = to_json(ctx.cfg);
  r.seed = ctx.cfg.seed;
  r.inputs = std::move(inputs);
  r.outputs = std::move(outputs);
  write_run_manifest(dir, r);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
}

std::vector<FeatureMatrix> split_features(const Manifest& m,
                                          const std::vector<FeatureMatrix>& feats,
                                          const std::string& split) {
  if (split == "all") return feats;
  return select_split(m, feats, split);
}

void check_split(const std::string& split) {
  if (split != "train" && split != "test" && split != "all") {
    throw UsageError("--split must be train, test or all");
  }
}

// ---- subcommands ----------------------------------------------------------

void run_gen_corpus(const Invocation& ctx, const Common& c) {
  const fs::path out(c.out);
  const Manifest m = gen_corpus(ctx.cfg.corpus, out);
  std::size_t train = m.split("train").size();
  std::cout << "wrote " << (out / "manifest.csv").string() << " ("
            << m.utterances.size() << " utterances, " << train << " train, "
            << m.utterances.size() - train << " test)" << std::endl;
  finish(ctx, out, {}, {{"manifest", out / "manifest.csv"}});
}

void run_extract_features(const Invocation& ctx, const Common& c,
                          const std::string& manifest) {
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto feats = extract_features(m, ctx.cfg.mfcc);
  write_feature_archive(out / "features.bin", feats);
  std::cout << "wrote " << (out / "features.bin").string() << " ("
            << feats.size() << " utterances)" << std::endl;
  finish(ctx, out, {{"manifest", manifest}}, {{"features", out / "features.bin"}});
}

void run_train_speaker(const Invocation& ctx, const Common& c,
                       const std::string& manifest, const std::string& features) {
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto train = select_split(m, read_feature_archive(features), "train");
  const SpeakerTrainConfig& tc = ctx.cfg.speaker_train;
  const LabeledSet labels = label_features(m, train, tc.label_mode);
  SpeakerModel model(ctx.cfg.speaker, ctx.cfg.aam, labels.classes, tc.seed);
  model.fit_input_normalization(train);
  SpeakerTrainer trainer(model, train, labels.labels, tc);
  for (int e = 0; e < tc.epochs; ++e) {
    const EpochRecord r = trainer.run_epoch();
    std::cerr << "speaker epoch " << r.epoch << " lr " << r.lr << " loss "
              << r.loss << std::endl;
  }
  write_json_file(out / "speaker.json", model.to_json());
  write_training_log(out / "speaker_log.csv", trainer.log());
  std::cout << "wrote " << (out / "speaker.json").string() << std::endl;
  finish(ctx, out, {{"manifest", manifest}, {"features", features}},
         {{"model", out / "speaker.json"}, {"log", out / "speaker_log.csv"}});
}

void run_train_text(const Invocation& ctx, const Common& c, const std::string& manifest,
                    const std::string& features) {
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto feats = read_feature_archive(features);
  const auto train = select_split(m, feats, "train");
  std::set<std::string> ids;
  for (const Utterance& u : m.utterances) ids.insert(u.pattern_id);
  TextModel model(ctx.cfg.text, {ids.begin(), ids.end()}, ctx.cfg.text_train.seed);
  model.fit_input_normalization(train);
  TextTrainer trainer(model, m, train, ctx.cfg.text_train);
  for (int e = 0; e < ctx.cfg.text_train.epochs; ++e) {
    const EpochRecord r = trainer.run_epoch();
    std::cerr << "text epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss
              << std::endl;
  }
  write_json_file(out / "text.json", model.to_json());
  write_training_log(out / "text_log.csv", trainer.log());
  write_step_log(out / "text_steps.csv", trainer.steps());
  const TextEval ev = evaluate_text(model, m, select_split(m, feats, "test"));
  const nlohmann::json report{{"accuracy", ev.accuracy},
                              {"token_error_rate", ev.token_error_rate}};
  write_json_file(out / "text_eval.json", report);
  std::cout << "accuracy=" << ev.accuracy << " token_error_rate="
            << ev.token_error_rate << std::endl;
  finish(ctx, out, {{"manifest", manifest}, {"features", features}},
         {{"model", out / "text.json"},
          {"log", out / "text_log.csv"},
          {"steps", out / "text_steps.csv"},
          {"eval", out / "text_eval.json"}});
}

void run_embed(const Invocation& ctx, const Common& c, const std::string& manifest,
               const std::string& features, const std::string& speaker_path,
               const std::string& text_path, const std::string& split) {
  check_split(split);
  if (speaker_path.empty() && text_path.empty()) {
    throw UsageError("embed needs --speaker-model and/or --text-model");
  }
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto feats = split_features(m, read_feature_archive(features), split);
  std::optional<SpeakerModel> spk;
  std::optional<TextModel> txt;
  std::map<std::string, fs::path> inputs{{"manifest", manifest}, {"features", features}};
  if (!speaker_path.empty()) {
    spk.emplace(SpeakerModel::from_json(read_json_file(speaker_path)));
    inputs["speaker_model"] = speaker_path;
  }
  if (!text_path.empty()) {
    txt.emplace(TextModel::from_json(read_json_file(text_path)));
    inputs["text_model"] = text_path;
  }
  const auto recs = embed_utterances(m, feats, spk ? &*spk : nullptr,
                                     txt ? &*txt : nullptr);
  write_embeddings(out / "embeddings.csv", recs);
  std::cout << "wrote " << (out / "embeddings.csv").string() << " ("
            << recs.size() << " utterances)" << std::endl;
  finish(ctx, out, inputs, {{"embeddings", out / "embeddings.csv"}});
}

void run_make_trials(const Invocation& ctx, const Common& c, const std::string& manifest,
                     const std::string& split) {
  if (split != "train" && split != "test") {
    throw UsageError("--split must be train or test");
  }
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto trials = make_trials(m, split, ctx.cfg.trials, ctx.cfg.seed);
  write_trials(out / "trials.csv", trials);
  std::cout << "wrote " << (out / "trials.csv").string() << " (" << trials.size()
            << " trials)" << std::endl;
  finish(ctx, out, {{"manifest", manifest}}, {{"trials", out / "trials.csv"}});
}

void run_score(const Invocation& ctx, const Common& c, const std::string& embeddings,
               const std::string& trials_path, const std::string& strategy_name,
               const std::string& cnn_path) {
  ScoreStrategy strategy = ctx.cfg.strategy;
  if (!strategy_name.empty()) {
    try {
      strategy = score_strategy_from_string(strategy_name);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  if (strategy == ScoreStrategy::kCnn && cnn_path.empty()) {
    throw UsageError("strategy cnn needs --cnn-model");
  }
  const fs::path out(c.out);
  make_dir(out);
  const EmbeddingTable table = index_records(read_embeddings(embeddings));
  const auto trials = read_trials(trials_path);
  std::map<std::string, fs::path> inputs{{"embeddings", embeddings},
                                         {"trials", trials_path}};
  std::optional<CnnFusionModel> cnn;
  if (strategy == ScoreStrategy::kCnn) {
    cnn.emplace(CnnFusionModel::from_json(read_json_file(cnn_path)));
    inputs["cnn_model"] = cnn_path;
  }
  const auto scores = score_trials(table, trials, strategy, cnn ? &*cnn : nullptr);
  write_scores(out / "scores.csv", trials, scores);
  std::cout << "wrote " << (out / "scores.csv").string() << " (" << scores.size()
            << " trials, strategy " << to_string(strategy) << ")" << std::endl;
  finish(ctx, out, inputs, {{"scores", out / "scores.csv"}});
}

void run_eval(const Invocation& ctx, const Common& c, const std::string& scores_path,
              bool json) {
  const fs::path out = c.out.empty() ? fs::absolute(scores_path).parent_path()
                                     : fs::path(c.out);
  make_dir(out);
  const EvalReport r = evaluate(read_scores(scores_path));
  const nlohmann::json report = to_json(r);
  write_json_file(out / "report.json", report);
  write_det(out / "det.csv", r.det);
  if (json) {
    std::cout << report.dump() << std::endl;
  } else {
    char line[160];
    std::snprintf(line, sizeof(line), "eer=%.4f min_dcf=%.4f threshold=%.6f",
                  r.eer.value, r.min_dcf.value, r.eer.threshold);
    std::cout << line << std::endl;
  }
  finish(ctx, out, {{"scores", scores_path}},
         {{"report", out / "report.json"}, {"det", out / "det.csv"}});
}

void run_sweep(const Invocation& ctx, const Common& c, const std::string& manifest,
               const std::string& features) {
  const fs::path out(c.out);
  make_dir(out);
  const Manifest m = read_manifest(manifest);
  const auto rows = sweep_pooling(m, read_feature_archive(features), ctx.cfg);
  write_sweep(out / "sweep.csv", rows);
  for (const SweepRow& r : rows) {
    std::cout << "window=" << r.window << " stride=" << r.stride
              << " eer=" << r.eer << " min_dcf=" << r.min_dcf << std::endl;
  }
  finish(ctx, out, {{"manifest", manifest}, {"features", features}},
         {{"sweep", out / "sweep.csv"}});
}

void run_fuse_train(const Invocation& ctx, const Common& c, const std::string& embeddings,
                    const std::string& trials_path) {
  const fs::path out(c.out);
  make_dir(out);
  const EmbeddingTable table = index_records(read_embeddings(embeddings));
  const auto trials = read_trials(trials_path);
  if (table.empty()) throw ContractError("no embeddings");
  const Index dim = table.begin()->second.speaker.size();
  CnnFusionModel model(dim, ctx.cfg.cnn);
  const auto log = train_cnn_fusion(model, table, trials);
  for (const EpochRecord& r : log) {
    std::cerr << "fusion epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss
              << std::endl;
  }
  write_json_file(out / "cnn_fusion.json", model.to_json());
  write_training_log(out / "cnn_fusion_log.csv", log);
  std::cout << "wrote " << (out / "cnn_fusion.json").string() << std::endl;
  finish(ctx, out, {{"embeddings", embeddings}, {"trials", trials_path}},
         {{"model", out / "cnn_fusion.json"}, {"log", out / "cnn_fusion_log.csv"}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"digitsv: text-dependent speaker verification on synthetic digit strings"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  std::string manifest, features, speaker_model, text_model, split = "test";
  std::string embeddings, trials, strategy, cnn_model, scores;
  int epochs = -1;
  std::string pooling;
  bool json = false;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", common.config, "Experiment config or run.json")
        ->check(CLI::ExistingFile);
  };
  auto add_out = [&](CLI::App* s) {
    s->add_option("--out", common.out,
                  "Output directory (default: <output_dir>/<command>)");
  };

  std::map<std::string, std::function<void(const Invocation&)>> handlers;

  auto* gen = app.add_subcommand("gen-corpus", "Synthesize the corpus and manifest");
  add_config(gen);
  add_out(gen);
  handlers["gen-corpus"] = [&](const Invocation& ctx) { run_gen_corpus(ctx, common); };

  auto* fx = app.add_subcommand("extract-features", "MFCC features for every utterance");
  add_config(fx);
  add_out(fx);
  fx->add_option("--manifest", manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  handlers["extract-features"] = [&](const Invocation& ctx) {
    run_extract_features(ctx, common, manifest);
  };

  auto* ts = app.add_subcommand("train-speaker", "Train the speaker network");
  add_config(ts);
  add_out(ts);
  ts->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ts->add_option("--features", features)->required()->check(CLI::ExistingFile);
  ts->add_option("--epochs", epochs, "Override the configured epoch count")
      ->check(CLI::PositiveNumber);
  ts->add_option("--pooling", pooling, "Override the pooling kind");
  handlers["train-speaker"] = [&](const Invocation& ctx) {
    run_train_speaker(ctx, common, manifest, features);
  };

  auto* tt = app.add_subcommand("train-text", "Train the text network");
  add_config(tt);
  add_out(tt);
  tt->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  tt->add_option("--features", features)->required()->check(CLI::ExistingFile);
  tt->add_option("--epochs", epochs, "Override the configured epoch count")
      ->check(CLI::PositiveNumber);
  handlers["train-text"] = [&](const Invocation& ctx) {
    run_train_text(ctx, common, manifest, features);
  };

  auto* em = app.add_subcommand("embed", "Extract speaker and/or text embeddings");
  add_config(em);
  add_out(em);
  em->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  em->add_option("--features", features)->required()->check(CLI::ExistingFile);
  em->add_option("--speaker-model", speaker_model)->check(CLI::ExistingFile);
  em->add_option("--text-model", text_model)->check(CLI::ExistingFile);
  em->add_option("--split", split, "train, test or all");
  handlers["embed"] = [&](const Invocation& ctx) {
    run_embed(ctx, common, manifest, features, speaker_model, text_model, split);
  };

  auto* mt = app.add_subcommand("make-trials", "Sample joint-protocol trials");
  add_config(mt);
  add_out(mt);
  mt->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  mt->add_option("--split", split, "train or test");
  handlers["make-trials"] = [&](const Invocation& ctx) {
    run_make_trials(ctx, common, manifest, split);
  };

  auto* sc = app.add_subcommand("score", "Score trials");
  add_config(sc);
  add_out(sc);
  sc->add_option("--embeddings", embeddings)->required()->check(CLI::ExistingFile);
  sc->add_option("--trials", trials)->required()->check(CLI::ExistingFile);
  sc->add_option("--strategy", strategy, "speaker, add, mul or cnn");
  sc->add_option("--cnn-model", cnn_model)->check(CLI::ExistingFile);
  handlers["score"] = [&](const Invocation& ctx) {
    run_score(ctx, common, embeddings, trials, strategy, cnn_model);
  };

  auto* ev = app.add_subcommand("eval", "EER, minDCF and DET points of a score file");
  add_config(ev);
  add_out(ev);
  ev->add_option("--scores", scores)->required()->check(CLI::ExistingFile);
  ev->add_flag("--json", json, "Print the report as JSON");
  handlers["eval"] = [&](const Invocation& ctx) { run_eval(ctx, common, scores, json); };

  auto* sw = app.add_subcommand("sweep-pooling", "Train and score each (window, stride) cell");
  add_config(sw);
  add_out(sw);
  sw->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  sw->add_option("--features", features)->required()->check(CLI::ExistingFile);
  sw->add_option("--epochs", epochs, "Override the configured epoch count")
      ->check(CLI::PositiveNumber);
  handlers["sweep-pooling"] = [&](const Invocation& ctx) {
    run_sweep(ctx, common, manifest, features);
  };

  auto* ft = app.add_subcommand("fuse-train", "Train the CNN fusion scorer");
  add_config(ft);
  add_out(ft);
  ft->add_option("--embeddings", embeddings)->required()->check(CLI::ExistingFile);
  ft->add_option("--trials", trials)->required()->check(CLI::ExistingFile);
  handlers["fuse-train"] = [&](const Invocation& ctx) {
    run_fuse_train(ctx, common, embeddings, trials);
  };

  std::string command = "digitsv";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "usage", e.what());
    return kExitUsage;
  }

  Invocation ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
  command = ctx.command;
  try {
    ctx.cfg = load_config(common.config);
    if (common.out.empty() && command != "eval") {
      common.out = (fs::path(ctx.cfg.output_dir) / command).string();
    }
    if (epochs > 0) {
      ctx.cfg.speaker_train.epochs = epochs;
      ctx.cfg.text_train.epochs = epochs;
    }
    if (!pooling.empty()) {
      try {
        ctx.cfg.speaker.pooling.kind = pooling_kind_from_string(pooling);
      } catch (const ContractError& e) {
        throw UsageError(e.what());
      }
    }
    handlers.at(command)(ctx);
  } catch (const UsageError& e) {
    print_error(command, "usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error(command, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
