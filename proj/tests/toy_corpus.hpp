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

// Small synthetic corpus shared by training tests: 2 speakers x 2 short
// patterns x 5 utterances, generated once per process.

#ifndef DIGITSV_TESTS_TOY_CORPUS_HPP_
#define DIGITSV_TESTS_TOY_CORPUS_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "digitsv/corpus.hpp"
#include "digitsv/features.hpp"

namespace digitsv::testing {

struct ToyData {
  Manifest manifest;
  std::vector<FeatureMatrix> train;
  std::vector<FeatureMatrix> all;
};

inline const ToyData& toy_data() {
  static const ToyData data = [] {
    ToyData d;
    CorpusConfig cfg;
    cfg.speakers = 2;
    cfg.utterances_per_cell = 5;
    cfg.patterns = {{"p1", {1, 2, kPauseToken, 3}, 0.0},
                    {"p2", {4, kPauseToken, 5, 6}, 0.0}};
    cfg.seed = 3;
    const auto dir =
        std::filesystem::temp_directory_path() / "digitsv_test_toy_corpus";
    std::filesystem::remove_all(dir);
    d.manifest = gen_corpus(cfg, dir);
    d.train = extract_features(d.manifest, MfccConfig{}, "train");
    d.all = extract_features(d.manifest, MfccConfig{});
    return d;
  }();
  return data;
}

}  // namespace digitsv::testing

#endif  // DIGITSV_TESTS_TOY_CORPUS_HPP_
