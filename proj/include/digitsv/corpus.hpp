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

// Synthetic digit-string corpus.
//
// Each digit renders as a harmonic tone: the fundamental (and a mild spectral
// tilt and formant scale) identify the speaker, the formant-shaped harmonic
// amplitude profile identifies the digit. PAUSE renders silence. Patterns
// share the same digit string with different pause placements, so "same
// digits, different rhythm" trials exist.

#ifndef DIGITSV_CORPUS_HPP_
#define DIGITSV_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "digitsv/audio.hpp"

namespace digitsv {

// Corpus symbols: digits are 0..9.
inline constexpr int kPauseToken = 10;
inline constexpr int kNumCorpusTokens = 11;

std::string token_to_string(int token);
int token_from_string(const std::string& s);
// Space-separated form, e.g. "8 1 7 PAUSE 3".
std::string tokens_to_string(const std::vector<int>& tokens);
std::vector<int> tokens_from_string(const std::string& s);

struct TextPattern {
  std::string id;
  std::vector<int> tokens;
  double nominal_duration = 0.0;  // seconds
};

// The six pause-rhythm variants d001..d006 over two digit strings.
std::vector<TextPattern> default_patterns();

struct SynthConfig {
  int sample_rate = 16000;
  double digit_seconds = 0.3;
  double pause_seconds = 0.2;
  // Relative uniform jitter on per-token duration and amplitude.
  double jitter = 0.1;
  double amplitude = 0.5;
  int max_speakers = 64;
};

// Fundamental frequency of speaker `speaker` (before per-utterance jitter).
double speaker_f0(int speaker);

// Deterministic in (speaker, pattern, seed).
Waveform synth_utterance(int speaker, const TextPattern& pattern,
                         std::uint64_t seed, const SynthConfig& cfg = {});

struct Utterance {
  std::string utterance_id;
  std::string speaker_id;
  std::string pattern_id;
  std::string split;  // "train" or "test"
  std::string path;   // relative to the manifest directory
  std::vector<int> tokens;

  bool operator==(const Utterance&) const = default;
};

struct Manifest {
  std::vector<Utterance> utterances;
  // Directory that relative paths resolve against.
  std::filesystem::path root;

  std::vector<const Utterance*> split(const std::string& name) const;
  std::filesystem::path resolve(const Utterance& u) const { return root / u.path; }
};

// CSV with header utterance_id,speaker_id,pattern_id,split,path,tokens.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct CorpusConfig {
  int speakers = 12;
  int utterances_per_cell = 20;
  std::vector<TextPattern> patterns = default_patterns();
  // Held-out share of every (speaker, pattern) cell.
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
  SynthConfig synth;
  // Extra speed-perturbed copies of every training utterance.
  std::vector<double> speed_factors;
};

// Number of held-out utterances in a cell of n.
int test_count(int n, double test_fraction);

// Writes <out_dir>/manifest.csv and <out_dir>/wav/*.wav.
Manifest gen_corpus(const CorpusConfig& cfg,
                    const std::filesystem::path& out_dir);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace digitsv

#endif  // DIGITSV_CORPUS_HPP_
