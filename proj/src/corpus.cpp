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

#include "digitsv/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "digitsv/csv.hpp"
#include "digitsv/error.hpp"

namespace digitsv {
namespace {

using Rng64 = std::mt19937_64;

// First two formants (Hz) per digit.
constexpr std::array<std::array<double, 2>, 10> kDigitFormants{{
    {300, 870},
    {270, 2290},
    {390, 1990},
    {530, 1840},
    {660, 1720},
    {730, 1090},
    {570, 840},
    {440, 1020},
    {300, 1500},
    {640, 1190},
}};
constexpr double kThirdFormant = 2500.0;
constexpr double kFormantBandwidth = 120.0;
constexpr double kMaxHarmonicHz = 4000.0;
constexpr double kFadeSeconds = 0.01;

double speaker_tilt(int speaker) { return 0.6 + 0.08 * (speaker % 5); }

double speaker_formant_scale(int speaker) {
  return 1.0 + 0.03 * static_cast<double>((speaker * 7) % 5 - 2);
}

std::vector<int> with_pauses(const std::vector<int>& digits,
                             const std::vector<int>& after) {
  std::vector<int> out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    out.push_back(digits[i]);
    if (std::find(after.begin(), after.end(), static_cast<int>(i + 1)) !=
        after.end()) {
      out.push_back(kPauseToken);
    }
  }
  return out;
}

void render_digit(int digit, int speaker, double f0, double amplitude,
                  std::size_t n, int sample_rate, Rng64& rng,
                  std::vector<double>& out);

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined state.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string token_to_string(int token) {
  if (token >= 0 && token <= 9) return std::to_string(token);
  if (token == kPauseToken) return "PAUSE";
  throw ContractError("unknown corpus token " + std::to_string(token));
}

int token_from_string(const std::string& s) {
  if (s == "PAUSE") return kPauseToken;
  if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') return s[0] - '0';
  throw ContractError("unknown token '" + s + "'");
}

std::string tokens_to_string(const std::vector<int>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += token_to_string(tokens[i]);
  }
  return s;
}

std::vector<int> tokens_from_string(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(token_from_string(tok));
  return out;
}

std::vector<TextPattern> default_patterns() {
  const std::vector<int> a{8, 1, 7, 3, 2, 5, 9, 6, 0, 4};
  const std::vector<int> b{9, 4, 0, 5, 3, 7, 2, 6, 8, 1};
  return {
      {"d001", with_pauses(a, {}), 6.0},
      {"d002", with_pauses(a, {4, 8}), 4.0},
      {"d003", with_pauses(a, {3, 6, 9}), 4.0},
      {"d004", with_pauses(a, {2, 4, 6, 8}), 4.0},
      {"d005", with_pauses(b, {4, 8}), 4.0},
      {"d006", with_pauses(b, {3, 6, 9}), 3.0},
  };
}

double speaker_f0(int speaker) {
  return 95.0 * std::pow(1.06, static_cast<double>(speaker));
}

namespace {

void render_digit(int digit, int speaker, double f0, double amplitude,
                  std::size_t n, int sample_rate, Rng64& rng,
                  std::vector<double>& out) {
  const double scale = speaker_formant_scale(speaker);
  const double f1 = kDigitFormants[static_cast<std::size_t>(digit)][0] * scale;
  const double f2 = kDigitFormants[static_cast<std::size_t>(digit)][1] * scale;
  const double f3 = kThirdFormant * scale;
  const double tilt = speaker_tilt(speaker);
  const double nyquist = 0.5 * sample_rate;
  std::uniform_real_distribution<double> phase_dist(0.0,
                                                    2.0 * std::numbers::pi);

  std::vector<double> amps;
  std::vector<std::complex<double>> phasors;
  std::vector<std::complex<double>> steps;
  for (int h = 1;; ++h) {
    const double f = h * f0;
    if (f > kMaxHarmonicHz || f > 0.9 * nyquist) break;
    auto bump = [f](double centre, double weight) {
      const double z = (f - centre) / kFormantBandwidth;
      return weight * std::exp(-0.5 * z * z);
    };
    const double envelope =
        bump(f1, 1.0) + bump(f2, 0.7) + bump(f3, 0.25) + 0.03;
    amps.push_back(envelope * std::pow(static_cast<double>(h), -tilt));
    phasors.push_back(std::polar(1.0, phase_dist(rng)));
    steps.push_back(std::polar(1.0, 2.0 * std::numbers::pi * f / sample_rate));
  }
  double total = 0.0;
  for (double a : amps) total += a;
  const double norm = total > 0.0 ? amplitude / total : 0.0;

  const auto fade = static_cast<std::size_t>(kFadeSeconds * sample_rate);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t h = 0; h < amps.size(); ++h) {
      s += amps[h] * phasors[h].imag();
      phasors[h] *= steps[h];
    }
    double gain = 1.0;
    const std::size_t edge = std::min(i, n - 1 - i);
    if (edge < fade) {
      gain = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) /
                                  static_cast<double>(fade));
    }
    out.push_back(s * norm * gain);
  }
}

}  // namespace

Waveform synth_utterance(int speaker, const TextPattern& pattern,
                         std::uint64_t seed, const SynthConfig& cfg) {
  if (speaker < 0 || speaker >= cfg.max_speakers) {
    throw ContractError("speaker index " + std::to_string(speaker) +
                        " out of range");
  }
  if (pattern.tokens.empty()) throw ContractError("empty token pattern");
  for (int t : pattern.tokens) {
    if (t < 0 || t >= kNumCorpusTokens) {
      throw ContractError("vocabulary error: token " + std::to_string(t));
    }
  }
  Rng64 rng(seed);
  std::uniform_real_distribution<double> jit(-cfg.jitter, cfg.jitter);
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  // Small per-utterance pitch wobble keeps speakers from being pure tones.
  const double f0 = speaker_f0(speaker) * (1.0 + 0.15 * jit(rng));
  for (int t : pattern.tokens) {
    const double base = t == kPauseToken ? cfg.pause_seconds : cfg.digit_seconds;
    const auto n = static_cast<std::size_t>(
        std::lround(base * (1.0 + jit(rng)) * cfg.sample_rate));
    if (t == kPauseToken) {
      w.samples.insert(w.samples.end(), n, 0.0);
    } else {
      const double amp = cfg.amplitude * (1.0 + jit(rng));
      render_digit(t, speaker, f0, amp, n, cfg.sample_rate, rng, w.samples);
    }
  }
  return w;
}

std::vector<const Utterance*> Manifest::split(const std::string& name) const {
  std::vector<const Utterance*> out;
  for (const Utterance& u : utterances) {
    if (u.split == name) out.push_back(&u);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::vector<csv::Row> rows;
  rows.push_back({"utterance_id", "speaker_id", "pattern_id", "split", "path",
                  "tokens"});
  for (const Utterance& u : m.utterances) {
    rows.push_back({u.utterance_id, u.speaker_id, u.pattern_id, u.split,
                    u.path, tokens_to_string(u.tokens)});
  }
  csv::write(path, rows);
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  const csv::Row header{"utterance_id", "speaker_id", "pattern_id",
                        "split",        "path",       "tokens"};
  if (rows.empty() || rows.front() != header) {
    throw IoError(path.string() + ": unexpected manifest header");
  }
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) {
      throw IoError(path.string() + ": bad field count on line " +
                    std::to_string(i + 1));
    }
    Utterance u{r[0], r[1], r[2], r[3], r[4], tokens_from_string(r[5])};
    if (!ids.insert(u.utterance_id).second) {
      throw IoError("duplicate utterance id " + u.utterance_id);
    }
    if (u.split != "train" && u.split != "test") {
      throw IoError("unknown split '" + u.split + "'");
    }
    m.utterances.push_back(std::move(u));
  }
  return m;
}

int test_count(int n, double test_fraction) {
  return static_cast<int>(std::floor(n * test_fraction + 1e-9));
}

Manifest gen_corpus(const CorpusConfig& cfg,
                    const std::filesystem::path& out_dir) {
  if (cfg.speakers < 2) throw ContractError("need at least 2 speakers");
  if (cfg.patterns.size() < 2) throw ContractError("need at least 2 patterns");
  if (cfg.utterances_per_cell < 1) {
    throw ContractError("need at least 1 utterance per cell");
  }
  if (cfg.speakers > cfg.synth.max_speakers) {
    throw ContractError("too many speakers for the synthesizer");
  }
  std::set<std::string> pattern_ids;
  for (const auto& p : cfg.patterns) {
    if (!pattern_ids.insert(p.id).second) {
      throw ContractError("duplicate pattern id " + p.id);
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "wav").string());

  Manifest m;
  m.root = out_dir;
  const int n = cfg.utterances_per_cell;
  const int n_test = test_count(n, cfg.test_fraction);
  for (int s = 0; s < cfg.speakers; ++s) {
    char spk[16];
    std::snprintf(spk, sizeof(spk), "spk%02d", s);
    for (std::size_t p = 0; p < cfg.patterns.size(); ++p) {
      const TextPattern& pat = cfg.patterns[p];
      const std::uint64_t cell_seed =
          mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(s)), p);
      std::vector<int> order(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
      Rng64 split_rng(cell_seed);
      std::shuffle(order.begin(), order.end(), split_rng);
      std::set<int> held_out(order.begin(), order.begin() + n_test);
      for (int k = 0; k < n; ++k) {
        char uid[64];
        std::snprintf(uid, sizeof(uid), "%s_%s_%03d", spk, pat.id.c_str(), k);
        const std::string split = held_out.count(k) ? "test" : "train";
        const Waveform w = synth_utterance(
            s, pat, mix_seed(cell_seed, static_cast<std::uint64_t>(k) + 1000),
            cfg.synth);
        const std::string rel = std::string("wav/") + uid + ".wav";
        write_wav(out_dir / rel, w);
        m.utterances.push_back({uid, spk, pat.id, split, rel, pat.tokens});
        if (split != "train") continue;
        for (double f : cfg.speed_factors) {
          char sid[96];
          std::snprintf(sid, sizeof(sid), "%s_sp%.2f", uid, f);
          const std::string srel = std::string("wav/") + sid + ".wav";
          write_wav(out_dir / srel, speed_perturb(w, f));
          m.utterances.push_back({sid, spk, pat.id, "train", srel, pat.tokens});
        }
      }
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace digitsv
