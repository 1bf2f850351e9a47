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

#ifndef DIGITSV_FEATURES_HPP_
#define DIGITSV_FEATURES_HPP_

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "digitsv/audio.hpp"
#include "digitsv/corpus.hpp"
#include "digitsv/tensor.hpp"
#include "json.hpp"

namespace digitsv {

struct MfccConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 40;
  int n_coeffs = 20;
  double pre_emphasis = 0.97;
  double low_hz = 20.0;
  double high_hz = 0.0;  // 0 means Nyquist
  double log_floor = 1e-10;

  void validate() const;
};

nlohmann::json to_json(const MfccConfig& c);
MfccConfig mfcc_config_from_json(const nlohmann::json& j);

struct FeatureMatrix {
  std::string utterance_id;
  Matrix frames;  // T x n_coeffs

  Index num_frames() const { return frames.rows(); }
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::exp(mel / 1127.0) - 1.0);
}

int frame_samples(const MfccConfig& cfg, int sample_rate);
int hop_samples(const MfccConfig& cfg, int sample_rate);
// Smallest power of two >= the frame length.
int fft_size(const MfccConfig& cfg, int sample_rate);
// 1 + floor((N - frame) / hop), or 0 if shorter than one frame.
Index num_frames(std::size_t num_samples, const MfccConfig& cfg,
                 int sample_rate);

// Triangular HTK-mel filters: n_mels x (fft_size/2 + 1).
Matrix mel_filterbank(const MfccConfig& cfg, int sample_rate);
// Centre frequency (Hz) of each filter.
std::vector<double> mel_centres(const MfccConfig& cfg, int sample_rate);

// Per-frame pre-emphasis -> Hamming window -> |FFT|^2 -> mel -> log.
// Returns T x n_mels.
Matrix log_mel_energies(const Waveform& w, const MfccConfig& cfg);
// log_mel_energies followed by an orthonormal DCT-II, first n_coeffs kept.
FeatureMatrix mfcc(const Waveform& w, const MfccConfig& cfg,
                   std::string utterance_id = {});

// Loads and featurizes every utterance of a manifest (optionally one split).
std::vector<FeatureMatrix> extract_features(const Manifest& m,
                                            const MfccConfig& cfg,
                                            const std::string& split = {});

// Per-coefficient mean and inverse standard deviation over all frames.
struct Standardizer {
  Vector mean;
  Vector inv_std;
};

Standardizer fit_standardizer(const std::vector<FeatureMatrix>& feats,
                              Index n_coeffs);

// Binary feature archive: "DSVF", count, then per entry id length, id bytes,
// rows, cols, row-major doubles. Little-endian host layout.
void write_feature_archive(const std::filesystem::path& path,
                           const std::vector<FeatureMatrix>& feats);
std::vector<FeatureMatrix> read_feature_archive(
    const std::filesystem::path& path);

}  // namespace digitsv

#endif  // DIGITSV_FEATURES_HPP_
