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

#ifndef DIGITSV_AUDIO_HPP_
#define DIGITSV_AUDIO_HPP_

#include <filesystem>
#include <vector>

namespace digitsv {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// PCM 16-bit mono little-endian. Samples are clamped to [-1, 1] and scaled
// by 32767 on write; read divides by 32767.
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

// Tempo/pitch change by linear-interpolation resampling: output sample i
// reads the input at position i * factor, giving round(N / factor) samples.
// The sample-rate label is unchanged, so 0.9 lengthens and 1.1 shortens.
Waveform speed_perturb(const Waveform& w, double factor);

}  // namespace digitsv

#endif  // DIGITSV_AUDIO_HPP_
