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

#include "digitsv/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "digitsv/error.hpp"

namespace digitsv {
namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw ContractError("sample rate must be positive");
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw NumericError("non-finite sample");
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(path.string() + ": not a RIFF/WAVE file");
  }
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw IoError(path.string() + ": truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw IoError(path.string() + ": short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      if (get_u16(f) != 1 || get_u16(f + 2) != 1 || get_u16(f + 14) != 16) {
        throw IoError(path.string() + ": only PCM 16-bit mono is supported");
      }
      w.sample_rate = static_cast<int>(get_u32(f + 4));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path.string() + ": data before fmt");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw =
            static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
        w.samples[i] = raw / 32767.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw IoError(path.string() + ": no data chunk");
}

Waveform speed_perturb(const Waveform& w, double factor) {
  if (!(factor > 0.0)) throw ContractError("speed factor must be positive");
  Waveform out;
  out.sample_rate = w.sample_rate;
  const std::size_t n = w.samples.size();
  if (n == 0) return out;
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) / factor));
  out.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo + 1 >= n) {
      out.samples[i] = w.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = (1.0 - frac) * w.samples[lo] + frac * w.samples[lo + 1];
  }
  return out;
}

}  // namespace digitsv
