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

#include "digitsv/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "digitsv/error.hpp"

namespace digitsv {

void MfccConfig::validate() const {
  if (frame_ms <= 0 || hop_ms <= 0) {
    throw ContractError("mfcc: frame and hop must be positive");
  }
  if (hop_ms > frame_ms) throw ContractError("mfcc: hop exceeds frame length");
  if (n_mels < 1 || n_coeffs < 1) {
    throw ContractError("mfcc: need at least one filter and coefficient");
  }
  if (n_coeffs > n_mels) throw ContractError("mfcc: n_coeffs > n_mels");
  if (log_floor <= 0) throw ContractError("mfcc: log floor must be positive");
}

nlohmann::json to_json(const MfccConfig& c) {
  return {{"frame_ms", c.frame_ms},     {"hop_ms", c.hop_ms},
          {"n_mels", c.n_mels},         {"n_coeffs", c.n_coeffs},
          {"pre_emphasis", c.pre_emphasis}, {"low_hz", c.low_hz},
          {"high_hz", c.high_hz},       {"log_floor", c.log_floor}};
}

MfccConfig mfcc_config_from_json(const nlohmann::json& j) {
  MfccConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "frame_ms") c.frame_ms = value.get<double>();
    else if (key == "hop_ms") c.hop_ms = value.get<double>();
    else if (key == "n_mels") c.n_mels = value.get<int>();
    else if (key == "n_coeffs") c.n_coeffs = value.get<int>();
    else if (key == "pre_emphasis") c.pre_emphasis = value.get<double>();
    else if (key == "low_hz") c.low_hz = value.get<double>();
    else if (key == "high_hz") c.high_hz = value.get<double>();
    else if (key == "log_floor") c.log_floor = value.get<double>();
    else throw ContractError("mfcc: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

int frame_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.frame_ms * 1e-3 * sample_rate));
}

int hop_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.hop_ms * 1e-3 * sample_rate));
}

int fft_size(const MfccConfig& cfg, int sample_rate) {
  const int frame = frame_samples(cfg, sample_rate);
  int n = 1;
  while (n < frame) n <<= 1;
  return n;
}

Index num_frames(std::size_t num_samples, const MfccConfig& cfg,
                 int sample_rate) {
  const auto frame = static_cast<std::size_t>(frame_samples(cfg, sample_rate));
  const auto hop = static_cast<std::size_t>(hop_samples(cfg, sample_rate));
  if (num_samples < frame) return 0;
  return static_cast<Index>(1 + (num_samples - frame) / hop);
}

namespace {

double upper_hz(const MfccConfig& cfg, int sample_rate) {
  return cfg.high_hz > 0.0 ? cfg.high_hz : 0.5 * sample_rate;
}

}  // namespace

std::vector<double> mel_centres(const MfccConfig& cfg, int sample_rate) {
  const double lo = hz_to_mel(cfg.low_hz);
  const double hi = hz_to_mel(upper_hz(cfg, sample_rate));
  const double step = (hi - lo) / (cfg.n_mels + 1);
  std::vector<double> out;
  for (int m = 0; m < cfg.n_mels; ++m) out.push_back(mel_to_hz(lo + (m + 1) * step));
  return out;
}

Matrix mel_filterbank(const MfccConfig& cfg, int sample_rate) {
  const int nfft = fft_size(cfg, sample_rate);
  const int bins = nfft / 2 + 1;
  const double lo = hz_to_mel(cfg.low_hz);
  const double hi = hz_to_mel(upper_hz(cfg, sample_rate));
  const double step = (hi - lo) / (cfg.n_mels + 1);
  Matrix fb = Matrix::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = lo + m * step;
    const double centre = left + step;
    const double right = centre + step;
    for (int k = 0; k < bins; ++k) {
      const double mel =
          hz_to_mel(static_cast<double>(k) * sample_rate / nfft);
      if (mel > left && mel < right) {
        fb(m, k) = mel <= centre ? (mel - left) / (centre - left)
                                 : (right - mel) / (right - centre);
      }
    }
  }
  return fb;
}

Matrix log_mel_energies(const Waveform& w, const MfccConfig& cfg) {
  cfg.validate();
  const int sr = w.sample_rate;
  if (sr <= 0) throw ContractError("mfcc: sample rate must be positive");
  const Index frames = num_frames(w.samples.size(), cfg, sr);
  if (frames < 1) {
    throw ContractError("mfcc: waveform shorter than one frame");
  }
  const int frame = frame_samples(cfg, sr);
  const int hop = hop_samples(cfg, sr);
  const int nfft = fft_size(cfg, sr);
  const int bins = nfft / 2 + 1;
  const Matrix fb = mel_filterbank(cfg, sr);

  std::vector<double> window(static_cast<std::size_t>(frame));
  for (int n = 0; n < frame; ++n) {
    window[static_cast<std::size_t>(n)] =
        frame > 1 ? 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n /
                                           (frame - 1))
                  : 1.0;
  }

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spec;
  Vector power(bins);
  Matrix out(frames, cfg.n_mels);
  for (Index t = 0; t < frames; ++t) {
    const double* x = w.samples.data() + t * hop;
    std::fill(buf.begin(), buf.end(), 0.0);
    // Pre-emphasis inside the frame; the first sample uses itself as history.
    for (int n = frame - 1; n >= 0; --n) {
      const double prev = n > 0 ? x[n - 1] : x[0];
      buf[static_cast<std::size_t>(n)] =
          (x[n] - cfg.pre_emphasis * prev) * window[static_cast<std::size_t>(n)];
    }
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k) power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    const Vector mel = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m) {
      out(t, m) = std::log(std::max(mel(m), cfg.log_floor));
    }
  }
  return out;
}

FeatureMatrix mfcc(const Waveform& w, const MfccConfig& cfg,
                   std::string utterance_id) {
  const Matrix logmel = log_mel_energies(w, cfg);
  const int m = cfg.n_mels;
  Matrix dct(m, cfg.n_coeffs);
  for (int k = 0; k < cfg.n_coeffs; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
    for (int i = 0; i < m; ++i) {
      dct(i, k) = scale * std::cos(std::numbers::pi * k * (i + 0.5) / m);
    }
  }
  FeatureMatrix f;
  f.utterance_id = std::move(utterance_id);
  f.frames = logmel * dct;
  if (!f.frames.allFinite()) throw NumericError("mfcc produced non-finite values");
  return f;
}

std::vector<FeatureMatrix> extract_features(const Manifest& m,
                                            const MfccConfig& cfg,
                                            const std::string& split) {
  std::vector<FeatureMatrix> out;
  for (const Utterance& u : m.utterances) {
    if (!split.empty() && u.split != split) continue;
    out.push_back(mfcc(read_wav(m.resolve(u)), cfg, u.utterance_id));
  }
  return out;
}

void write_feature_archive(const std::filesystem::path& path,
                           const std::vector<FeatureMatrix>& feats) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto put = [&out](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  out.write("DSVF", 4);
  put(static_cast<std::uint64_t>(feats.size()));
  for (const FeatureMatrix& f : feats) {
    put(static_cast<std::uint64_t>(f.utterance_id.size()));
    out.write(f.utterance_id.data(),
              static_cast<std::streamsize>(f.utterance_id.size()));
    put(static_cast<std::uint64_t>(f.frames.rows()));
    put(static_cast<std::uint64_t>(f.frames.cols()));
    for (Index i = 0; i < f.frames.rows(); ++i) {
      for (Index j = 0; j < f.frames.cols(); ++j) put(f.frames(i, j));
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<FeatureMatrix> read_feature_archive(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto get = [&in, &path](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError(path.string() + ": truncated feature archive");
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "DSVF") {
    throw IoError(path.string() + ": not a feature archive");
  }
  std::uint64_t count = 0;
  get(count);
  std::vector<FeatureMatrix> out(count);
  for (auto& f : out) {
    std::uint64_t len = 0, rows = 0, cols = 0;
    get(len);
    f.utterance_id.resize(len);
    in.read(f.utterance_id.data(), static_cast<std::streamsize>(len));
    get(rows);
    get(cols);
    f.frames.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < f.frames.rows(); ++i) {
      for (Index j = 0; j < f.frames.cols(); ++j) get(f.frames(i, j));
    }
  }
  return out;
}

Standardizer fit_standardizer(const std::vector<FeatureMatrix>& feats,
                              Index n_coeffs) {
  Vector sum = Vector::Zero(n_coeffs), sq = Vector::Zero(n_coeffs);
  double count = 0.0;
  for (const FeatureMatrix& f : feats) {
    if (f.frames.cols() != n_coeffs) {
      throw DimensionError("feature width does not match the model");
    }
    sum += f.frames.colwise().sum().transpose();
    sq += f.frames.array().square().colwise().sum().matrix().transpose();
    count += static_cast<double>(f.frames.rows());
  }
  if (count < 2) throw ContractError("not enough frames to normalize inputs");
  const Vector mean = sum / count;
  const Vector var = (sq / count - mean.cwiseProduct(mean)).cwiseMax(1e-12);
  return {mean, var.cwiseSqrt().cwiseInverse()};
}

}  // namespace digitsv
