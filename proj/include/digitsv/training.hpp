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

// Bits shared by the trainers: epoch ordering and the CSV log.

#ifndef DIGITSV_TRAINING_HPP_
#define DIGITSV_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

namespace digitsv {

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// A permutation of [0, n) that depends only on (seed, epoch), so a resumed
// run visits examples in the same order as an uninterrupted one.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     int epoch);

// Consecutive batches of `order`; the last one may be short.
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size);

// make_batches, with a trailing batch of one folded into the batch before it
// so that every batch can form batch statistics.
std::vector<std::vector<std::size_t>> make_training_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size);

// CSV with header epoch,lr,loss.
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochRecord>& log);
std::vector<EpochRecord> read_training_log(const std::filesystem::path& path);

nlohmann::json to_json(const std::vector<EpochRecord>& log);
std::vector<EpochRecord> training_log_from_json(const nlohmann::json& j);

}  // namespace digitsv

#endif  // DIGITSV_TRAINING_HPP_
