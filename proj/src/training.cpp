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

#include "digitsv/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "digitsv/corpus.hpp"
#include "digitsv/csv.hpp"
#include "digitsv/error.hpp"

namespace digitsv {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_training_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size) {
  auto batches = make_batches(order, batch_size);
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochRecord>& log) {
  std::vector<csv::Row> rows{{"epoch", "lr", "loss"}};
  for (const EpochRecord& r : log) {
    rows.push_back({std::to_string(r.epoch), csv::format_double(r.lr),
                    csv::format_double(r.loss)});
  }
  csv::write(path, rows);
}

std::vector<EpochRecord> read_training_log(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows[0] != csv::Row{"epoch", "lr", "loss"}) {
    throw IoError(path.string() + ": not a training log");
  }
  std::vector<EpochRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw IoError(path.string() + ": bad log row");
    out.push_back({static_cast<int>(csv::parse_int(rows[i][0])),
                   csv::parse_double(rows[i][1]),
                   csv::parse_double(rows[i][2])});
  }
  return out;
}

nlohmann::json to_json(const std::vector<EpochRecord>& log) {
  nlohmann::json j = nlohmann::json::array();
  for (const EpochRecord& r : log) {
    j.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.loss}});
  }
  return j;
}

std::vector<EpochRecord> training_log_from_json(const nlohmann::json& j) {
  std::vector<EpochRecord> out;
  for (const auto& r : j) {
    out.push_back({r.at("epoch").get<int>(), r.at("lr").get<double>(),
                   r.at("loss").get<double>()});
  }
  return out;
}

}  // namespace digitsv
