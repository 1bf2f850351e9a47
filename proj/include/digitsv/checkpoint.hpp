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

// Parameter checkpoints: one JSON object mapping dot-separated parameter
// names to {"shape": [...], "values": [...]} with values flattened row-major
// over the logical shape.

#ifndef DIGITSV_CHECKPOINT_HPP_
#define DIGITSV_CHECKPOINT_HPP_

#include <filesystem>

#include "digitsv/tensor.hpp"
#include "json.hpp"

namespace digitsv {

nlohmann::json parameters_to_json(const ParameterStore& store);
// Every parameter of `store` must be present with a matching shape.
void parameters_from_json(ParameterStore& store, const nlohmann::json& j);

// Row-major flattening of a stored matrix and its inverse.
std::vector<double> flatten_row_major(const Matrix& m);
Matrix unflatten_row_major(const std::vector<double>& v, Index rows,
                           Index cols);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j);

}  // namespace digitsv

#endif  // DIGITSV_CHECKPOINT_HPP_
