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

#include "digitsv/checkpoint.hpp"

#include <fstream>

#include "digitsv/error.hpp"

namespace digitsv {

std::vector<double> flatten_row_major(const Matrix& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  }
  return v;
}

Matrix unflatten_row_major(const std::vector<double>& v, Index rows,
                           Index cols) {
  if (static_cast<Index>(v.size()) != rows * cols) {
    throw DimensionError("expected " + std::to_string(rows * cols) +
                         " values, got " + std::to_string(v.size()));
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = v[k++];
  }
  return m;
}

nlohmann::json parameters_to_json(const ParameterStore& store) {
  nlohmann::json j = nlohmann::json::object();
  for (const Parameter* p : store.all()) {
    j[p->name] = {{"shape", p->shape}, {"values", flatten_row_major(p->value)}};
  }
  return j;
}

void parameters_from_json(ParameterStore& store, const nlohmann::json& j) {
  if (!j.is_object()) throw IoError("parameter section is not an object");
  for (Parameter* p : store.all()) {
    if (!j.contains(p->name)) {
      throw IoError("checkpoint is missing parameter '" + p->name + "'");
    }
    const auto& entry = j.at(p->name);
    if (entry.at("shape").get<std::vector<Index>>() != p->shape) {
      throw DimensionError("checkpoint shape mismatch for '" + p->name + "'");
    }
    p->value = unflatten_row_major(entry.at("values").get<std::vector<double>>(),
                                   p->value.rows(), p->value.cols());
    p->zero_grad();
  }
  if (j.size() != store.size()) {
    throw IoError("checkpoint has parameters the model does not define");
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace digitsv
