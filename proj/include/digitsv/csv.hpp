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

// Minimal comma-separated reading/writing. Fields never contain commas or
// quotes in any of the formats this project writes.

#ifndef DIGITSV_CSV_HPP_
#define DIGITSV_CSV_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace digitsv::csv {

using Row = std::vector<std::string>;

Row split(std::string_view line, char sep = ',');
std::string join(const Row& fields, char sep = ',');

// Reads all non-empty lines; the first row is the header.
std::vector<Row> read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const std::vector<Row>& rows);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);
long parse_int(const std::string& s);

}  // namespace digitsv::csv

#endif  // DIGITSV_CSV_HPP_
