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

#include "digitsv/csv.hpp"

#include <charconv>
#include <fstream>

#include "digitsv/error.hpp"

namespace digitsv::csv {

Row split(std::string_view line, char sep) {
  Row out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(sep, start);
    if (end == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::string join(const Row& fields, char sep) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s.push_back(sep);
    s += fields[i];
  }
  return s;
}

std::vector<Row> read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split(line));
  }
  return rows;
}

void write(const std::filesystem::path& path, const std::vector<Row>& rows) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Row& r : rows) out << join(r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("not a number: '" + s + "'");
  }
  return v;
}

long parse_int(const std::string& s) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace digitsv::csv
