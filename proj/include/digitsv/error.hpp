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

#ifndef DIGITSV_ERROR_HPP_
#define DIGITSV_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace digitsv {

// Shape or size disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what)
      : std::invalid_argument("dimension error: " + what) {}
};

// A computation produced NaN/Inf, or an input made the result undefined.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what)
      : std::runtime_error("numeric error: " + what) {}
};

// API misuse: wrong call order, invalid labels, bad configuration values.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what)
      : std::logic_error("contract error: " + what) {}
};

// File system or format failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what)
      : std::runtime_error("io error: " + what) {}
};

}  // namespace digitsv

#endif  // DIGITSV_ERROR_HPP_
