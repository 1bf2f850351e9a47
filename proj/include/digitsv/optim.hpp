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

#ifndef DIGITSV_OPTIM_HPP_
#define DIGITSV_OPTIM_HPP_

#include <map>
#include <string>

#include "digitsv/tensor.hpp"
#include "json.hpp"

namespace digitsv {

inline constexpr double kInitialLearningRate = 1e-3;
inline constexpr double kLearningRateDecay = 0.97;

// lr * 0.97^epoch: a 3% decay per completed epoch.
double decay_lr(double lr, int epoch);

// Adam with bias correction. Moments are keyed by parameter name.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Applies one update to every trainable parameter from its .grad.
  void step(ParameterStore& params, double lr);
  long steps() const { return step_; }

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  std::map<std::string, Moments> state_;
  long step_ = 0;
};

}  // namespace digitsv

#endif  // DIGITSV_OPTIM_HPP_
