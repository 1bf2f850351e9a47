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

#include "digitsv/optim.hpp"

#include <cmath>

#include "digitsv/checkpoint.hpp"
#include "digitsv/error.hpp"

namespace digitsv {

double decay_lr(double lr, int epoch) {
  if (epoch < 0) throw ContractError("decay_lr: negative epoch");
  return lr * std::pow(kLearningRateDecay, epoch);
}

void Adam::step(ParameterStore& params, double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (Parameter* p : params.trainable()) {
    auto [it, inserted] = state_.try_emplace(p->name);
    Moments& s = it->second;
    if (inserted) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    if (s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols()) {
      throw DimensionError("adam state for '" + p->name + "' has wrong shape");
    }
    s.m = beta1 * s.m + (1.0 - beta1) * p->grad;
    s.v = beta2 * s.v + (1.0 - beta2) * p->grad.cwiseAbs2();
    p->value.array() -=
        lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  }
}

nlohmann::json Adam::to_json() const {
  nlohmann::json j;
  j["step"] = step_;
  nlohmann::json moments = nlohmann::json::object();
  for (const auto& [name, s] : state_) {
    moments[name] = {{"rows", s.m.rows()},
                     {"cols", s.m.cols()},
                     {"m", flatten_row_major(s.m)},
                     {"v", flatten_row_major(s.v)}};
  }
  j["moments"] = std::move(moments);
  return j;
}

void Adam::load_json(const nlohmann::json& j) {
  step_ = j.at("step").get<long>();
  state_.clear();
  for (const auto& [name, s] : j.at("moments").items()) {
    const Index rows = s.at("rows").get<Index>();
    const Index cols = s.at("cols").get<Index>();
    state_[name] = Moments{
        unflatten_row_major(s.at("m").get<std::vector<double>>(), rows, cols),
        unflatten_row_major(s.at("v").get<std::vector<double>>(), rows, cols)};
  }
}

}  // namespace digitsv
