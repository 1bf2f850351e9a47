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

#include "digitsv/kernels.hpp"

#include <cmath>

namespace digitsv::kernels {

namespace {

// Shifted values x - max along the axis, and the log of the normalizer.
Matrix shifted(const Matrix& x, int axis, Vector* log_norm) {
  Matrix y = x;
  if (axis == 1) {
    const Vector m = x.rowwise().maxCoeff();
    for (Index j = 0; j < y.cols(); ++j) y.col(j) -= m;
    Matrix e = y.array().exp().matrix();
    *log_norm = e.rowwise().sum().array().log().matrix();
  } else {
    log_norm->resize(y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
      y.col(j).array() -= y.col(j).maxCoeff();
      (*log_norm)(j) = std::log(y.col(j).array().exp().sum());
    }
  }
  return y;
}

}  // namespace

Matrix softmax(const Matrix& x, int axis) {
  Matrix y = x;
  if (axis == 1) {
    const Vector m = x.rowwise().maxCoeff();
    for (Index j = 0; j < y.cols(); ++j) y.col(j) -= m;
    y.array() = y.array().exp();
    const Vector inv = y.rowwise().sum().cwiseInverse();
    for (Index j = 0; j < y.cols(); ++j) y.col(j).array() *= inv.array();
  } else {
    for (Index j = 0; j < y.cols(); ++j) {
      y.col(j).array() = (y.col(j).array() - y.col(j).maxCoeff()).exp();
      y.col(j) /= y.col(j).sum();
    }
  }
  return y;
}

Matrix log_softmax(const Matrix& x, int axis) {
  Vector log_norm;
  Matrix y = shifted(x, axis, &log_norm);
  if (axis == 1) {
    for (Index j = 0; j < y.cols(); ++j) y.col(j) -= log_norm;
  } else {
    for (Index j = 0; j < y.cols(); ++j) y.col(j).array() -= log_norm(j);
  }
  return y;
}

Matrix softmax_backward(const Matrix& p, const Matrix& g, int axis) {
  Matrix dx(p.rows(), p.cols());
  if (axis == 1) {
    const Vector r = g.cwiseProduct(p).rowwise().sum();
    for (Index j = 0; j < p.cols(); ++j) {
      dx.col(j) = p.col(j).cwiseProduct(g.col(j) - r);
    }
  } else {
    for (Index j = 0; j < p.cols(); ++j) {
      const double r = g.col(j).dot(p.col(j));
      dx.col(j) = p.col(j).cwiseProduct((g.col(j).array() - r).matrix());
    }
  }
  return dx;
}

}  // namespace digitsv::kernels
