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

#include "digitsv/ops.hpp"

#include <cmath>
#include <string>

#include "digitsv/error.hpp"
#include "digitsv/kernels.hpp"

namespace digitsv::ops {
namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(const Var& v, const char* op) {
  if (!v.valid()) throw ContractError(std::string(op) + ": unbound input");
  return *v.tape();
}

void check_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) {
    throw DimensionError(std::string(op) + ": axis must be 0 or 1");
  }
}

enum class Bcast { kNone, kScalar, kCol, kRow };

Bcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kNone;
  if (b.size() == 1) return Bcast::kScalar;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  throw DimensionError(std::string(op) + ": cannot broadcast " + dims(b) +
                       " onto " + dims(a));
}

Matrix expand(const Matrix& b, Bcast kind, Index rows, Index cols) {
  switch (kind) {
    case Bcast::kNone:
      return b;
    case Bcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
    case Bcast::kCol:
      return b.replicate(1, cols);
    case Bcast::kRow:
      return b.replicate(rows, 1);
  }
  return b;
}

Matrix reduce_to(const Matrix& g, Bcast kind) {
  switch (kind) {
    case Bcast::kNone:
      return g;
    case Bcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
    case Bcast::kCol:
      return g.rowwise().sum();
    case Bcast::kRow:
      return g.colwise().sum();
  }
  return g;
}

// im2col for a run of segments. Row k*C + c, column t of each segment holds
// x(c, offset + t + k*dilation - padding), or zero outside the segment.
// Tap-major rows keep every copy a contiguous column block.
Matrix unfold(const Matrix& x, Index kernel, Index dilation, Index padding,
              std::span<const Index> lengths, Index total_out) {
  const Index channels = x.rows();
  Matrix cols = Matrix::Zero(channels * kernel, total_out);
  Index in_off = 0;
  Index out_off = 0;
  for (Index len : lengths) {
    const Index out_len = conv1d_output_length(len, kernel, dilation, padding);
    for (Index k = 0; k < kernel; ++k) {
      const Index shift = k * dilation - padding;
      // Valid t satisfies 0 <= t + shift < len.
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(out_len, len - shift);
      if (t1 <= t0) continue;
      cols.block(k * channels, out_off + t0, channels, t1 - t0) =
          x.middleCols(in_off + t0 + shift, t1 - t0);
    }
    in_off += len;
    out_off += out_len;
  }
  return cols;
}

Matrix fold(const Matrix& cols, Index channels, Index kernel, Index dilation,
            Index padding, std::span<const Index> lengths, Index total_in) {
  Matrix x = Matrix::Zero(channels, total_in);
  Index in_off = 0;
  Index out_off = 0;
  for (Index len : lengths) {
    const Index out_len = conv1d_output_length(len, kernel, dilation, padding);
    for (Index k = 0; k < kernel; ++k) {
      const Index shift = k * dilation - padding;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(out_len, len - shift);
      if (t1 <= t0) continue;
      x.middleCols(in_off + t0 + shift, t1 - t0) +=
          cols.block(k * channels, out_off + t0, channels, t1 - t0);
    }
    in_off += len;
    out_off += out_len;
  }
  return x;
}

// Weight columns c*K + k (storage order) to k*C + c (unfold order), and back.
Matrix weight_to_taps(const Matrix& w, Index channels, Index kernel) {
  if (kernel == 1) return w;
  Matrix out(w.rows(), w.cols());
  for (Index c = 0; c < channels; ++c) {
    for (Index k = 0; k < kernel; ++k) out.col(k * channels + c) = w.col(c * kernel + k);
  }
  return out;
}

Matrix taps_to_weight(const Matrix& w, Index channels, Index kernel) {
  if (kernel == 1) return w;
  Matrix out(w.rows(), w.cols());
  for (Index c = 0; c < channels; ++c) {
    for (Index k = 0; k < kernel; ++k) out.col(c * kernel + k) = w.col(k * channels + c);
  }
  return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + dims(a.value()) + " * " +
                         dims(b.value()));
  }
  Matrix out = a.value() * b.value();
  return t.record("matmul", std::move(out), {a, b},
                  [a, b](Tape& tp, const Matrix& g) {
                    if (tp.needs_grad(a)) {
                      tp.accumulate(a, g * b.value().transpose());
                    }
                    if (tp.needs_grad(b)) {
                      tp.accumulate(b, a.value().transpose() * g);
                    }
                  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a, "transpose");
  return t.record("transpose", a.value().transpose(), {a},
                  [a](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g.transpose());
                  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "add");
  const Bcast kind = broadcast_kind(a.value(), b.value(), "add");
  Matrix out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return t.record("add", std::move(out), {a, b},
                  [a, b, kind](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g);
                    if (tp.needs_grad(b)) tp.accumulate(b, reduce_to(g, kind));
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "sub");
  const Bcast kind = broadcast_kind(a.value(), b.value(), "sub");
  Matrix out = a.value() - expand(b.value(), kind, a.rows(), a.cols());
  return t.record("sub", std::move(out), {a, b},
                  [a, b, kind](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g);
                    if (tp.needs_grad(b)) {
                      tp.accumulate(b, -reduce_to(g, kind));
                    }
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "mul");
  const Bcast kind = broadcast_kind(a.value(), b.value(), "mul");
  Matrix out =
      a.value().cwiseProduct(expand(b.value(), kind, a.rows(), a.cols()));
  return t.record(
      "mul", std::move(out), {a, b}, [a, b, kind](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) {
          tp.accumulate(
              a, g.cwiseProduct(expand(b.value(), kind, a.rows(), a.cols())));
        }
        if (tp.needs_grad(b)) {
          tp.accumulate(b, reduce_to(g.cwiseProduct(a.value()), kind));
        }
      });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a, "scale");
  return t.record("scale", a.value() * s, {a},
                  [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = tape_of(a, "add_scalar");
  Matrix out = a.value().array() + s;
  return t.record("add_scalar", std::move(out), {a},
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a, "relu");
  Matrix out = a.value().cwiseMax(0.0);
  return t.record("relu", std::move(out), {a},
                  [a](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, (a.value().array() > 0.0)
                                         .select(g, 0.0)
                                         .matrix());
                  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a, "tanh");
  Matrix out = a.value().array().tanh();
  Matrix y = out;
  return t.record("tanh", std::move(out), {a},
                  [a, y = std::move(y)](Tape& tp, const Matrix& g) {
                    Matrix d = 1.0 - y.array().square();
                    tp.accumulate(a, g.cwiseProduct(d));
                  });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a, "exp");
  Matrix out = a.value().array().exp();
  Matrix copy = out;
  return t.record("exp", std::move(out), {a},
                  [a, copy = std::move(copy)](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g.cwiseProduct(copy));
                  });
}

Var log(const Var& a) {
  Tape& t = tape_of(a, "log");
  if ((a.value().array() <= 0.0).any()) {
    throw NumericError("log of a non-positive value");
  }
  Matrix out = a.value().array().log();
  return t.record("log", std::move(out), {a},
                  [a](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, g.cwiseQuotient(a.value()));
                  });
}

Var sqrt(const Var& a) {
  Tape& t = tape_of(a, "sqrt");
  if ((a.value().array() < 0.0).any()) {
    throw NumericError("sqrt of a negative value");
  }
  Matrix out = a.value().array().sqrt();
  Matrix root = out;
  return t.record("sqrt", std::move(out), {a},
                  [a, root = std::move(root)](Tape& tp, const Matrix& g) {
                    Matrix d = 0.5 * root.array().inverse();
                    tp.accumulate(a, g.cwiseProduct(d));
                  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a, "sum");
  const Index r = a.rows();
  const Index c = a.cols();
  return t.record("sum", Matrix::Constant(1, 1, a.value().sum()), {a},
                  [a, r, c](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
                  });
}

Var sum(const Var& a, int axis) {
  check_axis(axis, "sum");
  Tape& t = tape_of(a, "sum");
  const Index r = a.rows();
  const Index c = a.cols();
  Matrix out = axis == 0 ? Matrix(a.value().colwise().sum())
                         : Matrix(a.value().rowwise().sum());
  return t.record("sum", std::move(out), {a},
                  [a, axis, r, c](Tape& tp, const Matrix& g) {
                    tp.accumulate(a, axis == 0 ? Matrix(g.replicate(r, 1))
                                               : Matrix(g.replicate(1, c)));
                  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean(const Var& a, int axis) {
  check_axis(axis, "mean");
  const Index n = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var concat(const std::vector<Var>& parts, int axis) {
  check_axis(axis, "concat");
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Tape& t = tape_of(parts.front(), "concat");
  Index total = 0;
  const Index fixed =
      axis == 0 ? parts.front().cols() : parts.front().rows();
  for (const Var& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) {
      throw DimensionError("concat: mismatched " +
                           std::string(axis == 0 ? "columns" : "rows"));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  Matrix out = axis == 0 ? Matrix(total, fixed) : Matrix(fixed, total);
  Index off = 0;
  for (const Var& p : parts) {
    if (axis == 0) {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    }
  }
  return t.record("concat", std::move(out), parts,
                  [parts, axis](Tape& tp, const Matrix& g) {
                    Index o = 0;
                    for (const Var& p : parts) {
                      const Index n = axis == 0 ? p.rows() : p.cols();
                      if (tp.needs_grad(p)) {
                        tp.accumulate(p, axis == 0 ? Matrix(g.middleRows(o, n))
                                                   : Matrix(g.middleCols(o, n)));
                      }
                      o += n;
                    }
                  });
}

Var slice(const Var& a, int axis, Index start, Index end) {
  check_axis(axis, "slice");
  Tape& t = tape_of(a, "slice");
  const Index extent = axis == 0 ? a.rows() : a.cols();
  if (start < 0 || end > extent || start >= end) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(end) + ") out of " +
                         std::to_string(extent));
  }
  const Index n = end - start;
  Matrix out = axis == 0 ? Matrix(a.value().middleRows(start, n))
                         : Matrix(a.value().middleCols(start, n));
  return t.record("slice", std::move(out), {a},
                  [a, axis, start](Tape& tp, const Matrix& g) {
                    tp.accumulate_block(a, axis == 0 ? start : 0,
                                        axis == 0 ? 0 : start, g);
                  });
}

namespace {

}  // namespace

Var softmax(const Var& a, int axis) {
  check_axis(axis, "softmax");
  Tape& t = tape_of(a, "softmax");
  Matrix y = kernels::softmax(a.value(), axis);
  Matrix copy = y;
  return t.record(
      "softmax", std::move(y), {a},
      [a, axis, y = std::move(copy)](Tape& tp, const Matrix& g) {
        tp.accumulate(a, kernels::softmax_backward(y, g, axis));
      });
}

Var log_softmax(const Var& a, int axis) {
  check_axis(axis, "log_softmax");
  Tape& t = tape_of(a, "log_softmax");
  Matrix out = kernels::log_softmax(a.value(), axis);
  Matrix p = out.array().exp().matrix();
  return t.record("log_softmax", std::move(out), {a},
                  [a, axis, p = std::move(p)](Tape& tp, const Matrix& g) {
                    Matrix dx =
                        axis == 1
                            ? Matrix(g - p.cwiseProduct(
                                             g.rowwise().sum().replicate(1, p.cols())))
                            : Matrix(g - p.cwiseProduct(
                                             g.colwise().sum().replicate(p.rows(), 1)));
                    tp.accumulate(a, dx);
                  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.cols()) {
    throw DimensionError("linear: input " + dims(x.value()) + " vs weight " +
                         dims(weight.value()));
  }
  Var y = matmul(x, transpose(weight));
  if (bias.valid()) {
    if (bias.rows() != 1 || bias.cols() != weight.rows()) {
      throw DimensionError("linear: bias must be 1 x " +
                           std::to_string(weight.rows()));
    }
    y = add(y, bias);
  }
  return y;
}

Index conv1d_output_length(Index length, Index kernel, Index dilation,
                           Index padding) {
  return length + 2 * padding - dilation * (kernel - 1);
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel,
           Index dilation, Index padding) {
  const Index len = x.cols();
  return conv1d_segments(x, weight, bias, kernel, dilation, padding,
                         std::span<const Index>(&len, 1));
}

Var conv1d_segments(const Var& x, const Var& weight, const Var& bias,
                    Index kernel, Index dilation, Index padding,
                    std::span<const Index> lengths) {
  Tape& t = tape_of(x, "conv1d");
  if (kernel < 1 || dilation < 1 || padding < 0) {
    throw DimensionError("conv1d: need kernel >= 1, dilation >= 1, padding >= 0");
  }
  const Index channels = x.rows();
  if (weight.cols() != channels * kernel) {
    throw DimensionError("conv1d: weight " + dims(weight.value()) +
                         " does not match " + std::to_string(channels) +
                         " input channels with kernel " +
                         std::to_string(kernel));
  }
  Index total_in = 0;
  Index total_out = 0;
  for (Index len : lengths) {
    const Index out_len = conv1d_output_length(len, kernel, dilation, padding);
    if (out_len <= 0) {
      throw DimensionError("conv1d: output length " + std::to_string(out_len) +
                           " for input length " + std::to_string(len));
    }
    total_in += len;
    total_out += out_len;
  }
  if (total_in != x.cols()) {
    throw DimensionError("conv1d: segment lengths do not cover the input");
  }
  Matrix cols = unfold(x.value(), kernel, dilation, padding, lengths, total_out);
  Matrix taps = weight_to_taps(weight.value(), channels, kernel);
  Matrix out = taps * cols;
  if (bias.valid()) {
    if (bias.rows() != weight.rows() || bias.cols() != 1) {
      throw DimensionError("conv1d: bias must be C_out x 1");
    }
    out.colwise() += bias.value().col(0);
  }
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  std::vector<Index> segs(lengths.begin(), lengths.end());
  return t.record(
      "conv1d", std::move(out), inputs,
      [x, weight, bias, kernel, dilation, padding, channels, total_in,
       segs = std::move(segs), cols = std::move(cols),
       taps = std::move(taps)](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(weight)) {
          tp.accumulate(weight, taps_to_weight(g * cols.transpose(), channels,
                                               kernel));
        }
        if (bias.valid() && tp.needs_grad(bias)) {
          tp.accumulate(bias, g.rowwise().sum());
        }
        if (tp.needs_grad(x)) {
          Matrix dcols = taps.transpose() * g;
          tp.accumulate(x, fold(dcols, channels, kernel, dilation, padding,
                                segs, total_in));
        }
      });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps,
               Vector* batch_mean, Vector* batch_var) {
  Tape& t = tape_of(x, "batch_norm");
  const Index c = x.rows();
  const Index n = x.cols();
  if (n < 1) throw DimensionError("batch_norm: empty batch");
  if (gamma.rows() != c || gamma.cols() != 1 || beta.rows() != c ||
      beta.cols() != 1) {
    throw DimensionError("batch_norm: gamma/beta must be " +
                         std::to_string(c) + " x 1");
  }
  Vector mu = x.value().rowwise().mean();
  Matrix centered = x.value().colwise() - mu;
  Vector var = centered.array().square().rowwise().mean();
  Vector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().colwise() * gamma.value().col(0).array())
                   .colwise() +
               beta.value().col(0).array();
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return t.record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Matrix& g) {
        if (tp.needs_grad(gamma)) {
          tp.accumulate(gamma, g.cwiseProduct(xhat).rowwise().sum());
        }
        if (tp.needs_grad(beta)) tp.accumulate(beta, g.rowwise().sum());
        if (tp.needs_grad(x)) {
          Matrix dxhat = g.array().colwise() * gamma.value().col(0).array();
          Vector m1 = dxhat.rowwise().mean();
          Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat.colwise() - m1;
          dx.array() -= xhat.array().colwise() * m2.array();
          dx = dx.array().colwise() * inv_std.array();
          tp.accumulate(x, dx);
        }
      });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta,
                    const Vector& running_mean, const Vector& running_var,
                    double eps) {
  Tape& t = tape_of(x, "batch_norm");
  const Index c = x.rows();
  if (running_mean.size() != c || running_var.size() != c) {
    throw DimensionError("batch_norm: running stats size mismatch");
  }
  Vector inv_std = (running_var.array() + eps).rsqrt();
  Matrix xhat = (x.value().colwise() - running_mean).array().colwise() *
                inv_std.array();
  Matrix out = (xhat.array().colwise() * gamma.value().col(0).array())
                   .colwise() +
               beta.value().col(0).array();
  return t.record(
      "batch_norm_eval", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Matrix& g) {
        if (tp.needs_grad(gamma)) {
          tp.accumulate(gamma, g.cwiseProduct(xhat).rowwise().sum());
        }
        if (tp.needs_grad(beta)) tp.accumulate(beta, g.rowwise().sum());
        if (tp.needs_grad(x)) {
          Matrix dx = g.array().colwise() *
                      (gamma.value().col(0).array() * inv_std.array());
          tp.accumulate(x, dx);
        }
      });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tape& t = tape_of(x, "layer_norm");
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 ||
      beta.cols() != d) {
    throw DimensionError("layer_norm: gamma/beta must be 1 x " +
                         std::to_string(d));
  }
  Vector mu = x.value().rowwise().mean();
  Matrix centered = x.value().colwise() - mu;
  Vector inv_std =
      (centered.array().square().rowwise().mean() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return t.record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Matrix& g) {
        if (tp.needs_grad(gamma)) {
          tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        }
        if (tp.needs_grad(beta)) tp.accumulate(beta, g.colwise().sum());
        if (tp.needs_grad(x)) {
          Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
          Vector m1 = dxhat.rowwise().mean();
          Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat.colwise() - m1;
          dx.array() -= xhat.array().colwise() * m2.array();
          dx = dx.array().colwise() * inv_std.array();
          tp.accumulate(x, dx);
        }
      });
}

Var normalize_rows(const Var& x) {
  Tape& t = tape_of(x, "normalize_rows");
  Vector norms = x.value().rowwise().norm();
  if ((norms.array() <= 0.0).any()) {
    throw NumericError("normalize_rows: zero vector cannot be normalized");
  }
  Matrix y = x.value().array().colwise() / norms.array();
  Matrix copy = y;
  return t.record(
      "normalize_rows", std::move(y), {x},
      [x, y = std::move(copy), norms = std::move(norms)](Tape& tp,
                                                         const Matrix& g) {
        Vector dots = g.cwiseProduct(y).rowwise().sum();
        Matrix dx = g - (y.array().colwise() * dots.array()).matrix();
        dx = dx.array().colwise() / norms.array();
        tp.accumulate(x, dx);
      });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Tape& t = tape_of(table, "gather_rows");
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(ids[i]) +
                          " out of range");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.record("gather_rows", std::move(out), {table},
                  [table, idx = std::move(idx)](Tape& tp, const Matrix& g) {
                    Matrix d = Matrix::Zero(table.rows(), table.cols());
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      d.row(idx[i]) += g.row(static_cast<Index>(i));
                    }
                    tp.accumulate(table, d);
                  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  Tape& t = tape_of(logits, "cross_entropy");
  const Index n = logits.rows();
  const Index k = logits.cols();
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  Matrix p = kernels::softmax(logits.value(), 1);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(y) +
                          " out of range [0, " + std::to_string(k) + ")");
    }
    const auto row = logits.value().row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += lse - row(y);
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return t.record("cross_entropy", Matrix::Constant(1, 1, loss), {logits},
                  [logits, p = std::move(p), ys = std::move(ys),
                   n](Tape& tp, const Matrix& g) {
                    Matrix d = p;
                    for (Index i = 0; i < n; ++i) d(i, ys[i]) -= 1.0;
                    tp.accumulate(logits, d * (g(0, 0) / static_cast<double>(n)));
                  });
}

Var segment_mean(const Var& x, std::span<const Index> lengths) {
  Tape& t = tape_of(x, "segment_mean");
  Index total = 0;
  for (Index len : lengths) {
    if (len < 1) throw DimensionError("segment_mean: empty segment");
    total += len;
  }
  if (lengths.empty() || total != x.cols()) {
    throw DimensionError("segment_mean: lengths do not cover the columns");
  }
  std::vector<Index> lens(lengths.begin(), lengths.end());
  Matrix out(x.rows(), static_cast<Index>(lens.size()));
  Index off = 0;
  for (std::size_t s = 0; s < lens.size(); ++s) {
    out.col(static_cast<Index>(s)) =
        x.value().middleCols(off, lens[s]).rowwise().mean();
    off += lens[s];
  }
  return t.record(
      "segment_mean", std::move(out), {x},
      [x, lens = std::move(lens)](Tape& tp, const Matrix& g) {
        Matrix dx(x.rows(), x.cols());
        Index o = 0;
        for (std::size_t s = 0; s < lens.size(); ++s) {
          dx.middleCols(o, lens[s]) =
              (g.col(static_cast<Index>(s)) / static_cast<double>(lens[s]))
                  .replicate(1, lens[s]);
          o += lens[s];
        }
        tp.accumulate(x, dx);
      });
}

Var bce_with_logits(const Var& logits, std::span<const int> labels) {
  Tape& t = tape_of(logits, "bce_with_logits");
  const Index n = logits.rows();
  if (logits.cols() != 1 || static_cast<Index>(labels.size()) != n) {
    throw DimensionError("bce_with_logits: need N x 1 logits and N labels");
  }
  double loss = 0.0;
  Matrix d(n, 1);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw ContractError("bce_with_logits: label not 0/1");
    const double z = logits.value()(i, 0);
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    d(i, 0) = 1.0 / (1.0 + std::exp(-z)) - y;
  }
  loss /= static_cast<double>(n);
  return t.record("bce_with_logits", Matrix::Constant(1, 1, loss), {logits},
                  [logits, d = std::move(d), n](Tape& tp, const Matrix& g) {
                    tp.accumulate(logits, d * (g(0, 0) / static_cast<double>(n)));
                  });
}

}  // namespace digitsv::ops
