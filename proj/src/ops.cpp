// Copyright 2026 The naptune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "naptune/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "naptune/errors.hpp"

namespace naptune::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using Stride = Eigen::OuterStride<>;
using SMatMap = Eigen::Map<RowMat, 0, Stride>;
using CSMatMap = Eigen::Map<const RowMat, 0, Stride>;
using ArrMap = Eigen::Map<Eigen::ArrayXf>;
using CArrMap = Eigen::Map<const Eigen::ArrayXf>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

ArrMap arr(std::span<float> s) { return {s.data(), idx(s.size())}; }
CArrMap carr(std::span<const float> s) { return {s.data(), idx(s.size())}; }
CArrMap carr(std::span<float> s) { return {s.data(), idx(s.size())}; }

MatMap mat(std::span<float> s, std::size_t rows, std::size_t cols) {
  return {s.data(), idx(rows), idx(cols)};
}
CMatMap cmat(std::span<const float> s, std::size_t rows, std::size_t cols) {
  return {s.data(), idx(rows), idx(cols)};
}
CMatMap cmat(std::span<float> s, std::size_t rows, std::size_t cols) {
  return {s.data(), idx(rows), idx(cols)};
}

void finish(const Tensor& out, const char* name) {
  if (finite_checks_enabled()) require_finite(out, name);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* name) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* name) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(name) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

std::size_t leading_rows(const Tensor& t) { return t.rank() == 0 ? 1 : t.numel() / t.shape().back(); }

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  arr(out.data()) = carr(a.data()) + carr(b.data());
  finish(out, "add");
  if (tape.needs_record({&a, &b})) {
    bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ra, rb] {
      auto g = carr(out.grad());
      if (ra) arr(a.grad_buffer()) += g;
      if (rb) arr(b.grad_buffer()) += g;
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  arr(out.data()) = carr(a.data()) - carr(b.data());
  finish(out, "sub");
  if (tape.needs_record({&a, &b})) {
    bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ra, rb] {
      auto g = carr(out.grad());
      if (ra) arr(a.grad_buffer()) += g;
      if (rb) arr(b.grad_buffer()) -= g;
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  arr(out.data()) = carr(a.data()) * carr(b.data());
  finish(out, "mul");
  if (tape.needs_record({&a, &b})) {
    bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ra, rb] {
      auto g = carr(out.grad());
      if (ra) arr(a.grad_buffer()) += g * carr(b.data());
      if (rb) arr(b.grad_buffer()) += g * carr(a.data());
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, float factor) {
  Tensor out = Tensor::zeros(x.shape());
  arr(out.data()) = carr(x.data()) * factor;
  finish(out, "scale");
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out, factor] { arr(x.grad_buffer()) += carr(out.grad()) * factor; });
  }
  return out;
}

Tensor add_broadcast(Tape& tape, const Tensor& x, const Tensor& y) {
  if (y.rank() > x.rank() ||
      !std::equal(y.shape().begin(), y.shape().end(), x.shape().end() - static_cast<long>(y.rank()))) {
    throw ShapeError("add_broadcast: " + shape_str(y.shape()) + " does not trail " + shape_str(x.shape()));
  }
  const std::size_t inner = y.numel();
  const std::size_t outer = inner == 0 ? 0 : x.numel() / inner;
  Tensor out = Tensor::zeros(x.shape());
  auto o = mat(out.data(), outer, inner);
  o = cmat(x.data(), outer, inner);
  o.rowwise() += cmat(y.data(), 1, inner).row(0);
  finish(out, "add_broadcast");
  if (tape.needs_record({&x, &y})) {
    bool rx = x.requires_grad(), ry = y.requires_grad();
    tape.record(out, [x, y, out, rx, ry, outer, inner] {
      auto g = cmat(out.grad(), outer, inner);
      if (rx) mat(x.grad_buffer(), outer, inner) += g;
      if (ry) mat(y.grad_buffer(), 1, inner) += g.colwise().sum();
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::scalar(static_cast<float>(carr(x.data()).cast<double>().sum()));
  finish(out, "sum");
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out] { arr(x.grad_buffer()) += out.grad()[0]; });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  const float n = static_cast<float>(x.numel());
  Tensor out = Tensor::scalar(static_cast<float>(carr(x.data()).cast<double>().sum() / n));
  finish(out, "mean");
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out, n] { arr(x.grad_buffer()) += out.grad()[0] / n; });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  mat(out.data(), m, n).noalias() = cmat(a.data(), m, k) * cmat(b.data(), k, n);
  finish(out, "matmul");
  if (tape.needs_record({&a, &b})) {
    bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ra, rb, m, k, n] {
      auto g = cmat(out.grad(), m, n);
      if (ra) mat(a.grad_buffer(), m, k).noalias() += g * cmat(b.data(), k, n).transpose();
      if (rb) mat(b.grad_buffer(), k, n).noalias() += cmat(a.data(), m, k).transpose() * g;
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  mat(out.data(), n, m) = cmat(a.data(), m, n).transpose();
  if (tape.needs_record({&a})) {
    tape.record(out, [a, out, m, n] { mat(a.grad_buffer(), m, n) += cmat(out.grad(), n, m).transpose(); });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  if (x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(1))) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t rows = leading_rows(x), in = weight.dim(0), outw = weight.dim(1);
  Shape oshape = x.shape();
  oshape.back() = outw;
  Tensor out = Tensor::zeros(oshape);
  auto o = mat(out.data(), rows, outw);
  o.noalias() = cmat(x.data(), rows, in) * cmat(weight.data(), in, outw);
  if (has_bias) o.rowwise() += cmat(bias.data(), 1, outw).row(0);
  finish(out, "linear");
  if (tape.needs_record({&x, &weight, &bias})) {
    bool rx = x.requires_grad(), rw = weight.requires_grad(), rb = has_bias && bias.requires_grad();
    tape.record(out, [x, weight, bias, out, rx, rw, rb, rows, in, outw] {
      auto g = cmat(out.grad(), rows, outw);
      if (rx) mat(x.grad_buffer(), rows, in).noalias() += g * cmat(weight.data(), in, outw).transpose();
      if (rw) mat(weight.grad_buffer(), in, outw).noalias() += cmat(x.data(), rows, in).transpose() * g;
      if (rb) mat(bias.grad_buffer(), 1, outw) += g.colwise().sum();
    });
  }
  return out;
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
}  // namespace

Tensor gelu(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto v = carr(x.data());
  arr(out.data()) = 0.5f * v * (1.0f + (kGeluC * (v + kGeluA * v.cube())).tanh());
  finish(out, "gelu");
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out] {
      auto v = carr(x.data());
      Eigen::ArrayXf t = (kGeluC * (v + kGeluA * v.cube())).tanh();
      arr(x.grad_buffer()) +=
          carr(out.grad()) * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t.square()) * kGeluC * (1.0f + 3.0f * kGeluA * v.square()));
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  const std::size_t n = x.shape()[static_cast<std::size_t>(a)];
  if (n == 0) throw ShapeError("softmax over an empty axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = a + 1; i < r; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];

  Tensor out = Tensor::zeros(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xs[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += std::exp(static_cast<double>(xs[base + j * inner]) - mx);
      for (std::size_t j = 0; j < n; ++j) {
        ys[base + j * inner] = static_cast<float>(std::exp(static_cast<double>(xs[base + j * inner]) - mx) / s);
      }
    }
  }
  finish(out, "softmax");
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out, outer, inner, n] {
      auto ys = out.data();
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          float dot = 0.0f;
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * ys[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            gx[base + j * inner] += ys[base + j * inner] * (g[base + j * inner] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm on a scalar");
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  }
  if (!(eps > 0.0f)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = leading_rows(x);
  Tensor out = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<FloatBuffer>(x.numel());
  auto rstd = std::make_shared<FloatBuffer>(rows);
  auto xs = x.data();
  auto ys = out.data();
  auto gs = gain.data();
  auto bs = bias.data();
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = xs.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
    (*rstd)[r] = static_cast<float>(rs);
    for (std::size_t j = 0; j < n; ++j) {
      const auto h = static_cast<float>((row[j] - mu) * rs);
      (*xhat)[r * n + j] = h;
      ys[r * n + j] = h * gs[j] + bs[j];
    }
  }
  finish(out, "layer_norm");
  if (tape.needs_record({&x, &gain, &bias})) {
    bool rx = x.requires_grad(), rg = gain.requires_grad(), rb = bias.requires_grad();
    tape.record(out, [x, gain, bias, out, xhat, rstd, rows, n, inv_n, rx, rg, rb] {
      auto g = out.grad();
      auto gs = gain.data();
      std::span<float> gx, gg, gb;
      if (rx) gx = x.grad_buffer();
      if (rg) gg = gain.grad_buffer();
      if (rb) gb = bias.grad_buffer();
      FloatBuffer dh(n);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* gr = g.data() + r * n;
        const float* hr = xhat->data() + r * n;
        float m1 = 0.0f, m2 = 0.0f;
        for (std::size_t j = 0; j < n; ++j) {
          if (rg) gg[j] += gr[j] * hr[j];
          if (rb) gb[j] += gr[j];
          dh[j] = gr[j] * gs[j];
          m1 += dh[j];
          m2 += dh[j] * hr[j];
        }
        if (!rx) continue;
        m1 *= inv_n;
        m2 *= inv_n;
        const float rs = (*rstd)[r];
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += rs * (dh[j] - m1 - hr[j] * m2);
      }
    });
  }
  return out;
}

Tensor l2_normalize(Tape& tape, const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("l2_normalize on a scalar");
  const std::size_t n = x.shape().back();
  const std::size_t rows = leading_rows(x);
  Tensor out = Tensor::zeros(x.shape());
  auto norms = std::make_shared<FloatBuffer>(rows);
  auto xm = cmat(x.data(), rows, n);
  auto ym = mat(out.data(), rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double nr = xm.row(idx(r)).cast<double>().norm();
    if (!(nr > 0.0) || !std::isfinite(nr)) {
      throw NumericError("l2_normalize: row " + std::to_string(r) + " has zero or non-finite norm");
    }
    (*norms)[r] = static_cast<float>(nr);
    ym.row(idx(r)) = (xm.row(idx(r)).cast<double>() / nr).cast<float>();
  }
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out, norms, rows, n] {
      auto y = cmat(out.data(), rows, n);
      auto g = cmat(out.grad(), rows, n);
      auto gx = mat(x.grad_buffer(), rows, n);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto ri = idx(r);
        const float d = y.row(ri).dot(g.row(ri));
        gx.row(ri) += (g.row(ri) - d * y.row(ri)) / (*norms)[r];
      }
    });
  }
  return out;
}

Tensor scaled_cosine(Tape& tape, const Tensor& a, const Tensor& b, float scale) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("scaled_cosine: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = b.dim(0), d = a.dim(1);
  using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto unit = [d](const Tensor& t, std::size_t rows, const char* side) {
    auto m = std::make_shared<DMat>(cmat(t.data(), rows, d).cast<double>());
    auto norms = std::make_shared<Eigen::VectorXd>(m->rowwise().norm());
    for (std::size_t r = 0; r < rows; ++r) {
      const double nr = (*norms)(idx(r));
      if (!(nr > 0.0) || !std::isfinite(nr)) {
        throw NumericError(std::string("scaled_cosine: ") + side + " row " + std::to_string(r) +
                           " has zero or non-finite norm");
      }
      m->row(idx(r)) /= nr;
    }
    return std::make_pair(m, norms);
  };
  auto [ua, na] = unit(a, n, "left");
  auto [ub, nb] = unit(b, k, "right");
  auto cos = std::make_shared<DMat>((*ua) * ub->transpose());
  Tensor out = Tensor::zeros({n, k});
  mat(out.data(), n, k) = (*cos * static_cast<double>(scale)).cast<float>();
  finish(out, "scaled_cosine");
  if (tape.needs_record({&a, &b})) {
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ua, na, ub, nb, cos, scale, n, k, d, ra, rb] {
      const DMat g = cmat(out.grad(), n, k).cast<double>() * static_cast<double>(scale);
      if (ra) {
        DMat ga = g * (*ub);
        const Eigen::VectorXd proj = (g.array() * cos->array()).rowwise().sum();
        ga -= proj.asDiagonal() * (*ua);
        ga = na->cwiseInverse().asDiagonal() * ga;
        mat(a.grad_buffer(), n, d) += ga.cast<float>();
      }
      if (rb) {
        DMat gb = g.transpose() * (*ua);
        const Eigen::VectorXd proj = (g.array() * cos->array()).colwise().sum().transpose();
        gb -= proj.asDiagonal() * (*ub);
        gb = nb->cwiseInverse().asDiagonal() * gb;
        mat(b.grad_buffer(), k, d) += gb.cast<float>();
      }
    });
  }
  return out;
}

namespace {

// Per-row log-softmax of a [rows, k] block into `dst`.
void log_softmax_rows(std::span<const float> src, std::span<float> dst, std::size_t rows, std::size_t k) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* s = src.data() + r * k;
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, s[j]);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(static_cast<double>(s[j]) - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t j = 0; j < k; ++j) dst[r * k + j] = static_cast<float>(s[j] - lse);
  }
}

}  // namespace

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw ShapeError("cross_entropy: label count differs from batch size");
  if (b == 0 || k == 0) throw ShapeError("cross_entropy: empty logits");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  auto logp = std::make_shared<FloatBuffer>(b * k);
  log_softmax_rows(logits.data(), *logp, b, k);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) loss -= (*logp)[r * k + static_cast<std::size_t>(labels[r])];
  Tensor out = Tensor::scalar(static_cast<float>(loss / static_cast<double>(b)));
  finish(out, "cross_entropy");
  if (tape.needs_record({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    tape.record(out, [logits, out, logp, ys = std::move(ys), b, k] {
      const float g = out.grad()[0] / static_cast<float>(b);
      auto gl = logits.grad_buffer();
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < k; ++j) gl[r * k + j] += g * std::exp((*logp)[r * k + j]);
        gl[r * k + static_cast<std::size_t>(ys[r])] -= g;
      }
    });
  }
  return out;
}

Tensor kl_softmax(Tape& tape, const Tensor& p_logits, const Tensor& q_logits) {
  require_rank(p_logits, 2, "kl_softmax");
  require_same_shape(p_logits, q_logits, "kl_softmax");
  const std::size_t b = p_logits.dim(0), k = p_logits.dim(1);
  if (b == 0 || k == 0) throw ShapeError("kl_softmax: empty input");
  auto logp = std::make_shared<FloatBuffer>(b * k);
  auto logq = std::make_shared<FloatBuffer>(b * k);
  auto row_kl = std::make_shared<FloatBuffer>(b);
  log_softmax_rows(p_logits.data(), *logp, b, k);
  log_softmax_rows(q_logits.data(), *logq, b, k);
  float total = 0.0f;
  for (std::size_t r = 0; r < b; ++r) {
    float kl = 0.0f;
    for (std::size_t j = 0; j < k; ++j) {
      const float lp = (*logp)[r * k + j];
      kl += std::exp(lp) * (lp - (*logq)[r * k + j]);
    }
    (*row_kl)[r] = kl;
    total += kl;
  }
  Tensor out = Tensor::scalar(total / static_cast<float>(b));
  finish(out, "kl_softmax");
  if (tape.needs_record({&p_logits, &q_logits})) {
    bool rp = p_logits.requires_grad(), rq = q_logits.requires_grad();
    tape.record(out, [p_logits, q_logits, out, logp, logq, row_kl, b, k, rp, rq] {
      const float g = out.grad()[0] / static_cast<float>(b);
      std::span<float> gp, gq;
      if (rp) gp = p_logits.grad_buffer();
      if (rq) gq = q_logits.grad_buffer();
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t i = r * k + j;
          const float p = std::exp((*logp)[i]);
          if (rp) gp[i] += g * p * ((*logp)[i] - (*logq)[i] - (*row_kl)[r]);
          if (rq) gq[i] += g * (std::exp((*logq)[i]) - p);
        }
      }
    });
  }
  return out;
}

Tensor attention(Tape& tape, const Tensor& qkv, std::size_t heads, bool causal) {
  require_rank(qkv, 3, "attention");
  const std::size_t batch = qkv.dim(0), seq = qkv.dim(1), w3 = qkv.dim(2);
  if (w3 % 3 != 0 || heads == 0 || (w3 / 3) % heads != 0) {
    throw ShapeError("attention: packed width " + std::to_string(w3) + " incompatible with " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t width = w3 / 3, dh = width / heads;
  const float sc = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor out = Tensor::zeros({batch, seq, width});
  auto probs = std::make_shared<FloatBuffer>(batch * heads * seq * seq);
  const float* src = qkv.data().data();
  float* dst = out.data().data();
  const auto S = idx(seq), D = idx(dh);
  for (std::size_t b = 0; b < batch; ++b) {
    const float* base = src + b * seq * w3;
    for (std::size_t h = 0; h < heads; ++h) {
      CSMatMap q(base + h * dh, S, D, Stride(idx(w3)));
      CSMatMap k(base + width + h * dh, S, D, Stride(idx(w3)));
      CSMatMap v(base + 2 * width + h * dh, S, D, Stride(idx(w3)));
      MatMap p(probs->data() + (b * heads + h) * seq * seq, S, S);
      p.noalias() = (q * k.transpose()) * sc;
      for (Eigen::Index i = 0; i < S; ++i) {
        const Eigen::Index valid = causal ? i + 1 : S;
        auto row = p.row(i);
        const double mx = row.head(valid).maxCoeff();
        const Eigen::ArrayXd e = (row.head(valid).transpose().cast<double>().array() - mx).exp();
        row.head(valid) = (e / e.sum()).cast<float>().transpose();
        if (valid < S) row.tail(S - valid).setZero();
      }
      SMatMap o(dst + b * seq * width + h * dh, S, D, Stride(idx(width)));
      o.noalias() = p * v;
    }
  }
  finish(out, "attention");
  if (tape.needs_record({&qkv})) {
    tape.record(out, [qkv, out, probs, batch, seq, heads, width, dh, w3, sc] {
      const float* src = qkv.data().data();
      float* gsrc = qkv.grad_buffer().data();
      const float* gout = out.grad().data();
      const auto S = idx(seq), D = idx(dh);
      RowMat dp(S, S), ds(S, S);
      for (std::size_t b = 0; b < batch; ++b) {
        const float* base = src + b * seq * w3;
        float* gbase = gsrc + b * seq * w3;
        for (std::size_t h = 0; h < heads; ++h) {
          CSMatMap q(base + h * dh, S, D, Stride(idx(w3)));
          CSMatMap k(base + width + h * dh, S, D, Stride(idx(w3)));
          CSMatMap v(base + 2 * width + h * dh, S, D, Stride(idx(w3)));
          SMatMap gq(gbase + h * dh, S, D, Stride(idx(w3)));
          SMatMap gk(gbase + width + h * dh, S, D, Stride(idx(w3)));
          SMatMap gv(gbase + 2 * width + h * dh, S, D, Stride(idx(w3)));
          CMatMap p(probs->data() + (b * heads + h) * seq * seq, S, S);
          CSMatMap go(gout + b * seq * width + h * dh, S, D, Stride(idx(width)));
          dp.noalias() = go * v.transpose();
          for (Eigen::Index i = 0; i < S; ++i) {
            const float r = dp.row(i).dot(p.row(i));
            ds.row(i) = p.row(i).array() * (dp.row(i).array() - r);
          }
          gv.noalias() += p.transpose() * go;
          gq.noalias() += (ds * k) * sc;
          gk.noalias() += (ds.transpose() * q) * sc;
        }
      }
    });
  }
  return out;
}

Tensor concat_tokens(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_tokens");
  require_rank(b, 3, "concat_tokens");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_tokens: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), sa = a.dim(1), sb = b.dim(1), w = a.dim(2);
  Tensor out = Tensor::zeros({batch, sa + sb, w});
  auto as = a.data(), bs = b.data(), os = out.data();
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(as.data() + i * sa * w, sa * w, os.data() + i * (sa + sb) * w);
    std::copy_n(bs.data() + i * sb * w, sb * w, os.data() + i * (sa + sb) * w + sa * w);
  }
  if (tape.needs_record({&a, &b})) {
    bool ra = a.requires_grad(), rb = b.requires_grad();
    tape.record(out, [a, b, out, ra, rb, batch, sa, sb, w] {
      auto g = out.grad();
      std::span<float> ga, gb;
      if (ra) ga = a.grad_buffer();
      if (rb) gb = b.grad_buffer();
      for (std::size_t i = 0; i < batch; ++i) {
        const float* gi = g.data() + i * (sa + sb) * w;
        if (ra) for (std::size_t j = 0; j < sa * w; ++j) ga[i * sa * w + j] += gi[j];
        if (rb) for (std::size_t j = 0; j < sb * w; ++j) gb[i * sb * w + j] += gi[sa * w + j];
      }
    });
  }
  return out;
}

Tensor slice_tokens(Tape& tape, const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 3, "slice_tokens");
  const std::size_t batch = x.dim(0), seq = x.dim(1), w = x.dim(2);
  if (start + count > seq) {
    throw ShapeError("slice_tokens: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") exceeds sequence length " + std::to_string(seq));
  }
  Tensor out = Tensor::zeros({batch, count, w});
  auto xs = x.data(), os = out.data();
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(xs.data() + (i * seq + start) * w, count * w, os.data() + i * count * w);
  }
  if (tape.needs_record({&x})) {
    tape.record(out, [x, out, batch, seq, w, start, count] {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < count * w; ++j) gx[(i * seq + start) * w + j] += g[i * count * w + j];
      }
    });
  }
  return out;
}

Tensor gather_tokens(Tape& tape, const Tensor& x, std::span<const std::size_t> index) {
  require_rank(x, 3, "gather_tokens");
  const std::size_t batch = x.dim(0), seq = x.dim(1), w = x.dim(2);
  if (index.size() != batch) throw ShapeError("gather_tokens: one index per sequence required");
  for (auto t : index) {
    if (t >= seq) throw IndexError("gather_tokens: position " + std::to_string(t) + " beyond sequence");
  }
  Tensor out = Tensor::zeros({batch, w});
  auto xs = x.data(), os = out.data();
  for (std::size_t i = 0; i < batch; ++i) std::copy_n(xs.data() + (i * seq + index[i]) * w, w, os.data() + i * w);
  if (tape.needs_record({&x})) {
    std::vector<std::size_t> pos(index.begin(), index.end());
    tape.record(out, [x, out, pos = std::move(pos), seq, w] {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < pos.size(); ++i) {
        for (std::size_t j = 0; j < w; ++j) gx[(i * seq + pos[i]) * w + j] += g[i * w + j];
      }
    });
  }
  return out;
}

Tensor broadcast_batch(Tape& tape, const Tensor& v, std::size_t batch) {
  require_rank(v, 2, "broadcast_batch");
  const std::size_t n = v.numel();
  Tensor out = Tensor::zeros({batch, v.dim(0), v.dim(1)});
  auto vs = v.data(), os = out.data();
  for (std::size_t i = 0; i < batch; ++i) std::copy_n(vs.data(), n, os.data() + i * n);
  if (tape.needs_record({&v})) {
    tape.record(out, [v, out, batch, n] {
      auto gv = arr(v.grad_buffer());
      auto g = out.grad();
      for (std::size_t i = 0; i < batch; ++i) gv += carr(g.subspan(i * n, n));
    });
  }
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), w = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  Tensor out = Tensor::zeros({ids.size(), w});
  auto ts = table.data(), os = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(ts.data() + static_cast<std::size_t>(ids[i]) * w, w, os.data() + i * w);
  }
  if (tape.needs_record({&table})) {
    std::vector<int> rows(ids.begin(), ids.end());
    tape.record(out, [table, out, rows = std::move(rows), w] {
      auto g = out.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < w; ++j) gt[static_cast<std::size_t>(rows[i]) * w + j] += g[i * w + j];
      }
    });
  }
  return out;
}

Tensor patchify(Tape& tape, const Tensor& images, std::size_t patch) {
  require_rank(images, 4, "patchify");
  const std::size_t batch = images.dim(0), ch = images.dim(1), hgt = images.dim(2), wid = images.dim(3);
  if (patch == 0 || hgt % patch != 0 || wid % patch != 0) {
    throw ShapeError("patchify: image " + shape_str(images.shape()) + " not divisible by patch " +
                     std::to_string(patch));
  }
  const std::size_t gh = hgt / patch, gw = wid / patch, feat = ch * patch * patch;
  Tensor out = Tensor::zeros({batch, gh * gw, feat});
  auto src = images.data(), dst = out.data();
  auto for_each = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t py = 0; py < gh; ++py)
        for (std::size_t px = 0; px < gw; ++px)
          for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t dy = 0; dy < patch; ++dy) {
              const std::size_t o = ((b * gh * gw + py * gw + px) * feat) + (c * patch + dy) * patch;
              const std::size_t i = ((b * ch + c) * hgt + py * patch + dy) * wid + px * patch;
              fn(o, i);
            }
  };
  for_each([&](std::size_t o, std::size_t i) { std::copy_n(src.data() + i, patch, dst.data() + o); });
  if (tape.needs_record({&images})) {
    tape.record(out, [images, out, for_each, patch] {
      auto g = out.grad();
      auto gi = images.grad_buffer();
      for_each([&](std::size_t o, std::size_t i) {
        for (std::size_t d = 0; d < patch; ++d) gi[i + d] += g[o + d];
      });
    });
  }
  return out;
}

}  // namespace naptune::ops
