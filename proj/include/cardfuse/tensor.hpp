// Copyright 2026 The Cardfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CARDFUSE_TENSOR_HPP_
#define CARDFUSE_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cardfuse/error.hpp"

namespace cardfuse {

template <class T>
using Vector = std::vector<T>;

// Dense row-major matrix. Storage is a single contiguous buffer so that a
// parameter tensor can be viewed as a flat span by the optimizer and the
// checkpoint writer.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorKind::kShape,
                  "matrix data length " + std::to_string(data_.size()) +
                      " does not match " + ShapeString(rows_, cols_));
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void Fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <class U>
  Matrix<U> Cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Dot product accumulated in double regardless of storage type.
template <class T>
double Dot(std::span<const T> a, std::span<const T> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <class T>
double SquaredDistance(std::span<const T> a, std::span<const T> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <class T>
double L2Norm(std::span<const T> a) {
  return std::sqrt(Dot(a, a));
}

template <class T>
bool AllFinite(std::span<const T> a) {
  return std::all_of(a.begin(), a.end(),
                     [](T v) { return std::isfinite(v); });
}

// y = W x + b
template <class T>
Vector<T> LinearForward(const Matrix<T>& w, std::span<const T> b,
                        std::span<const T> x) {
  if (w.cols() != x.size() || b.size() != w.rows()) {
    throw Error(ErrorKind::kShape,
                "linear layer W" + ShapeString(w.rows(), w.cols()) + " b" +
                    ShapeString(b.size()) + " applied to x" +
                    ShapeString(x.size()));
  }
  Vector<T> out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    out[i] = static_cast<T>(Dot(w.row(i), x) + static_cast<double>(b[i]));
  }
  return out;
}

// Accumulates dW += dy x^T and db += dy; returns dx = W^T dy.
template <class T>
Vector<T> LinearBackward(const Matrix<T>& w, std::span<const T> x,
                         std::span<const T> dy, Matrix<T>& dw,
                         std::span<T> db) {
  if (w.cols() != x.size() || w.rows() != dy.size() ||
      dw.rows() != w.rows() || dw.cols() != w.cols() ||
      db.size() != w.rows()) {
    throw Error(ErrorKind::kShape,
                "linear backward W" + ShapeString(w.rows(), w.cols()) +
                    " with x" + ShapeString(x.size()) + " dy" +
                    ShapeString(dy.size()));
  }
  std::vector<double> dx(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T g = dy[i];
    if (g == T(0)) continue;
    auto dw_row = dw.row(i);
    const auto w_row = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) {
      dw_row[j] += g * x[j];
      dx[j] += static_cast<double>(w_row[j]) * static_cast<double>(g);
    }
    db[i] += g;
  }
  return Vector<T>(dx.begin(), dx.end());
}

template <class T>
Vector<T> Relu(std::span<const T> x) {
  Vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(T(0), x[i]);
  return out;
}

// Gradient of ReLU given the pre-activation; the derivative at 0 is taken as 0.
template <class T>
Vector<T> ReluBackward(std::span<const T> pre, std::span<const T> dy) {
  Vector<T> out(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    out[i] = pre[i] > T(0) ? dy[i] : T(0);
  }
  return out;
}

// Logistic function. Branches on sign so exp() only sees non-positive
// arguments, and clamps to the open interval (0, 1) where the exact value
// rounds to an endpoint in T.
template <class T>
T SigmoidScalar(T x) {
  T s;
  if (x >= T(0)) {
    s = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T(1) + e);
  }
  constexpr T kLo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T(1), T(0));
  return std::clamp(s, kLo, hi);
}

template <class T>
Vector<T> Sigmoid(std::span<const T> x) {
  Vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = SigmoidScalar(x[i]);
  return out;
}

template <class T>
Vector<T> Hadamard(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kShape, "hadamard product of " +
                                       ShapeString(a.size()) + " and " +
                                       ShapeString(b.size()));
  }
  Vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
inline double GlorotBound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace cardfuse

#endif  // CARDFUSE_TENSOR_HPP_
