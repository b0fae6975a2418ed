/*
 * Copyright 2026 The Drawering Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "drawering/common.hpp"

namespace drawering {

/// Dense row-major matrix of 64-bit floats.
struct tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  tensor2() = default;
  tensor2(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const tensor2& o) const { return rows == o.rows && cols == o.cols; }
};

inline bool all_finite(const tensor2& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_shape(const tensor2& t, int rows, int cols, const char* what) {
  if (t.rows != rows || t.cols != cols) {
    throw config_error(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", got " + std::to_string(t.rows) + "x" +
                       std::to_string(t.cols));
  }
}

/// a (m x k) * b (k x n) -> (m x n)
inline tensor2 matmul(const tensor2& a, const tensor2& b) {
  if (a.cols != b.rows) throw config_error("matmul: inner dimensions disagree");
  tensor2 out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

/// a (m x k) * b^T (n x k) -> (m x n); both operands traversed row-wise.
inline tensor2 matmul_nt(const tensor2& a, const tensor2& b) {
  if (a.cols != b.cols) throw config_error("matmul_nt: inner dimensions disagree");
  tensor2 out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

/// a^T (k x m) * b (k x n) -> (m x n)
inline tensor2 matmul_tn(const tensor2& a, const tensor2& b) {
  if (a.rows != b.rows) throw config_error("matmul_tn: inner dimensions disagree");
  tensor2 out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      double* orow = out.row(i);
      for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

}  // namespace drawering
