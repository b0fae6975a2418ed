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
#include <span>
#include <vector>

#include "drawering/common.hpp"
#include "drawering/tensor.hpp"

namespace drawering {

struct loss_value {
  double value = 0.0;
  tensor2 grad;  // d value / d input, same shape as the loss input
};

/// Mean squared error over the batch: mean (pred - y)^2.
inline loss_value mse_loss(const tensor2& pred, std::span<const double> target) {
  if (pred.cols != 1 || pred.rows != static_cast<int>(target.size())) {
    throw config_error("mse_loss: pred must be Bx1 matching target length");
  }
  const int B = pred.rows;
  loss_value out;
  out.grad = tensor2(B, 1);
  for (int r = 0; r < B; ++r) {
    const double d = pred(r, 0) - target[r];
    out.value += d * d;
    out.grad(r, 0) = 2.0 * d / B;
  }
  out.value /= B;
  if (!std::isfinite(out.value)) throw train_abort("mse_loss produced a non-finite value");
  return out;
}

/// Multiclass cross-entropy on logits: mean -log softmax(z)[class].
inline loss_value softmax_ce_loss(const tensor2& logits, std::span<const int> class_idx) {
  if (logits.rows != static_cast<int>(class_idx.size())) {
    throw config_error("softmax_ce_loss: batch size mismatch");
  }
  const int B = logits.rows;
  const int m = logits.cols;
  loss_value out;
  out.grad = tensor2(B, m);
  for (int r = 0; r < B; ++r) {
    const int c = class_idx[r];
    if (c < 0 || c >= m) {
      throw config_error("softmax_ce_loss: class index " + std::to_string(c) + " outside [0," +
                         std::to_string(m) + ")");
    }
    const double* z = logits.row(r);
    double zmax = z[0];
    for (int j = 1; j < m; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(sum);
    out.value += lse - z[c];
    double* grow = out.grad.row(r);
    for (int j = 0; j < m; ++j) grow[j] = std::exp(z[j] - lse) / B;
    grow[c] -= 1.0 / B;
  }
  out.value /= B;
  if (!std::isfinite(out.value)) throw train_abort("softmax_ce_loss produced a non-finite value");
  return out;
}

/// Per-component binary cross-entropy on logits, sigmoid fused for
/// stability: mean over B*k of -[t ln s(z) + (1-t) ln(1-s(z))].
inline loss_value bce_loss(const tensor2& logits, const tensor2& labels) {
  if (!logits.same_shape(labels)) throw config_error("bce_loss: logits/labels shape mismatch");
  const int B = logits.rows;
  const int k = logits.cols;
  const double n = static_cast<double>(B) * k;
  loss_value out;
  out.grad = tensor2(B, k);
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    const double z = logits.data[i];
    const double t = labels.data[i];
    if (t != 0.0 && t != 1.0) throw config_error("bce_loss: labels must be 0 or 1");
    out.value += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out.grad.data[i] = (s - t) / n;
  }
  out.value /= n;
  if (!std::isfinite(out.value)) throw train_abort("bce_loss produced a non-finite value");
  return out;
}

}  // namespace drawering
