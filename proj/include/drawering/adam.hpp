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
#include <cstdint>

#include "drawering/common.hpp"
#include "drawering/nn.hpp"

namespace drawering {

struct adam_config {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moments for one parameter group.
struct adam_state {
  adam_config cfg;
  grad_bank m, v;
  std::int64_t step = 0;

  static adam_state init(const param_bank& params, adam_config cfg = {}) {
    adam_state st;
    st.cfg = cfg;
    st.m = zero_like(params);
    st.v = zero_like(params);
    return st;
  }
};

namespace detail {

inline void adam_update_span(double* p, const double* g, double* m, double* v, std::size_t n,
                             const adam_config& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace detail

/// One bias-corrected Adam step over a whole parameter bank.
inline void adam_step(param_bank& params, const grad_bank& grads, adam_state& st) {
  require_congruent(params, grads, "adam_step");
  require_congruent(params, st.m, "adam_step state");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.groups.size(); ++i) {
    auto& p = params.groups[i];
    const auto& g = grads.groups[i];
    auto& m = st.m.groups[i];
    auto& v = st.v.groups[i];
    detail::adam_update_span(p.weights.data.data(), g.weights.data.data(), m.weights.data.data(),
                             v.weights.data.data(), p.weights.data.size(), st.cfg, bc1, bc2);
    detail::adam_update_span(p.bias.data(), g.bias.data(), m.bias.data(), v.bias.data(),
                             p.bias.size(), st.cfg, bc1, bc2);
  }
}

}  // namespace drawering
