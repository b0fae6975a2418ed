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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drawering/adam.hpp"
#include "drawering/common.hpp"
#include "drawering/drawers.hpp"
#include "drawering/losses.hpp"
#include "drawering/nn.hpp"
#include "drawering/rng.hpp"

namespace drawering {

enum class mix_mode { exact, cached };

inline mix_mode mix_mode_from_string(const std::string& s) {
  if (s == "exact") return mix_mode::exact;
  if (s == "cached") return mix_mode::cached;
  throw config_error("unknown mix mode '" + s + "'");
}

/// How the two core gradients are combined:
/// grad_h = alpha * grad_hg + (1 - alpha) * (a_g / a_s) * grad_hs.
struct mix_config {
  double alpha = 0.5;
  mix_mode mode = mix_mode::exact;
  int refresh_period = 50;    // cached mode: batches between ratio refreshes
  double ratio_floor = 1e-12;  // drop the s term when a_s < floor * a_g
};

/// Shared-core model with the original regression head and the optional
/// drawer-classification head. Absent head_s reproduces the plain model.
struct drawered_model {
  network core_h;
  network head_g;
  std::optional<network> head_s;
  // The s head's terminal Sigmoid is fused into the BCE loss during
  // training; this records that probabilities need an explicit sigmoid
  // when exported.
  bool s_sigmoid_output = false;
};

/// Independent dropout streams per model part, so adding or removing the
/// s head never perturbs draws on the plain path.
struct model_rng {
  rng_stream h;
  rng_stream g;
  rng_stream s;

  static model_rng init(std::uint64_t seed) {
    return model_rng{rng_stream::derived(seed, "dropout/h"), rng_stream::derived(seed, "dropout/g"),
                     rng_stream::derived(seed, "dropout/s")};
  }
};

/// Builds the h/g/s networks from their specs with isolated init streams.
/// In nested mode a terminal Sigmoid on s is stripped (it is fused into
/// bce_loss); in disjoint mode a terminal Sigmoid is rejected because the
/// softmax cross-entropy consumes raw logits.
inline drawered_model make_drawered_model(const std::vector<layer_spec>& h_specs,
                                          const std::vector<layer_spec>& g_specs,
                                          const std::optional<std::vector<layer_spec>>& s_specs,
                                          drawer_mode mode, std::uint64_t seed) {
  drawered_model model;
  model.core_h = build_network(h_specs, seed, "h");
  model.head_g = build_network(g_specs, seed, "g");
  if (model.head_g.input_dim != model.core_h.output_dim) {
    throw config_error("head g input " + std::to_string(model.head_g.input_dim) +
                       " does not match core output " + std::to_string(model.core_h.output_dim));
  }
  if (model.head_g.output_dim != 1) throw config_error("head g must output a single value");
  if (s_specs) {
    std::vector<layer_spec> specs = *s_specs;
    if (specs.empty()) throw config_error("s head spec is empty");
    if (specs.back().kind == layer_kind::sigmoid) {
      if (mode == drawer_mode::disjoint) {
        throw config_error(
            "disjoint mode trains with softmax cross-entropy on logits; drop the terminal Sigmoid");
      }
      specs.pop_back();
      model.s_sigmoid_output = true;
    }
    model.head_s = build_network(specs, seed, "s");
    if (model.head_s->input_dim != model.core_h.output_dim) {
      throw config_error("head s input " + std::to_string(model.head_s->input_dim) +
                         " does not match core output " + std::to_string(model.core_h.output_dim));
    }
  }
  return model;
}

/// Classification targets for one batch under a drawer set.
struct label_batch {
  drawer_mode mode = drawer_mode::disjoint;
  std::vector<int> classes;  // disjoint: drawer index per row
  tensor2 bits;              // nested: B x (m-1) binary matrix
  int width = 0;

  std::size_t size() const {
    return mode == drawer_mode::disjoint ? classes.size() : static_cast<std::size_t>(bits.rows);
  }
};

inline label_batch make_labels(const drawer_set& ds, std::span<const double> y) {
  label_batch lb;
  lb.mode = ds.mode;
  lb.width = ds.label_width();
  if (ds.mode == drawer_mode::disjoint) {
    lb.classes.reserve(y.size());
    for (double v : y) lb.classes.push_back(assign_disjoint(ds, v));
  } else {
    lb.bits = tensor2(static_cast<int>(y.size()), lb.width);
    for (int r = 0; r < lb.bits.rows; ++r) {
      const int idx = assign_disjoint(ds, y[r]);
      for (int c = 0; c < idx && c < lb.width; ++c) lb.bits(r, c) = 1.0;
    }
  }
  return lb;
}

/// Per-step observability: the two losses, the L1 norms a_g and a_s of the
/// shared-core gradients, and the applied ratio.
struct step_stats {
  double loss_g = 0.0;
  double loss_s = 0.0;
  double a_g = 0.0;
  double a_s = 0.0;
  double ratio = 0.0;
  double s_term_l1 = 0.0;  // L1 norm of the applied s contribution
  bool s_dropped = false;
  bool refreshed = false;  // true when the ratio was recomputed this step
};

struct dual_grads {
  grad_bank g, s, hg, hs;
  step_stats stats;
};

namespace detail {

inline loss_value s_head_loss(const tensor2& s_out, const label_batch& labels) {
  if (labels.mode == drawer_mode::disjoint) return softmax_ce_loss(s_out, labels.classes);
  return bce_loss(s_out, labels.bits);
}

}  // namespace detail

/// The drawered backpropagation: one forward through the shared core, two
/// backpropagations. Head gradients stay separate (each head takes part in
/// only one backpropagation); grad_hg and grad_hs are the two candidate
/// core gradients that mix() later combines.
inline dual_grads dual_backward(const drawered_model& model, const tensor2& batch,
                                std::span<const double> y, const label_batch* labels,
                                model_rng& rng) {
  if (static_cast<int>(y.size()) != batch.rows) {
    throw config_error("dual_backward: target length does not match batch rows");
  }
  auto h_fp = forward(model.core_h, batch, run_mode::train, &rng.h);
  auto g_fp = forward(model.head_g, h_fp.output, run_mode::train, &rng.g);
  const auto lg = mse_loss(g_fp.output, y);
  auto g_bp = backward(model.head_g, g_fp.tape, lg.grad);
  auto hg_bp = backward(model.core_h, h_fp.tape, g_bp.input_grad);

  dual_grads out;
  out.g = std::move(g_bp.bank);
  out.hg = std::move(hg_bp.bank);
  out.stats.loss_g = lg.value;
  out.stats.a_g = l1_norm(out.hg);

  if (!model.head_s) {
    out.hs = zero_like(model.core_h.params);
    return out;
  }
  if (!labels) throw config_error("dual_backward: drawer labels required when head s is present");
  if (labels->size() != static_cast<std::size_t>(batch.rows)) {
    throw config_error("dual_backward: label batch size mismatch");
  }
  if (labels->width != model.head_s->output_dim) {
    throw config_error("dual_backward: label width " + std::to_string(labels->width) +
                       " does not match head s output " + std::to_string(model.head_s->output_dim));
  }
  auto s_fp = forward(*model.head_s, h_fp.output, run_mode::train, &rng.s);
  const auto ls = detail::s_head_loss(s_fp.output, *labels);
  auto s_bp = backward(*model.head_s, s_fp.tape, ls.grad);
  auto hs_bp = backward(model.core_h, h_fp.tape, s_bp.input_grad);
  out.s = std::move(s_bp.bank);
  out.hs = std::move(hs_bp.bank);
  out.stats.loss_s = ls.value;
  out.stats.a_s = l1_norm(out.hs);
  out.stats.ratio = out.stats.a_s > 0.0 ? out.stats.a_g / out.stats.a_s : 0.0;
  return out;
}

struct mix_result {
  grad_bank grad;
  double ratio = 0.0;      // the a_g/a_s factor actually applied
  double s_term_l1 = 0.0;  // measured L1 of the applied s term
  bool s_dropped = false;
};

/// Eq.-of-merit combination of the two core gradients. With alpha = 1 the
/// result is grad_hg exactly, reproducing the original learning procedure.
/// When a_s vanishes (below ratio_floor relative to a_g) the s term is
/// dropped for the step and the event is logged.
inline mix_result mix(const grad_bank& grad_hg, const grad_bank& grad_hs, double alpha,
                      std::optional<double> ratio_override = {}, double ratio_floor = 1e-12) {
  require_congruent(grad_hg, grad_hs, "mix");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("mix: alpha must be in (0,1]");

  mix_result res;
  if (alpha == 1.0) {
    res.grad = grad_hg;
    return res;
  }

  bool drop = false;
  double r = 0.0;
  if (ratio_override) {
    r = *ratio_override;
    drop = (r == 0.0);
  } else {
    const double a_g = l1_norm(grad_hg);
    const double a_s = l1_norm(grad_hs);
    if (a_s == 0.0 || a_s < ratio_floor * a_g) {
      drop = true;
      log_debug("mix: a_s below floor (a_g=" + std::to_string(a_g) + ", a_s=" + std::to_string(a_s) +
                "); s term dropped for this step");
    } else {
      r = a_g / a_s;
    }
  }

  if (drop) {
    res.grad = linear_comb(alpha, grad_hg, 0.0, grad_hs);
    res.s_dropped = true;
    return res;
  }

  res.ratio = r;
  const double sc = (1.0 - alpha) * r;
  res.grad = zero_like(grad_hg);
  double sl1 = 0.0;
  for (std::size_t i = 0; i < res.grad.groups.size(); ++i) {
    auto& dst = res.grad.groups[i];
    const auto& a = grad_hg.groups[i];
    const auto& b = grad_hs.groups[i];
    for (std::size_t k = 0; k < dst.weights.data.size(); ++k) {
      const double st = sc * b.weights.data[k];
      dst.weights.data[k] = alpha * a.weights.data[k] + st;
      sl1 += std::abs(st);
    }
    for (std::size_t k = 0; k < dst.bias.size(); ++k) {
      const double st = sc * b.bias[k];
      dst.bias[k] = alpha * a.bias[k] + st;
      sl1 += std::abs(st);
    }
  }
  res.s_term_l1 = sl1;
  return res;
}

/// Mutable per-run training state: optimizer moments, dropout streams, and
/// the cached gradient ratio for fused backpropagation.
struct train_state {
  mix_config mix;
  adam_state adam_h;
  adam_state adam_g;
  std::optional<adam_state> adam_s;
  model_rng rng;
  double cached_ratio = 0.0;
  bool cached_s_dropped = false;
  double last_a_g = 0.0;
  double last_a_s = 0.0;
  std::int64_t step_index = 0;

  static train_state init(const drawered_model& model, mix_config mix_cfg, adam_config opt,
                          std::uint64_t seed) {
    train_state st{mix_cfg,
                   adam_state::init(model.core_h.params, opt),
                   adam_state::init(model.head_g.params, opt),
                   {},
                   model_rng::init(seed)};
    if (model.head_s) st.adam_s = adam_state::init(model.head_s->params, opt);
    if (mix_cfg.refresh_period < 1) throw config_error("mix: refresh period must be >= 1");
    return st;
  }
};

/// One optimization step. Exact mode (and every refresh step of cached
/// mode) runs the two backpropagations and mixes the core gradients; other
/// cached steps run a single fused backpropagation through the core with
/// the upstream head gradients pre-weighted by alpha and the cached ratio.
inline step_stats train_step(drawered_model& model, const tensor2& batch, std::span<const double> y,
                             const label_batch* labels, train_state& st) {
  step_stats stats;

  if (!model.head_s) {
    // Plain model: the single backpropagation, gradients applied as-is.
    auto dg = dual_backward(model, batch, y, nullptr, st.rng);
    adam_step(model.core_h.params, dg.hg, st.adam_h);
    adam_step(model.head_g.params, dg.g, st.adam_g);
    stats = dg.stats;
    st.step_index += 1;
    return stats;
  }

  const bool refresh =
      st.mix.mode == mix_mode::exact || st.step_index % st.mix.refresh_period == 0;

  if (refresh) {
    auto dg = dual_backward(model, batch, y, labels, st.rng);
    auto mixed = mix(dg.hg, dg.hs, st.mix.alpha, {}, st.mix.ratio_floor);
    st.cached_ratio = mixed.ratio;
    st.cached_s_dropped = mixed.s_dropped;
    st.last_a_g = dg.stats.a_g;
    st.last_a_s = dg.stats.a_s;
    adam_step(model.core_h.params, mixed.grad, st.adam_h);
    adam_step(model.head_g.params, dg.g, st.adam_g);
    adam_step(model.head_s->params, dg.s, *st.adam_s);
    stats = dg.stats;
    stats.ratio = mixed.ratio;
    stats.s_term_l1 = mixed.s_term_l1;
    stats.s_dropped = mixed.s_dropped;
    stats.refreshed = true;
  } else {
    if (!labels) throw config_error("train_step: drawer labels required when head s is present");
    auto h_fp = forward(model.core_h, batch, run_mode::train, &st.rng.h);
    auto g_fp = forward(model.head_g, h_fp.output, run_mode::train, &st.rng.g);
    const auto lg = mse_loss(g_fp.output, y);
    auto g_bp = backward(model.head_g, g_fp.tape, lg.grad);
    auto s_fp = forward(*model.head_s, h_fp.output, run_mode::train, &st.rng.s);
    const auto ls = detail::s_head_loss(s_fp.output, *labels);
    auto s_bp = backward(*model.head_s, s_fp.tape, ls.grad);

    const double alpha = st.mix.alpha;
    const double sc = st.cached_s_dropped ? 0.0 : (1.0 - alpha) * st.cached_ratio;
    tensor2 upstream(g_bp.input_grad.rows, g_bp.input_grad.cols);
    for (std::size_t k = 0; k < upstream.data.size(); ++k) {
      upstream.data[k] = alpha * g_bp.input_grad.data[k] + sc * s_bp.input_grad.data[k];
    }
    auto h_bp = backward(model.core_h, h_fp.tape, upstream);
    adam_step(model.core_h.params, h_bp.bank, st.adam_h);
    adam_step(model.head_g.params, g_bp.bank, st.adam_g);
    adam_step(model.head_s->params, s_bp.bank, *st.adam_s);

    stats.loss_g = lg.value;
    stats.loss_s = ls.value;
    stats.a_g = st.last_a_g;
    stats.a_s = st.last_a_s;
    stats.ratio = st.cached_ratio;
    stats.s_dropped = st.cached_s_dropped;
  }
  st.step_index += 1;
  return stats;
}

}  // namespace drawering
