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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "drawering/common.hpp"
#include "drawering/data.hpp"
#include "drawering/drawers.hpp"
#include "drawering/nn.hpp"
#include "drawering/trainer.hpp"

namespace drawering {

struct split_config {
  std::string by = "fraction";  // "time" | "fraction"
  double val_fraction = 0.15;   // fraction mode
  double test_fraction = 0.15;
  double cutoff1 = 0.0;  // time mode: train < cutoff1 <= val < cutoff2 <= test
  double cutoff2 = 0.0;
};

struct drawers_config {
  drawer_kind kind = drawer_kind::regular;
  int n = 10;  // regular: drawer count; uneven: 2n drawers
  drawer_mode mode = drawer_mode::disjoint;
  int min_occupancy = 500;
  bool strict_occupancy = false;  // occupancy failures abort instead of warn
};

struct model_config {
  std::vector<layer_spec> h;
  std::vector<layer_spec> g;
  std::optional<std::vector<layer_spec>> s;
};

/// Everything one experiment needs, parsed from a single JSON file. Layer
/// lists may use Linear(auto,...) for the dataset-derived input width and
/// Linear(...,auto) on the s head for the drawer-derived label width.
struct train_config {
  schema_config schema;
  split_config split;
  model_config model;
  std::optional<drawers_config> drawers;
  mix_config mix;
  adam_config optimizer;
  int batch_size = 128;
  int patience = 50;
  int min_iterations = 100;
  int max_iterations = 1000;
  // 0 trains one full epoch per iteration; a positive value switches the
  // iteration unit to that many mini-batches.
  int batches_per_iteration = 0;
  std::uint64_t seed = 1;
  std::string step_log;  // NDJSON per-step trace path; empty disables

  void validate() const {
    schema.validate();
    if (split.by == "time") {
      if (!(split.cutoff1 < split.cutoff2)) {
        throw config_error("time split needs cutoff1 < cutoff2");
      }
    } else if (split.by != "fraction") {
      throw config_error("split.by must be 'time' or 'fraction'");
    }
    if (model.h.empty() || model.g.empty()) throw config_error("model needs h and g layer lists");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (patience < 1) throw config_error("patience must be >= 1");
    if (min_iterations < 1) throw config_error("min_iterations must be >= 1");
    if (max_iterations < min_iterations) {
      throw config_error("max_iterations must be >= min_iterations");
    }
    if (batches_per_iteration < 0) throw config_error("batches_per_iteration must be >= 0");
    if (model.s.has_value() != drawers.has_value()) {
      throw config_error("head s and drawer config must be given together");
    }
    if (model.s) {
      if (!(mix.alpha > 0.0 && mix.alpha <= 1.0)) throw config_error("mix.alpha must be in (0,1]");
      if (mix.refresh_period < 1) throw config_error("mix.ratio_refresh_period must be >= 1");
      if (drawers->n < 1) throw config_error("drawers.n must be >= 1");
      if (drawers->min_occupancy < 0) throw config_error("drawers.min_occupancy must be >= 0");
    }
  }

  static train_config from_json(const ordered_json& j);
  ordered_json to_json() const;
};

namespace detail {

inline std::vector<std::string> layer_strings(const std::vector<layer_spec>& specs) {
  std::vector<std::string> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(to_string(s));
  return out;
}

}  // namespace detail

inline train_config train_config::from_json(const ordered_json& j) {
  train_config cfg;
  try {
    cfg.schema = schema_config::from_json(j.at("schema"));
    if (j.contains("split")) {
      const auto& sp = j["split"];
      cfg.split.by = sp.value("by", cfg.split.by);
      cfg.split.val_fraction = sp.value("val_fraction", cfg.split.val_fraction);
      cfg.split.test_fraction = sp.value("test_fraction", cfg.split.test_fraction);
      // Cutoffs accept plain numbers or ISO dates.
      const auto cutoff = [&](const char* key, double fallback) {
        if (!sp.contains(key)) return fallback;
        if (sp[key].is_string()) {
          const auto v = detail::parse_timestamp(sp[key].get<std::string>());
          if (!v) throw config_error(std::string("split.") + key + ": unparseable timestamp");
          return *v;
        }
        return sp[key].get<double>();
      };
      cfg.split.cutoff1 = cutoff("cutoff1", cfg.split.cutoff1);
      cfg.split.cutoff2 = cutoff("cutoff2", cfg.split.cutoff2);
    }
    const auto& m = j.at("model");
    cfg.model.h = parse_layer_list(m.at("h").get<std::vector<std::string>>());
    cfg.model.g = parse_layer_list(m.at("g").get<std::vector<std::string>>());
    if (m.contains("s")) cfg.model.s = parse_layer_list(m["s"].get<std::vector<std::string>>());
    if (j.contains("drawers")) {
      const auto& d = j["drawers"];
      drawers_config dc;
      dc.kind = drawer_kind_from_string(d.value("kind", std::string("regular")));
      dc.n = d.value("n", dc.n);
      dc.mode = drawer_mode_from_string(d.value("mode", std::string("disjoint")));
      dc.min_occupancy = d.value("min_occupancy", dc.min_occupancy);
      dc.strict_occupancy = d.value("strict_occupancy", dc.strict_occupancy);
      cfg.drawers = dc;
    }
    if (j.contains("mix")) {
      const auto& x = j["mix"];
      cfg.mix.alpha = x.value("alpha", cfg.mix.alpha);
      cfg.mix.mode = mix_mode_from_string(x.value("mode", std::string("exact")));
      cfg.mix.refresh_period = x.value("ratio_refresh_period", cfg.mix.refresh_period);
      cfg.mix.ratio_floor = x.value("ratio_floor", cfg.mix.ratio_floor);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      cfg.optimizer.lr = o.value("lr", cfg.optimizer.lr);
      cfg.optimizer.beta1 = o.value("beta1", cfg.optimizer.beta1);
      cfg.optimizer.beta2 = o.value("beta2", cfg.optimizer.beta2);
      cfg.optimizer.eps = o.value("eps", cfg.optimizer.eps);
    }
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.min_iterations = j.value("min_iterations", cfg.min_iterations);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.batches_per_iteration = j.value("batches_per_iteration", cfg.batches_per_iteration);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.step_log = j.value("step_log", cfg.step_log);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: bad JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ordered_json train_config::to_json() const {
  ordered_json j;
  j["schema"] = schema.to_json();
  j["split"] = {{"by", split.by},
                {"val_fraction", split.val_fraction},
                {"test_fraction", split.test_fraction},
                {"cutoff1", split.cutoff1},
                {"cutoff2", split.cutoff2}};
  j["model"] = ordered_json::object();
  j["model"]["h"] = detail::layer_strings(model.h);
  j["model"]["g"] = detail::layer_strings(model.g);
  if (model.s) j["model"]["s"] = detail::layer_strings(*model.s);
  if (drawers) {
    j["drawers"] = {{"kind", to_string(drawers->kind)},
                    {"n", drawers->n},
                    {"mode", to_string(drawers->mode)},
                    {"min_occupancy", drawers->min_occupancy},
                    {"strict_occupancy", drawers->strict_occupancy}};
  }
  j["mix"] = {{"alpha", mix.alpha},
              {"mode", mix.mode == mix_mode::exact ? "exact" : "cached"},
              {"ratio_refresh_period", mix.refresh_period},
              {"ratio_floor", mix.ratio_floor}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["batch_size"] = batch_size;
  j["patience"] = patience;
  j["min_iterations"] = min_iterations;
  j["max_iterations"] = max_iterations;
  j["batches_per_iteration"] = batches_per_iteration;
  j["seed"] = seed;
  j["step_log"] = step_log;
  return j;
}

/// Removes everything drawering-specific, yielding the plain-network
/// baseline that compare() pits the extended config against.
inline train_config strip_extension(train_config cfg) {
  cfg.model.s.reset();
  cfg.drawers.reset();
  cfg.mix = mix_config{};
  return cfg;
}

/// Immutable encoded dataset shared (read-only) by all runs of a
/// comparison: split indices, fitted encoders, encoded matrices.
struct encoded_dataset {
  dataset_encoder encoder;
  split_indices splits;
  encoded_split train, val, test;
};

inline encoded_dataset prepare_dataset(const typed_table& table, const train_config& cfg) {
  encoded_dataset ds;
  ds.splits = cfg.split.by == "time"
                  ? split_by_time(table, cfg.split.cutoff1, cfg.split.cutoff2)
                  : split_by_fraction(table, cfg.split.val_fraction, cfg.split.test_fraction, cfg.seed);
  ds.encoder = fit_encoders(table, ds.splits.train, cfg.schema.transform);
  ds.train = encode_rows(table, ds.splits.train, ds.encoder);
  ds.val = encode_rows(table, ds.splits.val, ds.encoder);
  ds.test = encode_rows(table, ds.splits.test, ds.encoder);
  return ds;
}

namespace detail {

/// Fills in Linear(auto,...) on the first and Linear(...,auto) on the last
/// parameterized layer of a spec list.
inline std::vector<layer_spec> resolve_auto(std::vector<layer_spec> specs, int in_dim, int out_dim) {
  for (auto& s : specs) {
    if (s.kind == layer_kind::linear) {
      if (s.in == -1) s.in = in_dim;
      break;
    }
  }
  for (auto it = specs.rbegin(); it != specs.rend(); ++it) {
    if (it->kind == layer_kind::linear) {
      if (it->out == -1) {
        if (out_dim < 1) throw config_error("Linear(...,auto) output width cannot be resolved here");
        it->out = out_dim;
      }
      break;
    }
  }
  return specs;
}

inline int specs_out_dim(const std::vector<layer_spec>& specs) {
  for (auto it = specs.rbegin(); it != specs.rend(); ++it) {
    if (it->kind == layer_kind::linear) return it->out;
  }
  throw config_error("layer list has no Linear layer");
}

}  // namespace detail

/// Fits drawers (when configured) on the encoded training targets and
/// builds the model with dataset-derived embeddings and resolved widths.
struct prepared_model {
  drawered_model model;
  std::optional<drawer_set> drawers;
};

inline std::optional<drawer_set> fit_drawers(const drawers_config& dc, std::span<const double> train_y) {
  drawer_set ds = dc.kind == drawer_kind::regular ? build_regular(train_y, dc.n, dc.mode)
                                                  : build_uneven(train_y, dc.n, dc.mode);
  const auto rep = validate_occupancy(ds, train_y, dc.min_occupancy);
  if (!rep.pass) {
    std::string msg = "drawer occupancy below " + std::to_string(dc.min_occupancy) + " in drawers:";
    for (int i : rep.flagged) {
      msg += " #" + std::to_string(i) + "(" + std::to_string(rep.counts[static_cast<std::size_t>(i)]) + ")";
    }
    if (dc.strict_occupancy) throw config_error(msg);
    log_warn(msg);
  }
  return ds;
}

inline prepared_model build_model(const train_config& cfg, const encoded_dataset& ds) {
  prepared_model pm;
  if (cfg.model.s) pm.drawers = fit_drawers(*cfg.drawers, ds.train.y);

  std::vector<layer_spec> h_specs = ds.encoder.embedding_specs();
  const auto h_tail = detail::resolve_auto(cfg.model.h, ds.encoder.embedded_width(), -1);
  h_specs.insert(h_specs.end(), h_tail.begin(), h_tail.end());
  const int h_out = detail::specs_out_dim(h_specs);
  const auto g_specs = detail::resolve_auto(cfg.model.g, h_out, 1);

  std::optional<std::vector<layer_spec>> s_specs;
  drawer_mode mode = drawer_mode::disjoint;
  if (cfg.model.s) {
    mode = pm.drawers->mode;
    s_specs = detail::resolve_auto(*cfg.model.s, h_out, pm.drawers->label_width());
  }
  pm.model = make_drawered_model(h_specs, g_specs, s_specs, mode, cfg.seed);
  if (pm.model.core_h.input_dim != ds.encoder.encoded_width()) {
    throw config_error("core input width " + std::to_string(pm.model.core_h.input_dim) +
                       " does not match encoded data width " +
                       std::to_string(ds.encoder.encoded_width()));
  }
  if (cfg.model.s && pm.model.head_s->output_dim != pm.drawers->label_width()) {
    throw config_error("head s output " + std::to_string(pm.model.head_s->output_dim) +
                       " does not match drawer label width " +
                       std::to_string(pm.drawers->label_width()));
  }
  return pm;
}

/// The paper's stopping rule: halt once `patience` iterations pass without
/// a validation improvement, but never before min_iterations; a hard cap
/// bounds runaway configs.
struct early_stopper {
  int patience = 50;
  int min_iterations = 100;
  int max_iterations = 1000;
  double best = std::numeric_limits<double>::infinity();
  int best_iteration = 0;
  int since_best = 0;

  /// Feed the score of 1-based `iteration`; true means stop after it.
  bool observe(int iteration, double score) {
    if (score < best) {
      best = score;
      best_iteration = iteration;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (iteration >= max_iterations) return true;
    return since_best >= patience && iteration >= min_iterations;
  }
};

/// Mean squared error of g(h(x)) against y, eval mode (the s head never
/// participates in scoring).
inline double eval_mse(const drawered_model& model, const tensor2& x, std::span<const double> y) {
  const tensor2 hid = predict(model.core_h, x);
  const tensor2 out = predict(model.head_g, hid);
  double acc = 0.0;
  for (int r = 0; r < out.rows; ++r) {
    const double d = out(r, 0) - y[static_cast<std::size_t>(r)];
    acc += d * d;
  }
  return acc / static_cast<double>(out.rows);
}

struct run_result {
  std::uint64_t seed = 0;
  double best_val = 0.0;
  double test_at_best = 0.0;
  double train_at_best = 0.0;
  int iterations = 0;
  int best_iteration = 0;
  std::vector<double> val_trace;
  // Forward-flop cost of the single test-set scoring pass, split into the
  // evaluation path (h and g) and the s head (must stay zero).
  std::uint64_t eval_flops = 0;
  std::uint64_t eval_flops_s = 0;

  ordered_json to_json() const {
    return ordered_json{{"seed", seed},
                        {"best_val_mse", best_val},
                        {"test_mse", test_at_best},
                        {"train_mse", train_at_best},
                        {"iterations", iterations},
                        {"best_iteration", best_iteration},
                        {"eval_flops", eval_flops},
                        {"eval_flops_s", eval_flops_s},
                        {"val_trace", val_trace}};
  }
};

struct trained_run {
  run_result result;
  drawered_model model;  // parameters restored to the validation-best state
  std::optional<drawer_set> drawers;
};

namespace detail {

inline void write_step_line(std::ofstream& out, std::int64_t step, int iteration,
                            const step_stats& st) {
  ordered_json j{{"step", step},         {"iteration", iteration},
                 {"loss_g", st.loss_g},  {"loss_s", st.loss_s},
                 {"a_g", st.a_g},        {"a_s", st.a_s},
                 {"ratio", st.ratio},    {"s_term_l1", st.s_term_l1},
                 {"s_dropped", st.s_dropped}, {"refreshed", st.refreshed}};
  out << j.dump() << '\n';
}

}  // namespace detail

/// One seeded training run with early stopping. The test set is scored
/// exactly once, after restoring the validation-best parameters.
inline trained_run train_once(const train_config& cfg, const encoded_dataset& ds) {
  cfg.validate();
  auto pm = build_model(cfg, ds);
  auto& model = pm.model;
  auto st = train_state::init(model, cfg.mix, cfg.optimizer, cfg.seed);
  auto shuffle_rng = rng_stream::derived(cfg.seed, "shuffle");

  const int n_train = ds.train.x.rows;
  const int width = ds.train.x.cols;
  const int batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int iteration_batches =
      cfg.batches_per_iteration > 0 ? cfg.batches_per_iteration : batches_per_epoch;

  // Drawer labels are fixed per run; assign each training row once.
  std::vector<int> row_drawer;
  if (pm.drawers) {
    row_drawer.reserve(static_cast<std::size_t>(n_train));
    for (double y : ds.train.y) row_drawer.push_back(assign_disjoint(*pm.drawers, y));
  }

  std::ofstream slog;
  if (!cfg.step_log.empty()) {
    slog.open(cfg.step_log, std::ios::binary);
    if (!slog) throw config_error("cannot open step log '" + cfg.step_log + "'");
  }

  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  int cursor = n_train;  // force a shuffle before the first batch

  tensor2 bx;
  std::vector<double> by;
  std::vector<int> brows;
  label_batch lb;
  lb.mode = pm.drawers ? pm.drawers->mode : drawer_mode::disjoint;
  lb.width = pm.drawers ? pm.drawers->label_width() : 0;

  early_stopper stop{cfg.patience, cfg.min_iterations, cfg.max_iterations};
  run_result res;
  res.seed = cfg.seed;
  param_bank best_h = model.core_h.params;
  param_bank best_g = model.head_g.params;
  std::optional<param_bank> best_s;
  if (model.head_s) best_s = model.head_s->params;

  for (int iteration = 1;; ++iteration) {
    for (int b = 0; b < iteration_batches; ++b) {
      if (cursor >= n_train) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        cursor = 0;
      }
      const int take = std::min(cfg.batch_size, n_train - cursor);
      brows.assign(order.begin() + cursor, order.begin() + cursor + take);
      cursor += take;

      bx = tensor2(take, width);
      by.resize(static_cast<std::size_t>(take));
      for (int r = 0; r < take; ++r) {
        const int src = brows[static_cast<std::size_t>(r)];
        std::copy_n(ds.train.x.row(src), width, bx.row(r));
        by[static_cast<std::size_t>(r)] = ds.train.y[static_cast<std::size_t>(src)];
      }
      if (pm.drawers) {
        if (lb.mode == drawer_mode::disjoint) {
          lb.classes.resize(static_cast<std::size_t>(take));
          for (int r = 0; r < take; ++r) {
            lb.classes[static_cast<std::size_t>(r)] = row_drawer[static_cast<std::size_t>(brows[static_cast<std::size_t>(r)])];
          }
        } else {
          lb.bits = tensor2(take, lb.width);
          for (int r = 0; r < take; ++r) {
            const int idx = row_drawer[static_cast<std::size_t>(brows[static_cast<std::size_t>(r)])];
            for (int c = 0; c < idx && c < lb.width; ++c) lb.bits(r, c) = 1.0;
          }
        }
      }
      const auto stats = train_step(model, bx, by, pm.drawers ? &lb : nullptr, st);
      if (slog.is_open()) detail::write_step_line(slog, st.step_index - 1, iteration, stats);
    }

    const double val = eval_mse(model, ds.val.x, ds.val.y);
    res.val_trace.push_back(val);
    if (!std::isfinite(val)) throw train_abort("validation score became non-finite");
    const bool improved = val < stop.best;
    const bool done = stop.observe(iteration, val);
    if (improved) {
      best_h = model.core_h.params;
      best_g = model.head_g.params;
      if (model.head_s) best_s = model.head_s->params;
    }
    log_debug("iteration " + std::to_string(iteration) + ": val_mse=" + std::to_string(val));
    if (done) {
      res.iterations = iteration;
      break;
    }
  }

  // Restore the validation-best parameters; every reported score comes
  // from this single snapshot.
  model.core_h.params = std::move(best_h);
  model.head_g.params = std::move(best_g);
  if (model.head_s && best_s) model.head_s->params = std::move(*best_s);
  res.best_val = stop.best;
  res.best_iteration = stop.best_iteration;
  res.train_at_best = eval_mse(model, ds.train.x, ds.train.y);

  const std::uint64_t f0 = model.core_h.forward_flops + model.head_g.forward_flops;
  const std::uint64_t s0 = model.head_s ? model.head_s->forward_flops : 0;
  res.test_at_best = eval_mse(model, ds.test.x, ds.test.y);
  res.eval_flops = model.core_h.forward_flops + model.head_g.forward_flops - f0;
  res.eval_flops_s = (model.head_s ? model.head_s->forward_flops : 0) - s0;

  return trained_run{std::move(res), std::move(model), std::move(pm.drawers)};
}

// ---------------------------------------------------------------------------
// Multi-seed comparison (Table I / Table II analogues)
// ---------------------------------------------------------------------------

struct run_entry {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double val_mse = 0.0;
  double test_mse = 0.0;
  double train_mse = 0.0;
  int iterations = 0;
  int best_iteration = 0;
};

struct variant_stats {
  int count = 0;  // runs the statistics were computed over
  double min = std::numeric_limits<double>::quiet_NaN();
  double top5_mean = std::numeric_limits<double>::quiet_NaN();
  double top5_std = std::numeric_limits<double>::quiet_NaN();
  double all_mean = std::numeric_limits<double>::quiet_NaN();
  double all_std = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation: the paper reports spread over the full
// set of performed runs, not a sample estimate.
inline double pstdev_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace detail

inline variant_stats compute_stats(std::vector<double> scores) {
  variant_stats vs;
  vs.count = static_cast<int>(scores.size());
  if (scores.empty()) return vs;
  std::sort(scores.begin(), scores.end());
  vs.min = scores.front();
  const std::size_t k = std::min<std::size_t>(5, scores.size());
  const std::span<const double> top(scores.data(), k);
  vs.top5_mean = detail::mean_of(top);
  vs.top5_std = detail::pstdev_of(top);
  vs.all_mean = detail::mean_of(scores);
  vs.all_std = detail::pstdev_of(scores);
  return vs;
}

struct variant_summary {
  std::string name;  // "Original" / "Extended"
  std::vector<run_entry> runs;
  variant_stats test;
  variant_stats train;
};

struct comparison_report {
  std::uint64_t base_seed = 0;
  int n_runs = 0;
  bool insufficient_runs = false;  // fewer than 5 usable runs in a variant
  variant_summary original;
  variant_summary extended;
  // Relative test improvement of Extended over Original, in percent.
  double improvement_min_pct = std::numeric_limits<double>::quiet_NaN();
  double improvement_top5_pct = std::numeric_limits<double>::quiet_NaN();
  double improvement_all_pct = std::numeric_limits<double>::quiet_NaN();

  ordered_json to_json() const;
  static comparison_report from_json(const ordered_json& j);
  std::string to_csv() const;
};

namespace detail {

inline ordered_json stats_to_json(const variant_stats& s) {
  const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  return ordered_json{{"count", s.count},         {"min", num(s.min)},
                      {"top5_mean", num(s.top5_mean)}, {"top5_std", num(s.top5_std)},
                      {"all_mean", num(s.all_mean)},   {"all_std", num(s.all_std)}};
}

inline variant_stats stats_from_json(const ordered_json& j) {
  const auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
  };
  variant_stats s;
  s.count = j.at("count").get<int>();
  s.min = num("min");
  s.top5_mean = num("top5_mean");
  s.top5_std = num("top5_std");
  s.all_mean = num("all_mean");
  s.all_std = num("all_std");
  return s;
}

inline ordered_json variant_to_json(const variant_summary& v) {
  ordered_json runs = ordered_json::array();
  for (const auto& r : v.runs) {
    runs.push_back(ordered_json{{"seed", r.seed},
                                {"ok", r.ok},
                                {"error", r.error},
                                {"val_mse", r.val_mse},
                                {"test_mse", r.test_mse},
                                {"train_mse", r.train_mse},
                                {"iterations", r.iterations},
                                {"best_iteration", r.best_iteration}});
  }
  return ordered_json{{"model", v.name},
                      {"test", stats_to_json(v.test)},
                      {"train", stats_to_json(v.train)},
                      {"runs", std::move(runs)}};
}

inline variant_summary variant_from_json(const ordered_json& j) {
  variant_summary v;
  v.name = j.at("model").get<std::string>();
  v.test = stats_from_json(j.at("test"));
  v.train = stats_from_json(j.at("train"));
  for (const auto& r : j.at("runs")) {
    run_entry e;
    e.seed = r.at("seed").get<std::uint64_t>();
    e.ok = r.at("ok").get<bool>();
    e.error = r.at("error").get<std::string>();
    e.val_mse = r.at("val_mse").get<double>();
    e.test_mse = r.at("test_mse").get<double>();
    e.train_mse = r.at("train_mse").get<double>();
    e.iterations = r.at("iterations").get<int>();
    e.best_iteration = r.at("best_iteration").get<int>();
    v.runs.push_back(std::move(e));
  }
  return v;
}

inline std::string csv_num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline ordered_json comparison_report::to_json() const {
  const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  return ordered_json{{"base_seed", base_seed},
                      {"n_runs", n_runs},
                      {"insufficient_runs", insufficient_runs},
                      {"variants", ordered_json::array({detail::variant_to_json(original),
                                                        detail::variant_to_json(extended)})},
                      {"test_improvement_pct",
                       ordered_json{{"min", num(improvement_min_pct)},
                                    {"top5_mean", num(improvement_top5_pct)},
                                    {"all_mean", num(improvement_all_pct)}}}};
}

inline comparison_report comparison_report::from_json(const ordered_json& j) {
  comparison_report rep;
  try {
    rep.base_seed = j.at("base_seed").get<std::uint64_t>();
    rep.n_runs = j.at("n_runs").get<int>();
    rep.insufficient_runs = j.at("insufficient_runs").get<bool>();
    rep.original = detail::variant_from_json(j.at("variants").at(0));
    rep.extended = detail::variant_from_json(j.at("variants").at(1));
    const auto& imp = j.at("test_improvement_pct");
    const auto num = [](const ordered_json& v) {
      return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
    };
    rep.improvement_min_pct = num(imp.at("min"));
    rep.improvement_top5_pct = num(imp.at("top5_mean"));
    rep.improvement_all_pct = num(imp.at("all_mean"));
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("report: bad JSON: ") + e.what());
  }
  return rep;
}

/// Table-layout CSV of the test scores (one row per variant).
inline std::string comparison_report::to_csv() const {
  std::string out = "Model,Min,Top5 mean,Top5 std,All mean,All std\n";
  for (const auto* v : {&original, &extended}) {
    if (v->runs.empty()) continue;
    out += v->name + ',' + detail::csv_num(v->test.min) + ',' + detail::csv_num(v->test.top5_mean) +
           ',' + detail::csv_num(v->test.top5_std) + ',' + detail::csv_num(v->test.all_mean) + ',' +
           detail::csv_num(v->test.all_std) + '\n';
  }
  return out;
}

namespace detail {

/// The two configs of a comparison must agree on everything except the
/// extension itself, or the A/B is meaningless.
inline void require_comparable(const train_config& a, const train_config& b) {
  if (a.model.s || !b.model.s) {
    throw config_error("compare: first config must be plain, second must have head s");
  }
  auto scrub = [](const train_config& c) {
    auto copy = strip_extension(c);
    copy.step_log.clear();
    return copy.to_json().dump();
  };
  if (scrub(a) != scrub(b)) {
    throw config_error("compare: configs differ beyond head s / drawers / mix settings");
  }
}

inline run_entry entry_from(const run_result& r) {
  run_entry e;
  e.seed = r.seed;
  e.ok = true;
  e.val_mse = r.best_val;
  e.test_mse = r.test_at_best;
  e.train_mse = r.train_at_best;
  e.iterations = r.iterations;
  e.best_iteration = r.best_iteration;
  return e;
}

}  // namespace detail

/// Runs n_runs paired, seeded trainings per variant (seed_i = base + i for
/// both, so comparisons are paired) and aggregates Table-style statistics.
/// A run that aborts becomes an error entry rather than killing the report.
inline comparison_report compare(const train_config& cfg_original, const train_config& cfg_drawered,
                                 int n_runs, const encoded_dataset& ds, int jobs = 1) {
  if (n_runs < 1) throw config_error("compare: n_runs must be >= 1");
  detail::require_comparable(cfg_original, cfg_drawered);

  struct task {
    const train_config* base;
    std::uint64_t seed;
    run_entry* slot;
  };
  comparison_report rep;
  rep.base_seed = cfg_drawered.seed;
  rep.n_runs = n_runs;
  rep.original.name = "Original";
  rep.extended.name = "Extended";
  rep.original.runs.resize(static_cast<std::size_t>(n_runs));
  rep.extended.runs.resize(static_cast<std::size_t>(n_runs));

  std::vector<task> tasks;
  tasks.reserve(static_cast<std::size_t>(2 * n_runs));
  for (int i = 0; i < n_runs; ++i) {
    const std::uint64_t seed = rep.base_seed + static_cast<std::uint64_t>(i);
    tasks.push_back({&cfg_original, seed, &rep.original.runs[static_cast<std::size_t>(i)]});
    tasks.push_back({&cfg_drawered, seed, &rep.extended.runs[static_cast<std::size_t>(i)]});
  }

  const auto run_task = [&](const task& t) {
    train_config cfg = *t.base;
    cfg.seed = t.seed;
    cfg.step_log.clear();  // per-run traces are a single-run facility
    try {
      *t.slot = detail::entry_from(train_once(cfg, ds).result);
    } catch (const train_abort& e) {
      t.slot->seed = t.seed;
      t.slot->error = e.what();
      log_error("run with seed " + std::to_string(t.seed) + " aborted: " + e.what());
    }
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (const auto& t : tasks) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) run_task(tasks[i]);
      });
    }
    for (auto& th : pool) th.join();
  }

  const auto collect = [](const variant_summary& v, bool train) {
    std::vector<double> scores;
    for (const auto& r : v.runs) {
      if (r.ok) scores.push_back(train ? r.train_mse : r.test_mse);
    }
    return scores;
  };
  rep.original.test = compute_stats(collect(rep.original, false));
  rep.original.train = compute_stats(collect(rep.original, true));
  rep.extended.test = compute_stats(collect(rep.extended, false));
  rep.extended.train = compute_stats(collect(rep.extended, true));
  rep.insufficient_runs = rep.original.test.count < 5 || rep.extended.test.count < 5;
  if (rep.insufficient_runs) {
    log_warn("compare: fewer than 5 usable runs per variant; Top5 statistics cover all available runs");
  }

  const auto pct = [](double orig, double ext) {
    return std::isfinite(orig) && std::isfinite(ext) && orig != 0.0
               ? (orig - ext) / orig * 100.0
               : std::numeric_limits<double>::quiet_NaN();
  };
  rep.improvement_min_pct = pct(rep.original.test.min, rep.extended.test.min);
  rep.improvement_top5_pct = pct(rep.original.test.top5_mean, rep.extended.test.top5_mean);
  rep.improvement_all_pct = pct(rep.original.test.all_mean, rep.extended.test.all_mean);
  return rep;
}

enum class report_format { json, csv };

inline report_format report_format_from_string(const std::string& s) {
  if (s == "json") return report_format::json;
  if (s == "csv") return report_format::csv;
  throw config_error("unknown report format '" + s + "' (json, csv)");
}

inline void emit_report(const comparison_report& rep, const std::string& path, report_format fmt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open report path '" + path + "'");
  if (fmt == report_format::json) {
    out << rep.to_json().dump(2) << '\n';
  } else {
    out << rep.to_csv();
  }
  if (!out) throw config_error("failed writing report to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Head-output analysis (the monotonicity view on s(h(x)))
// ---------------------------------------------------------------------------

struct head_analysis {
  drawer_mode mode = drawer_mode::nested;
  int width = 0;
  std::vector<int> true_drawer;  // ground-truth disjoint index per row
  tensor2 outputs;               // rows x width, probabilities
  // mean over rows and adjacent pairs of max(0, s_{j+1} - s_j); nested
  // outputs should be descending, so 0 is perfect.
  double mean_adjacent_violation = 0.0;

  ordered_json to_json(std::size_t max_rows = SIZE_MAX) const {
    ordered_json rows = ordered_json::array();
    const auto n = std::min<std::size_t>(max_rows, true_drawer.size());
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> vals(outputs.data.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(outputs.cols)),
                               outputs.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * static_cast<std::size_t>(outputs.cols)));
      rows.push_back(ordered_json{{"row", r}, {"true_drawer", true_drawer[r]}, {"outputs", vals}});
    }
    return ordered_json{{"mode", to_string(mode)},
                        {"width", width},
                        {"mean_adjacent_violation", mean_adjacent_violation},
                        {"rows", std::move(rows)}};
  }

  std::string to_csv(std::size_t max_rows = SIZE_MAX) const {
    std::string out = "row,true_drawer";
    for (int c = 0; c < width; ++c) out += ",s" + std::to_string(c + 1);
    out += '\n';
    const auto n = std::min<std::size_t>(max_rows, true_drawer.size());
    for (std::size_t r = 0; r < n; ++r) {
      out += std::to_string(r) + ',' + std::to_string(true_drawer[r]);
      for (int c = 0; c < width; ++c) out += ',' + detail::csv_num(outputs(static_cast<int>(r), c));
      out += '\n';
    }
    return out;
  }
};

/// Scores the s head on the given rows: sigmoid probabilities per nested
/// drawer boundary (softmax over drawers in disjoint mode) plus the
/// ground-truth disjoint index, and the adjacent monotonicity violation.
inline head_analysis analyze_head(const drawered_model& model, const drawer_set& ds,
                                  const tensor2& x, std::span<const double> y) {
  if (!model.head_s) throw config_error("analyze_head: model was trained without head s");
  head_analysis ha;
  ha.mode = ds.mode;
  ha.width = model.head_s->output_dim;
  if (ha.width != ds.label_width()) {
    throw config_error("analyze_head: head width does not match the drawer set");
  }

  const tensor2 hid = predict(model.core_h, x);
  tensor2 logits = predict(*model.head_s, hid);
  if (ds.mode == drawer_mode::nested) {
    // The terminal sigmoid is fused into the training loss; apply it
    // explicitly to report probabilities.
    for (auto& v : logits.data) {
      v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
  } else {
    for (int r = 0; r < logits.rows; ++r) {
      double* row = logits.row(r);
      const double mx = *std::max_element(row, row + logits.cols);
      double sum = 0.0;
      for (int c = 0; c < logits.cols; ++c) sum += row[c] = std::exp(row[c] - mx);
      for (int c = 0; c < logits.cols; ++c) row[c] /= sum;
    }
  }

  ha.true_drawer.reserve(y.size());
  for (double v : y) ha.true_drawer.push_back(assign_disjoint(ds, v));

  double viol = 0.0;
  std::size_t pairs = 0;
  for (int r = 0; r < logits.rows; ++r) {
    const double* row = logits.row(r);
    for (int c = 0; c + 1 < logits.cols; ++c) {
      viol += std::max(0.0, row[c + 1] - row[c]);
      ++pairs;
    }
  }
  ha.mean_adjacent_violation = pairs > 0 ? viol / static_cast<double>(pairs) : 0.0;
  ha.outputs = std::move(logits);
  return ha;
}

}  // namespace drawering
