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
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drawering/drawering.hpp"
#include "support/gradcheck.hpp"

using namespace drawering;

namespace {

constexpr const char* kTinyConfig = R"json({
  "schema": {
    "columns": [
      {"name": "c1", "role": "categorical"},
      {"name": "c2", "role": "categorical"},
      {"name": "x1", "role": "continuous"},
      {"name": "x2", "role": "continuous"},
      {"name": "x3", "role": "continuous"},
      {"name": "x4", "role": "continuous"},
      {"name": "day", "role": "timestamp"},
      {"name": "y", "role": "target"}
    ],
    "target_transform": "log"
  },
  "split": {"by": "time", "cutoff1": 280, "cutoff2": 340},
  "model": {
    "h": ["Linear(auto,12)", "ReLU"],
    "g": ["Linear(12,1)"],
    "s": ["Linear(12,24)", "ReLU", "Dropout(0.5)", "Linear(24,auto)", "Sigmoid"]
  },
  "drawers": {"kind": "regular", "n": 4, "mode": "nested", "min_occupancy": 0},
  "mix": {"alpha": 0.5, "mode": "exact", "ratio_refresh_period": 50},
  "optimizer": {"lr": 0.003},
  "batch_size": 64,
  "patience": 2,
  "min_iterations": 2,
  "max_iterations": 6,
  "seed": 11
})json";

train_config tiny_config() { return train_config::from_json(ordered_json::parse(kTinyConfig)); }

typed_table tiny_table() { return gen_synthetic(synth_kind::heavy_tail, 400, 5); }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("early stopping fires patience iterations after the last improvement", "[harness]") {
  // Improvements through iteration 120, patience 50, min 100: training
  // stops after iteration 170 with the best at 120.
  early_stopper stop{50, 100, 1000};
  int stopped_at = 0;
  for (int it = 1; it <= 1000 && stopped_at == 0; ++it) {
    const double score = it <= 120 ? 1000.0 - it : 5000.0;
    if (stop.observe(it, score)) stopped_at = it;
  }
  REQUIRE(stopped_at == 170);
  REQUIRE(stop.best_iteration == 120);
  REQUIRE(stop.best == 880.0);
}

TEST_CASE("early stopping respects the minimum and maximum iteration gates", "[harness]") {
  // Patience runs out long before min_iterations: the stop waits for it.
  early_stopper gated{20, 100, 1000};
  int stopped_at = 0;
  for (int it = 1; it <= 1000 && stopped_at == 0; ++it) {
    const double score = it <= 10 ? 100.0 - it : 500.0;
    if (gated.observe(it, score)) stopped_at = it;
  }
  REQUIRE(stopped_at == 100);
  REQUIRE(gated.best_iteration == 10);

  // A run that keeps improving stops only at the hard cap.
  early_stopper capped{50, 1, 30};
  stopped_at = 0;
  for (int it = 1; it <= 1000 && stopped_at == 0; ++it) {
    if (capped.observe(it, 1000.0 - it)) stopped_at = it;
  }
  REQUIRE(stopped_at == 30);
}

TEST_CASE("train config round-trips through JSON", "[harness]") {
  const auto cfg = tiny_config();
  const auto dumped = cfg.to_json().dump(2);
  const auto back = train_config::from_json(ordered_json::parse(dumped));
  REQUIRE(back.to_json().dump(2) == dumped);
  REQUIRE(back.split.by == "time");
  REQUIRE(back.split.cutoff1 == 280.0);
  REQUIRE(back.drawers->mode == drawer_mode::nested);
  REQUIRE(back.mix.alpha == 0.5);
  REQUIRE(back.optimizer.lr == 0.003);
  REQUIRE(back.model.s->size() == 5);
}

TEST_CASE("train config accepts ISO dates as cutoffs", "[harness]") {
  auto j = ordered_json::parse(kTinyConfig);
  j["split"]["cutoff1"] = "2015-01-01";
  j["split"]["cutoff2"] = "2015-05-01";
  const auto cfg = train_config::from_json(j);
  REQUIRE(cfg.split.cutoff1 == 16436.0);  // days since 1970-01-01
  REQUIRE(cfg.split.cutoff2 == 16556.0);
  j["split"]["cutoff1"] = "not-a-date";
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);
}

TEST_CASE("train config validation rejects inconsistent settings", "[harness]") {
  auto j = ordered_json::parse(kTinyConfig);
  j["batch_size"] = 0;
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j["model"].erase("s");  // drawers without a head
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j.erase("drawers");  // head without drawers
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j["mix"]["alpha"] = 0.0;
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j["split"]["by"] = "alphabetical";
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j["max_iterations"] = 1;  // below min_iterations
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);

  j = ordered_json::parse(kTinyConfig);
  j.erase("schema");
  REQUIRE_THROWS_AS(train_config::from_json(j), config_error);
}

TEST_CASE("strip_extension removes the head, drawers, and mix settings", "[harness]") {
  const auto cfg = tiny_config();
  const auto plain = strip_extension(cfg);
  REQUIRE_FALSE(plain.model.s.has_value());
  REQUIRE_FALSE(plain.drawers.has_value());
  REQUIRE(plain.mix.alpha == mix_config{}.alpha);
  REQUIRE(plain.batch_size == cfg.batch_size);
  REQUIRE(plain.seed == cfg.seed);
  REQUIRE_NOTHROW(plain.validate());
}

TEST_CASE("resolve_auto fills dataset- and drawer-derived widths", "[harness]") {
  const auto resolved = detail::resolve_auto(
      parse_layer_list({"Linear(auto,8)", "ReLU", "Linear(8,auto)"}), 5, 3);
  REQUIRE(resolved[0].in == 5);
  REQUIRE(resolved[2].out == 3);
  // Explicit widths are left alone.
  const auto fixed = detail::resolve_auto(parse_layer_list({"Linear(7,9)"}), 5, 3);
  REQUIRE(fixed[0].in == 7);
  REQUIRE(fixed[0].out == 9);
  REQUIRE_THROWS_AS(detail::resolve_auto(parse_layer_list({"Linear(5,auto)"}), 5, -1),
                    config_error);
  REQUIRE(detail::specs_out_dim(parse_layer_list({"Linear(3,4)", "ReLU"})) == 4);
  REQUIRE_THROWS_AS(detail::specs_out_dim(parse_layer_list({"ReLU"})), config_error);
}

TEST_CASE("compute_stats matches brute-force aggregation", "[harness]") {
  const auto vs = compute_stats({5.0, 3.0, 8.0, 1.0, 9.0, 2.0, 7.0});
  REQUIRE(vs.count == 7);
  REQUIRE(vs.min == 1.0);
  REQUIRE(vs.top5_mean == Catch::Approx(18.0 / 5.0).epsilon(1e-12));  // {1,2,3,5,7}
  REQUIRE(vs.top5_std == Catch::Approx(std::sqrt(4.64)).epsilon(1e-12));
  REQUIRE(vs.all_mean == Catch::Approx(5.0).epsilon(1e-12));  // 35/7
  REQUIRE(vs.all_std == Catch::Approx(std::sqrt(58.0 / 7.0)).epsilon(1e-12));

  const auto small = compute_stats({4.0, 2.0, 6.0});
  REQUIRE(small.top5_mean == Catch::Approx(4.0));  // fewer than 5: use all
  const auto one = compute_stats({3.5});
  REQUIRE(one.min == 3.5);
  REQUIRE(one.all_std == 0.0);
  const auto none = compute_stats({});
  REQUIRE(none.count == 0);
  REQUIRE(std::isnan(none.min));
}

TEST_CASE("prepare_dataset wires splits and encoders together", "[harness]") {
  const auto table = tiny_table();
  const auto cfg = tiny_config();
  const auto ds = prepare_dataset(table, cfg);
  REQUIRE(ds.splits.train.size() == 280);
  REQUIRE(ds.splits.val.size() == 60);
  REQUIRE(ds.splits.test.size() == 60);
  REQUIRE(ds.train.x.rows == 280);
  REQUIRE(ds.train.x.cols == ds.encoder.encoded_width());
  REQUIRE(ds.encoder.cats.size() == 2);
  REQUIRE(ds.encoder.conts.size() == 4);

  auto frac = cfg;
  frac.split.by = "fraction";
  frac.split.val_fraction = 0.25;
  frac.split.test_fraction = 0.25;
  const auto ds2 = prepare_dataset(table, frac);
  REQUIRE(ds2.splits.train.size() == 200);
  REQUIRE(ds2.splits.val.size() == 100);
}

TEST_CASE("build_model prepends embeddings and resolves auto widths", "[harness]") {
  const auto table = tiny_table();
  const auto cfg = tiny_config();
  const auto ds = prepare_dataset(table, cfg);
  const auto pm = build_model(cfg, ds);
  REQUIRE(pm.model.core_h.embed_count == 2);
  REQUIRE(pm.model.core_h.input_dim == ds.encoder.encoded_width());
  REQUIRE(pm.model.core_h.output_dim == 12);
  REQUIRE(pm.model.head_g.output_dim == 1);
  REQUIRE(pm.drawers.has_value());
  REQUIRE(pm.drawers->drawer_count() == 4);
  REQUIRE(pm.model.head_s->output_dim == pm.drawers->label_width());
  REQUIRE(pm.model.s_sigmoid_output);  // nested mode strips the Sigmoid

  auto bad = cfg;
  bad.model.h = parse_layer_list({"Linear(7,12)", "ReLU"});  // wrong input width
  REQUIRE_THROWS_AS(build_model(bad, ds), config_error);
}

TEST_CASE("fit_drawers flags or aborts on low occupancy", "[harness]") {
  auto rng = rng_stream::derived(71, "occ");
  std::vector<double> y(200);
  for (auto& v : y) v = rng.uniform(0.0, 1.0);
  drawers_config dc;
  dc.kind = drawer_kind::regular;
  dc.n = 4;
  dc.min_occupancy = 500;  // 200/4 = 50 per drawer: all flagged
  dc.strict_occupancy = false;
  REQUIRE_NOTHROW(fit_drawers(dc, y));  // warns but proceeds
  dc.strict_occupancy = true;
  REQUIRE_THROWS_WITH(fit_drawers(dc, y), Catch::Matchers::ContainsSubstring("occupancy"));
  dc.min_occupancy = 0;
  REQUIRE(fit_drawers(dc, y)->drawer_count() == 4);
}

TEST_CASE("train_once is deterministic for a fixed config", "[harness]") {
  const auto table = tiny_table();
  const auto cfg = tiny_config();
  const auto ds = prepare_dataset(table, cfg);
  const auto a = train_once(cfg, ds);
  const auto b = train_once(cfg, ds);
  REQUIRE(a.result.to_json().dump() == b.result.to_json().dump());
  REQUIRE(a.result.best_val == b.result.best_val);
  REQUIRE(a.result.val_trace.size() == static_cast<std::size_t>(a.result.iterations));
  REQUIRE(a.result.best_val == *std::min_element(a.result.val_trace.begin(), a.result.val_trace.end()));
  REQUIRE(a.result.best_iteration >= 1);
  REQUIRE(a.result.iterations <= cfg.max_iterations);
  REQUIRE(dtest::max_abs_diff(a.model.core_h.params, b.model.core_h.params) == 0.0);
}

TEST_CASE("the s head never participates in evaluation", "[harness]") {
  const auto table = tiny_table();
  const auto cfg = tiny_config();
  const auto ds = prepare_dataset(table, cfg);
  const auto extended = train_once(cfg, ds);
  REQUIRE(extended.result.eval_flops > 0);
  REQUIRE(extended.result.eval_flops_s == 0);

  // The plain model's test-evaluation cost is identical: drawering leaves
  // the inference path untouched.
  const auto plain = train_once(strip_extension(cfg), ds);
  REQUIRE(plain.result.eval_flops == extended.result.eval_flops);
  REQUIRE(plain.result.eval_flops_s == 0);
}

TEST_CASE("alpha=1 training reproduces the plain run exactly", "[harness]") {
  const auto table = tiny_table();
  auto cfg = tiny_config();
  cfg.mix.alpha = 1.0;
  const auto ds = prepare_dataset(table, cfg);
  const auto extended = train_once(cfg, ds);
  const auto plain = train_once(strip_extension(cfg), ds);
  REQUIRE(extended.result.best_val == plain.result.best_val);
  REQUIRE(extended.result.test_at_best == plain.result.test_at_best);
  REQUIRE(extended.result.train_at_best == plain.result.train_at_best);
  REQUIRE(extended.result.iterations == plain.result.iterations);
  REQUIRE(dtest::max_abs_diff(extended.model.core_h.params, plain.model.core_h.params) == 0.0);
  REQUIRE(dtest::max_abs_diff(extended.model.head_g.params, plain.model.head_g.params) == 0.0);
}

TEST_CASE("the step log is valid NDJSON with one record per step", "[harness]") {
  const auto table = tiny_table();
  auto cfg = tiny_config();
  cfg.step_log = temp_path("drawering_steps.ndjson");
  const auto ds = prepare_dataset(table, cfg);
  const auto run = train_once(cfg, ds);

  std::ifstream in(cfg.step_log);
  REQUIRE(in.good());
  std::string line;
  std::int64_t expected_step = 0;
  int max_iteration = 0;
  while (std::getline(in, line)) {
    const auto j = ordered_json::parse(line);
    REQUIRE(j.at("step").get<std::int64_t>() == expected_step);
    ++expected_step;
    max_iteration = std::max(max_iteration, j.at("iteration").get<int>());
    REQUIRE(j.contains("loss_g"));
    REQUIRE(j.contains("loss_s"));
    REQUIRE(j.contains("a_g"));
    REQUIRE(j.contains("a_s"));
    REQUIRE(j.contains("ratio"));
    REQUIRE(j.contains("s_term_l1"));
    REQUIRE(j.at("refreshed").is_boolean());
  }
  // 280 train rows, batch 64: 5 batches per iteration (epoch).
  REQUIRE(expected_step == 5 * run.result.iterations);
  REQUIRE(max_iteration == run.result.iterations);
  std::remove(cfg.step_log.c_str());
}

TEST_CASE("batches_per_iteration switches the iteration unit", "[harness]") {
  const auto table = tiny_table();
  auto cfg = tiny_config();
  cfg.batches_per_iteration = 2;
  cfg.step_log = temp_path("drawering_steps_b2.ndjson");
  const auto ds = prepare_dataset(table, cfg);
  const auto run = train_once(cfg, ds);
  std::ifstream in(cfg.step_log);
  std::string line;
  std::int64_t steps = 0;
  while (std::getline(in, line)) ++steps;
  REQUIRE(steps == 2 * run.result.iterations);
  std::remove(cfg.step_log.c_str());
}

TEST_CASE("compare pairs seeds and aggregates both variants", "[harness]") {
  const auto table = tiny_table();
  auto drawered = tiny_config();
  drawered.max_iterations = 3;
  drawered.min_iterations = 1;
  drawered.patience = 1;
  const auto original = strip_extension(drawered);
  const auto ds = prepare_dataset(table, drawered);

  const auto rep = compare(original, drawered, 2, ds, /*jobs=*/2);
  REQUIRE(rep.n_runs == 2);
  REQUIRE(rep.base_seed == drawered.seed);
  REQUIRE(rep.insufficient_runs);  // fewer than 5 runs
  REQUIRE(rep.original.name == "Original");
  REQUIRE(rep.extended.name == "Extended");
  for (int i = 0; i < 2; ++i) {
    REQUIRE(rep.original.runs[i].seed == drawered.seed + static_cast<std::uint64_t>(i));
    REQUIRE(rep.extended.runs[i].seed == rep.original.runs[i].seed);  // paired
    REQUIRE(rep.original.runs[i].ok);
    REQUIRE(rep.extended.runs[i].ok);
  }
  REQUIRE(rep.original.test.count == 2);
  REQUIRE(rep.extended.test.count == 2);
  REQUIRE(std::isfinite(rep.improvement_all_pct));

  // Serial execution gives the identical report (threading is scheduling
  // only, never semantics).
  const auto serial = compare(original, drawered, 2, ds, /*jobs=*/1);
  REQUIRE(serial.to_json().dump() == rep.to_json().dump());
}

TEST_CASE("compare validates its config pair", "[harness]") {
  const auto drawered = tiny_config();
  const auto original = strip_extension(drawered);
  const auto ds = prepare_dataset(tiny_table(), drawered);
  REQUIRE_THROWS_AS(compare(drawered, drawered, 1, ds), config_error);  // first must be plain
  REQUIRE_THROWS_AS(compare(original, original, 1, ds), config_error);  // second needs a head
  auto skewed = drawered;
  skewed.optimizer.lr = 0.999;  // differs beyond the extension
  REQUIRE_THROWS_AS(compare(original, skewed, 1, ds), config_error);
  REQUIRE_THROWS_AS(compare(original, drawered, 0, ds), config_error);
}

TEST_CASE("a diverging run becomes an error entry, not a crash", "[harness]") {
  const auto table = tiny_table();
  auto drawered = tiny_config();
  drawered.max_iterations = 3;
  drawered.min_iterations = 1;
  drawered.optimizer.lr = 1e160;  // parameters overflow on the second batch
  const auto original = strip_extension(drawered);
  const auto ds = prepare_dataset(table, drawered);
  const auto rep = compare(original, drawered, 1, ds);
  REQUIRE_FALSE(rep.original.runs[0].ok);
  REQUIRE_FALSE(rep.extended.runs[0].ok);
  REQUIRE_FALSE(rep.original.runs[0].error.empty());
  REQUIRE(rep.original.test.count == 0);
  REQUIRE(std::isnan(rep.improvement_all_pct));
  REQUIRE(rep.to_json().at("test_improvement_pct").at("all_mean").is_null());
}

TEST_CASE("comparison reports round-trip through JSON and render stable CSV", "[harness]") {
  const auto table = tiny_table();
  auto drawered = tiny_config();
  drawered.max_iterations = 2;
  drawered.min_iterations = 1;
  drawered.patience = 1;
  const auto ds = prepare_dataset(table, drawered);
  const auto rep = compare(strip_extension(drawered), drawered, 2, ds);

  const auto dumped = rep.to_json().dump(2);
  const auto back = comparison_report::from_json(ordered_json::parse(dumped));
  REQUIRE(back.to_json().dump(2) == dumped);

  const auto csv = rep.to_csv();
  REQUIRE(csv.rfind("Model,Min,Top5 mean,Top5 std,All mean,All std\n", 0) == 0);
  REQUIRE(csv.find("\nOriginal,") != std::string::npos);
  REQUIRE(csv.find("\nExtended,") != std::string::npos);

  // An empty report renders as just the header.
  const comparison_report empty;
  REQUIRE(empty.to_csv() == "Model,Min,Top5 mean,Top5 std,All mean,All std\n");

  REQUIRE_THROWS_AS(comparison_report::from_json(ordered_json::object()), config_error);
}

TEST_CASE("emit_report writes identical bytes across invocations", "[harness]") {
  const auto table = tiny_table();
  auto drawered = tiny_config();
  drawered.max_iterations = 2;
  drawered.min_iterations = 1;
  drawered.patience = 1;
  const auto ds = prepare_dataset(table, drawered);
  const auto rep = compare(strip_extension(drawered), drawered, 1, ds);

  const auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const auto p1 = temp_path("drawering_rep1.json");
  const auto p2 = temp_path("drawering_rep2.json");
  emit_report(rep, p1, report_format::json);
  emit_report(rep, p2, report_format::json);
  REQUIRE(slurp(p1) == slurp(p2));
  REQUIRE_FALSE(slurp(p1).empty());
  const auto pc = temp_path("drawering_rep.csv");
  emit_report(rep, pc, report_format::csv);
  REQUIRE(slurp(pc) == rep.to_csv());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(pc.c_str());

  REQUIRE_THROWS_AS(emit_report(rep, "/nonexistent-dir/rep.json", report_format::json),
                    config_error);
  REQUIRE_THROWS_AS(report_format_from_string("yaml"), config_error);
}

TEST_CASE("analyze_head reports probabilities and monotonicity", "[harness]") {
  const auto table = tiny_table();
  const auto cfg = tiny_config();
  const auto ds = prepare_dataset(table, cfg);
  const auto run = train_once(cfg, ds);
  const auto ha = analyze_head(run.model, *run.drawers, ds.test.x, ds.test.y);
  REQUIRE(ha.mode == drawer_mode::nested);
  REQUIRE(ha.width == run.drawers->label_width());
  REQUIRE(ha.outputs.rows == ds.test.x.rows);
  for (double v : ha.outputs.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  for (int idx : ha.true_drawer) {
    REQUIRE(idx >= 0);
    REQUIRE(idx < run.drawers->drawer_count());
  }
  REQUIRE(ha.mean_adjacent_violation >= 0.0);

  const auto j = ha.to_json(3);
  REQUIRE(j.at("rows").size() == 3);
  REQUIRE(j.at("mode") == "nested");
  const auto csv = ha.to_csv(2);
  REQUIRE(csv.rfind("row,true_drawer,s1,s2,s3\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("analyze_head covers disjoint softmax and rejects mismatches", "[harness]") {
  const auto table = tiny_table();
  auto cfg = tiny_config();
  cfg.drawers->mode = drawer_mode::disjoint;
  cfg.model.s = parse_layer_list({"Linear(12,24)", "ReLU", "Linear(24,auto)"});
  cfg.max_iterations = 2;
  cfg.min_iterations = 1;
  cfg.patience = 1;
  const auto ds = prepare_dataset(table, cfg);
  const auto run = train_once(cfg, ds);
  const auto ha = analyze_head(run.model, *run.drawers, ds.test.x, ds.test.y);
  REQUIRE(ha.width == 4);
  for (int r = 0; r < ha.outputs.rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < ha.outputs.cols; ++c) sum += ha.outputs(r, c);
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-9));  // softmax rows
  }

  const auto plain = train_once(strip_extension(cfg), ds);
  REQUIRE_THROWS_AS(analyze_head(plain.model, *run.drawers, ds.test.x, ds.test.y), config_error);
  drawer_set wrong = *run.drawers;
  wrong.boundaries.push_back(wrong.boundaries.back() + 1.0);
  REQUIRE_THROWS_AS(analyze_head(run.model, wrong, ds.test.x, ds.test.y), config_error);
}
