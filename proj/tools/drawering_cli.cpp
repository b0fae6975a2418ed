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

// Experiment CLI: train / compare / analyze-head / make-synth /
// validate-drawers. Exit codes: 0 success, 1 config error, 2 runtime
// abort. Set DRAWERING_LOG=debug|info|warn|error|quiet for verbosity.

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "drawering/drawering.hpp"

namespace {

using namespace drawering;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ordered_json parse_json_file(const std::string& path) {
  try {
    return ordered_json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

void emit_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open output path '" + path + "'");
  out << text;
  if (!out) throw config_error("failed writing '" + path + "'");
}

struct loaded_experiment {
  train_config cfg;
  encoded_dataset data;
};

loaded_experiment load_experiment(const std::string& config_path, const std::string& data_path) {
  loaded_experiment le;
  le.cfg = train_config::from_json(parse_json_file(config_path));
  const auto table = load_csv_file(data_path, le.cfg.schema);
  le.data = prepare_dataset(table, le.cfg);
  log_info("loaded " + std::to_string(table.rows()) + " rows (" +
           std::to_string(le.data.splits.train.size()) + " train / " +
           std::to_string(le.data.splits.val.size()) + " val / " +
           std::to_string(le.data.splits.test.size()) + " test)");
  return le;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out) {
  auto le = load_experiment(config_path, data_path);
  auto run = train_once(le.cfg, le.data);
  ordered_json j = run.result.to_json();
  if (run.drawers) j["drawers"] = to_json(*run.drawers);
  emit_text(out, j.dump(2) + "\n");
  log_info("test_mse=" + std::to_string(run.result.test_at_best) + " after " +
           std::to_string(run.result.iterations) + " iterations");
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& data_path, const std::string& out,
                int seeds, int jobs, const std::string& format) {
  const auto fmt = report_format_from_string(format);
  auto le = load_experiment(config_path, data_path);
  if (!le.cfg.model.s) {
    throw config_error("compare needs a drawered config (model.s present); the plain baseline is derived");
  }
  const auto original = strip_extension(le.cfg);
  const auto rep = compare(original, le.cfg, seeds, le.data, jobs);
  emit_text(out, fmt == report_format::json ? rep.to_json().dump(2) + "\n" : rep.to_csv());
  if (std::isfinite(rep.improvement_min_pct)) {
    log_info("test-min improvement: " + std::to_string(rep.improvement_min_pct) +
             "% | all-mean improvement: " + std::to_string(rep.improvement_all_pct) + "%");
  }
  return 0;
}

int cmd_analyze_head(const std::string& config_path, const std::string& data_path,
                     const std::string& out, const std::string& format, std::size_t max_rows) {
  const auto fmt = report_format_from_string(format);
  auto le = load_experiment(config_path, data_path);
  if (!le.cfg.model.s) throw config_error("analyze-head needs a drawered config (model.s present)");
  auto run = train_once(le.cfg, le.data);
  const auto ha = analyze_head(run.model, *run.drawers, le.data.test.x, le.data.test.y);
  emit_text(out, fmt == report_format::json ? ha.to_json(max_rows).dump(2) + "\n" : ha.to_csv(max_rows));
  log_info("mean adjacent violation: " + std::to_string(ha.mean_adjacent_violation));
  return 0;
}

int cmd_make_synth(const std::string& kind, std::size_t rows, std::uint64_t seed,
                   const std::string& out, const std::string& schema_out) {
  const auto k = synth_kind_from_string(kind);
  const auto table = gen_synthetic(k, rows, seed);
  emit_text(out, table_to_csv(table));
  if (!schema_out.empty()) emit_text(schema_out, synthetic_schema(k).to_json().dump(2) + "\n");
  log_info("wrote " + std::to_string(rows) + " rows of " + kind + " data");
  return 0;
}

int cmd_validate_drawers(const std::string& config_path, const std::string& data_path,
                         const std::string& out) {
  auto le = load_experiment(config_path, data_path);
  if (!le.cfg.drawers) throw config_error("validate-drawers needs a drawer config");
  const auto& dc = *le.cfg.drawers;
  const auto ds = dc.kind == drawer_kind::regular
                      ? build_regular(le.data.train.y, dc.n, dc.mode)
                      : build_uneven(le.data.train.y, dc.n, dc.mode);
  const auto rep = validate_occupancy(ds, le.data.train.y, dc.min_occupancy);
  ordered_json j{{"drawers", to_json(ds)},
                 {"occupancy",
                  ordered_json{{"min_count", rep.min_count},
                               {"counts", rep.counts},
                               {"flagged", rep.flagged},
                               {"pass", rep.pass}}}};
  emit_text(out, j.dump(2) + "\n");
  if (!rep.pass) {
    if (dc.strict_occupancy) throw config_error("drawer occupancy check failed in strict mode");
    log_warn("drawer occupancy below the configured minimum; see report");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drawering: regression training with a drawer-classification extension"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, format = "json";
  std::string synth_kind_name = "heavy-tail", schema_out;
  int seeds = 10, jobs = 1;
  std::size_t rows = 10000, max_rows = 200;
  std::uint64_t seed = 1;

  auto* train_cmd = app.add_subcommand("train", "run one seeded training with early stopping");
  train_cmd->add_option("--config", config_path, "experiment JSON config")->required();
  train_cmd->add_option("--data", data_path, "CSV dataset")->required();
  train_cmd->add_option("--out", out_path, "result JSON path (default: stdout)");

  auto* compare_cmd =
      app.add_subcommand("compare", "paired original-vs-extended runs with table statistics");
  compare_cmd->add_option("--config", config_path, "drawered experiment JSON config")->required();
  compare_cmd->add_option("--data", data_path, "CSV dataset")->required();
  compare_cmd->add_option("--out", out_path, "report path (default: stdout)");
  compare_cmd->add_option("--seeds", seeds, "runs per variant (default 10)");
  compare_cmd->add_option("--jobs", jobs, "parallel workers (default 1)");
  compare_cmd->add_option("--format", format, "json|csv (default json)");

  auto* analyze_cmd =
      app.add_subcommand("analyze-head", "train once and tabulate s-head outputs on the test set");
  analyze_cmd->add_option("--config", config_path, "drawered experiment JSON config")->required();
  analyze_cmd->add_option("--data", data_path, "CSV dataset")->required();
  analyze_cmd->add_option("--out", out_path, "table path (default: stdout)");
  analyze_cmd->add_option("--format", format, "json|csv (default json)");
  analyze_cmd->add_option("--rows", max_rows, "max rows to emit, 0 = all (default 200)");

  auto* synth_cmd = app.add_subcommand("make-synth", "write a deterministic synthetic dataset");
  synth_cmd->add_option("--kind", synth_kind_name, "heavy-tail|heteroscedastic");
  synth_cmd->add_option("--rows", rows, "row count (default 10000)");
  synth_cmd->add_option("--seed", seed, "generator seed (default 1)");
  synth_cmd->add_option("--out", out_path, "CSV path (default: stdout)");
  synth_cmd->add_option("--schema-out", schema_out, "also write the matching schema JSON");

  auto* validate_cmd =
      app.add_subcommand("validate-drawers", "fit drawers on the train split and report occupancy");
  validate_cmd->add_option("--config", config_path, "experiment JSON config")->required();
  validate_cmd->add_option("--data", data_path, "CSV dataset")->required();
  validate_cmd->add_option("--out", out_path, "report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // bad usage is a config error
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, data_path, out_path);
    if (compare_cmd->parsed()) {
      if (seeds < 1) throw config_error("--seeds must be >= 1");
      if (jobs < 1) throw config_error("--jobs must be >= 1");
      return cmd_compare(config_path, data_path, out_path, seeds, jobs, format);
    }
    if (analyze_cmd->parsed()) {
      return cmd_analyze_head(config_path, data_path, out_path, format,
                              max_rows == 0 ? SIZE_MAX : max_rows);
    }
    if (synth_cmd->parsed()) return cmd_make_synth(synth_kind_name, rows, seed, out_path, schema_out);
    if (validate_cmd->parsed()) return cmd_validate_drawers(config_path, data_path, out_path);
  } catch (const config_error& e) {
    log_error(e.what());
    return 1;
  } catch (const train_abort& e) {
    log_error(std::string("training aborted: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(std::string("unexpected failure: ") + e.what());
    return 2;
  }
  return 0;
}
