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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "drawering/common.hpp"
#include "drawering/nn.hpp"
#include "drawering/rng.hpp"
#include "drawering/tensor.hpp"

namespace drawering {

using ordered_json = nlohmann::ordered_json;

enum class column_role { categorical, continuous, target, timestamp, ignored };

inline std::string to_string(column_role r) {
  switch (r) {
    case column_role::categorical: return "categorical";
    case column_role::continuous: return "continuous";
    case column_role::target: return "target";
    case column_role::timestamp: return "timestamp";
    case column_role::ignored: return "ignored";
  }
  return "?";
}

inline column_role column_role_from_string(const std::string& s) {
  if (s == "categorical") return column_role::categorical;
  if (s == "continuous") return column_role::continuous;
  if (s == "target") return column_role::target;
  if (s == "timestamp") return column_role::timestamp;
  if (s == "ignored") return column_role::ignored;
  throw config_error("unknown column role '" + s + "'");
}

enum class target_transform { none, log };

inline std::string to_string(target_transform t) {
  return t == target_transform::none ? "none" : "log";
}

inline target_transform target_transform_from_string(const std::string& s) {
  if (s == "none") return target_transform::none;
  if (s == "log") return target_transform::log;
  throw config_error("unknown target transform '" + s + "'");
}

struct column_spec {
  std::string name;
  column_role role = column_role::ignored;
};

/// Declares how each CSV column is interpreted. Exactly one target column
/// and at most one timestamp column are allowed.
struct schema_config {
  std::vector<column_spec> columns;
  target_transform transform = target_transform::none;

  std::vector<std::string> names_of(column_role r) const {
    std::vector<std::string> out;
    for (const auto& c : columns) {
      if (c.role == r) out.push_back(c.name);
    }
    return out;
  }

  void validate() const {
    if (columns.empty()) throw config_error("schema has no columns");
    int targets = 0, stamps = 0;
    for (const auto& c : columns) {
      if (c.name.empty()) throw config_error("schema column with empty name");
      targets += c.role == column_role::target;
      stamps += c.role == column_role::timestamp;
    }
    if (targets != 1) throw config_error("schema must declare exactly one target column");
    if (stamps > 1) throw config_error("schema declares more than one timestamp column");
  }

  static schema_config from_json(const ordered_json& j) {
    schema_config sc;
    if (!j.contains("columns") || !j["columns"].is_array()) {
      throw config_error("schema: 'columns' array missing");
    }
    for (const auto& col : j["columns"]) {
      sc.columns.push_back(
          {col.at("name").get<std::string>(), column_role_from_string(col.at("role").get<std::string>())});
    }
    if (j.contains("target_transform")) {
      sc.transform = target_transform_from_string(j["target_transform"].get<std::string>());
    }
    sc.validate();
    return sc;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["columns"] = ordered_json::array();
    for (const auto& c : columns) j["columns"].push_back({{"name", c.name}, {"role", to_string(c.role)}});
    j["target_transform"] = to_string(transform);
    return j;
  }
};

/// Parsed dataset: categorical columns keep raw strings, continuous
/// columns hold doubles with NaN marking missing entries.
struct typed_table {
  std::vector<std::string> cat_names;
  std::vector<std::string> cont_names;
  std::vector<std::vector<std::string>> cat;   // [cat column][row]
  std::vector<std::vector<double>> cont;       // [cont column][row], NaN = missing
  std::vector<double> target;                  // raw target values
  std::vector<double> timestamp;               // empty when the schema has none

  std::size_t rows() const { return target.size(); }
};

namespace detail {

/// Splits one CSV record, honoring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  return v;
}

/// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's
/// days-from-civil algorithm).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Timestamps are either plain numbers or ISO dates (YYYY-MM-DD).
inline std::optional<double> parse_timestamp(const std::string& s) {
  if (auto v = parse_double(s)) return v;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
    const auto y = parse_double(s.substr(0, 4));
    const auto m = parse_double(s.substr(5, 2));
    const auto d = parse_double(s.substr(8, 2));
    if (y && m && d && *m >= 1 && *m <= 12 && *d >= 1 && *d <= 31) {
      return static_cast<double>(days_from_civil(static_cast<int>(*y), static_cast<int>(*m),
                                                 static_cast<int>(*d)));
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses CSV content against a schema. The header must contain every
/// schema column (extra CSV columns are skipped); a target cell that does
/// not parse as a finite number is an error naming the offending row.
inline typed_table load_csv_string(const std::string& content, const schema_config& schema) {
  schema.validate();
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw config_error("csv: empty input");
  const auto header = detail::split_csv_line(line);

  std::unordered_map<std::string, int> pos;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) pos.emplace(header[i], i);

  struct bound {
    int csv_col;
    column_role role;
    int slot;  // index into the table's cat/cont storage
  };
  std::vector<bound> binds;
  typed_table t;
  int ts_col = -1, target_col = -1;
  for (const auto& c : schema.columns) {
    if (c.role == column_role::ignored) continue;
    const auto it = pos.find(c.name);
    if (it == pos.end()) throw config_error("csv: column '" + c.name + "' missing from header");
    switch (c.role) {
      case column_role::categorical:
        binds.push_back({it->second, c.role, static_cast<int>(t.cat_names.size())});
        t.cat_names.push_back(c.name);
        t.cat.emplace_back();
        break;
      case column_role::continuous:
        binds.push_back({it->second, c.role, static_cast<int>(t.cont_names.size())});
        t.cont_names.push_back(c.name);
        t.cont.emplace_back();
        break;
      case column_role::target: target_col = it->second; break;
      case column_role::timestamp: ts_col = it->second; break;
      case column_role::ignored: break;
    }
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    const auto field_at = [&](int col) -> const std::string& {
      static const std::string empty;
      return col < static_cast<int>(fields.size()) ? fields[col] : empty;
    };
    const auto tv = detail::parse_double(field_at(target_col));
    if (!tv || !std::isfinite(*tv)) {
      throw config_error("csv: row " + std::to_string(row) + ": unparseable target '" +
                         field_at(target_col) + "'");
    }
    t.target.push_back(*tv);
    if (ts_col >= 0) {
      const auto sv = detail::parse_timestamp(field_at(ts_col));
      if (!sv) {
        throw config_error("csv: row " + std::to_string(row) + ": unparseable timestamp '" +
                           field_at(ts_col) + "'");
      }
      t.timestamp.push_back(*sv);
    }
    for (const auto& b : binds) {
      const std::string& f = field_at(b.csv_col);
      if (b.role == column_role::categorical) {
        t.cat[b.slot].push_back(f);
      } else {
        const auto v = detail::parse_double(f);
        t.cont[b.slot].push_back(v && std::isfinite(*v) ? *v
                                                        : std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
  if (t.rows() == 0) throw config_error("csv: no data rows");
  return t;
}

inline typed_table load_csv_file(const std::string& path, const schema_config& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("csv: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_string(buf.str(), schema);
}

/// Per-column statistics fitted on the training split only.
struct categorical_encoder {
  std::string name;
  std::vector<std::string> levels;  // sorted; index = position, unknown = levels.size()
  int unknown_index() const { return static_cast<int>(levels.size()); }
  int vocab() const { return static_cast<int>(levels.size()) + 1; }
  int embed_dim() const { return std::min<int>(static_cast<int>(levels.size()), 10); }

  int index_of(const std::string& v) const {
    const auto it = std::lower_bound(levels.begin(), levels.end(), v);
    if (it != levels.end() && *it == v) return static_cast<int>(it - levels.begin());
    return unknown_index();
  }
};

struct continuous_encoder {
  std::string name;
  double mean = 0.0;
  double stdev = 1.0;
  bool add_missing_indicator = false;  // true when the training split had gaps
};

struct target_encoder {
  target_transform transform = target_transform::none;
  double mean = 0.0;
  double stdev = 1.0;

  double encode(double y, std::size_t row) const {
    double v = y;
    if (transform == target_transform::log) {
      if (!(y > 0.0)) {
        throw config_error("target row " + std::to_string(row) +
                           ": log transform requires positive values, got " + std::to_string(y));
      }
      v = std::log(y);
    }
    return (v - mean) / stdev;
  }

  double decode(double z) const {
    const double v = z * stdev + mean;
    return transform == target_transform::log ? std::exp(v) : v;
  }
};

/// The full feature pipeline: categorical -> embedding index, continuous ->
/// z-score with train-mean imputation (plus a 0/1 indicator when training
/// data had gaps), target -> optional log then standardization.
struct dataset_encoder {
  std::vector<categorical_encoder> cats;
  std::vector<continuous_encoder> conts;
  target_encoder target;

  /// Width of the encoded matrix handed to the network: one index column
  /// per categorical feature, then continuous values, then indicators.
  int encoded_width() const {
    int w = static_cast<int>(cats.size()) + static_cast<int>(conts.size());
    for (const auto& c : conts) w += c.add_missing_indicator;
    return w;
  }

  /// Width after the embedding block has replaced the index columns.
  int embedded_width() const {
    int w = encoded_width() - static_cast<int>(cats.size());
    for (const auto& c : cats) w += c.embed_dim();
    return w;
  }

  /// Embedding layer specs matching the leading index columns.
  std::vector<layer_spec> embedding_specs() const {
    std::vector<layer_spec> specs;
    specs.reserve(cats.size());
    for (const auto& c : cats) specs.push_back(layer_spec::embedding(c.vocab(), c.embed_dim()));
    return specs;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["categorical"] = ordered_json::array();
    for (const auto& c : cats) j["categorical"].push_back({{"name", c.name}, {"levels", c.levels}});
    j["continuous"] = ordered_json::array();
    for (const auto& c : conts) {
      j["continuous"].push_back({{"name", c.name},
                                 {"mean", c.mean},
                                 {"stdev", c.stdev},
                                 {"missing_indicator", c.add_missing_indicator}});
    }
    j["target"] = {{"transform", to_string(target.transform)},
                   {"mean", target.mean},
                   {"stdev", target.stdev}};
    return j;
  }

  static dataset_encoder from_json(const ordered_json& j) {
    dataset_encoder e;
    for (const auto& c : j.at("categorical")) {
      categorical_encoder ce;
      ce.name = c.at("name").get<std::string>();
      ce.levels = c.at("levels").get<std::vector<std::string>>();
      if (!std::is_sorted(ce.levels.begin(), ce.levels.end())) {
        throw config_error("encoder: levels for '" + ce.name + "' are not sorted");
      }
      e.cats.push_back(std::move(ce));
    }
    for (const auto& c : j.at("continuous")) {
      e.conts.push_back({c.at("name").get<std::string>(), c.at("mean").get<double>(),
                         c.at("stdev").get<double>(), c.at("missing_indicator").get<bool>()});
    }
    const auto& t = j.at("target");
    e.target = {target_transform_from_string(t.at("transform").get<std::string>()),
                t.at("mean").get<double>(), t.at("stdev").get<double>()};
    return e;
  }
};

/// Fits all encoders on the given training rows. Statistics never look at
/// validation or test rows.
inline dataset_encoder fit_encoders(const typed_table& t, std::span<const int> train_rows,
                                    target_transform transform) {
  if (train_rows.empty()) throw config_error("fit_encoders: empty training split");
  dataset_encoder e;

  for (std::size_t c = 0; c < t.cat.size(); ++c) {
    categorical_encoder ce;
    ce.name = t.cat_names[c];
    std::vector<std::string> seen;
    seen.reserve(train_rows.size());
    for (int r : train_rows) seen.push_back(t.cat[c][static_cast<std::size_t>(r)]);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    ce.levels = std::move(seen);
    e.cats.push_back(std::move(ce));
  }

  for (std::size_t c = 0; c < t.cont.size(); ++c) {
    continuous_encoder ce;
    ce.name = t.cont_names[c];
    double sum = 0.0;
    std::size_t n = 0;
    bool missing = false;
    for (int r : train_rows) {
      const double v = t.cont[c][static_cast<std::size_t>(r)];
      if (std::isnan(v)) {
        missing = true;
      } else {
        sum += v;
        ++n;
      }
    }
    if (n == 0) throw config_error("fit_encoders: column '" + ce.name + "' is entirely missing");
    ce.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (int r : train_rows) {
      const double v = t.cont[c][static_cast<std::size_t>(r)];
      if (!std::isnan(v)) ss += (v - ce.mean) * (v - ce.mean);
    }
    ce.stdev = std::sqrt(ss / static_cast<double>(n));
    if (ce.stdev == 0.0) {
      log_warn("column '" + ce.name + "' has zero variance on the training split; std clamped to 1");
      ce.stdev = 1.0;
    }
    ce.add_missing_indicator = missing;
    e.conts.push_back(std::move(ce));
  }

  e.target.transform = transform;
  double sum = 0.0;
  for (int r : train_rows) {
    double y = t.target[static_cast<std::size_t>(r)];
    if (transform == target_transform::log) {
      if (!(y > 0.0)) {
        throw config_error("target row " + std::to_string(r) +
                           ": log transform requires positive values, got " + std::to_string(y));
      }
      y = std::log(y);
    }
    sum += y;
  }
  const double mean = sum / static_cast<double>(train_rows.size());
  double ss = 0.0;
  for (int r : train_rows) {
    double y = t.target[static_cast<std::size_t>(r)];
    if (transform == target_transform::log) y = std::log(y);
    ss += (y - mean) * (y - mean);
  }
  e.target.mean = mean;
  e.target.stdev = std::sqrt(ss / static_cast<double>(train_rows.size()));
  if (e.target.stdev == 0.0) e.target.stdev = 1.0;
  return e;
}

struct encoded_split {
  tensor2 x;
  std::vector<double> y;  // transformed, standardized target
};

/// Encodes the selected rows into the network's input layout: categorical
/// index columns first (embedding block order), then z-scored continuous
/// values, then missing indicators.
inline encoded_split encode_rows(const typed_table& t, std::span<const int> rows,
                                 const dataset_encoder& e) {
  if (rows.empty()) throw config_error("encode_rows: empty row selection");
  encoded_split out;
  out.x = tensor2(static_cast<int>(rows.size()), e.encoded_width());
  out.y.reserve(rows.size());
  const int n_cat = static_cast<int>(e.cats.size());
  const int n_cont = static_cast<int>(e.conts.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    const auto r = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]);
    for (int c = 0; c < n_cat; ++c) {
      out.x(i, c) = static_cast<double>(e.cats[static_cast<std::size_t>(c)].index_of(t.cat[static_cast<std::size_t>(c)][r]));
    }
    int ind = n_cat + n_cont;
    for (int c = 0; c < n_cont; ++c) {
      const auto& ce = e.conts[static_cast<std::size_t>(c)];
      const double v = t.cont[static_cast<std::size_t>(c)][r];
      const bool missing = std::isnan(v);
      out.x(i, n_cat + c) = missing ? 0.0 : (v - ce.mean) / ce.stdev;
      if (ce.add_missing_indicator) {
        out.x(i, ind) = missing ? 1.0 : 0.0;
        ++ind;
      }
    }
    out.y.push_back(e.target.encode(t.target[r], r));
  }
  return out;
}

struct split_indices {
  std::vector<int> train, val, test;
};

namespace detail {

inline void check_fractions(double val_fraction, double test_fraction) {
  if (!(val_fraction > 0.0) || !(test_fraction > 0.0) || val_fraction + test_fraction >= 1.0) {
    throw config_error("split fractions must be positive and sum to less than 1");
  }
}

inline split_indices cut_ordered(std::vector<int> order, double val_fraction, double test_fraction) {
  const auto n = static_cast<std::size_t>(order.size());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_val == 0 || n_test + n_val >= n) {
    throw config_error("split produces an empty train, validation, or test set");
  }
  split_indices s;
  const auto train_end = n - n_val - n_test;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_end));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(train_end),
               order.begin() + static_cast<std::ptrdiff_t>(train_end + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_end + n_val), order.end());
  return s;
}

}  // namespace detail

/// Chronological split at two cutoffs: train < cutoff1, validation in
/// [cutoff1, cutoff2), test >= cutoff2.
inline split_indices split_by_time(const typed_table& t, double cutoff1, double cutoff2) {
  if (t.timestamp.size() != t.rows()) {
    throw config_error("split_by_time requires a timestamp column in the schema");
  }
  if (!(cutoff1 < cutoff2)) throw config_error("split_by_time: cutoff1 must be < cutoff2");
  split_indices s;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double ts = t.timestamp[i];
    auto& dst = ts < cutoff1 ? s.train : ts < cutoff2 ? s.val : s.test;
    dst.push_back(static_cast<int>(i));
  }
  if (s.train.empty() || s.val.empty() || s.test.empty()) {
    throw config_error("split_by_time: cutoffs produce an empty train, validation, or test set");
  }
  return s;
}

/// Seeded random split for datasets without a meaningful time axis.
inline split_indices split_by_fraction(const typed_table& t, double val_fraction,
                                       double test_fraction, std::uint64_t seed) {
  detail::check_fractions(val_fraction, test_fraction);
  std::vector<int> order(t.rows());
  std::iota(order.begin(), order.end(), 0);
  auto rng = rng_stream::derived(seed, "split");
  // Fisher-Yates with the shared stream keeps the split identical across
  // library versions, unlike std::shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  return detail::cut_ordered(std::move(order), val_fraction, test_fraction);
}

enum class synth_kind { heavy_tail, heteroscedastic };

inline synth_kind synth_kind_from_string(const std::string& s) {
  if (s == "heavy-tail") return synth_kind::heavy_tail;
  if (s == "heteroscedastic") return synth_kind::heteroscedastic;
  throw config_error("unknown synthetic kind '" + s + "' (heavy-tail, heteroscedastic)");
}

/// Schema shared by both synthetic generators: two categorical columns, four
/// continuous features, a day counter, and the target.
inline schema_config synthetic_schema(synth_kind kind) {
  schema_config sc;
  sc.columns = {{"c1", column_role::categorical},  {"c2", column_role::categorical},
                {"x1", column_role::continuous},   {"x2", column_role::continuous},
                {"x3", column_role::continuous},   {"x4", column_role::continuous},
                {"day", column_role::timestamp},   {"y", column_role::target}};
  sc.transform = kind == synth_kind::heavy_tail ? target_transform::log : target_transform::none;
  return sc;
}

/// Deterministic synthetic regression data. The heavy-tail generator draws
/// a log-normal target (strongly leptokurtic, excess kurtosis well above
/// 1); the heteroscedastic one scales its noise with |x1|.
inline typed_table gen_synthetic(synth_kind kind, std::size_t rows, std::uint64_t seed) {
  if (rows == 0) throw config_error("gen_synthetic: rows must be positive");
  auto rng = rng_stream::derived(seed, kind == synth_kind::heavy_tail ? "synth/heavy" : "synth/hetero");

  typed_table t;
  t.cat_names = {"c1", "c2"};
  t.cont_names = {"x1", "x2", "x3", "x4"};
  t.cat.resize(2);
  t.cont.resize(4);

  constexpr int kC1 = 12, kC2 = 5;
  double eff1[kC1], eff2[kC2];
  for (double& v : eff1) v = rng.uniform(-0.8, 0.8);
  for (double& v : eff2) v = rng.uniform(-0.5, 0.5);

  for (std::size_t i = 0; i < rows; ++i) {
    const auto c1 = static_cast<int>(rng.below(kC1));
    const auto c2 = static_cast<int>(rng.below(kC2));
    const double x1 = rng.uniform(-1.0, 1.0);
    const double x2 = rng.uniform(-1.0, 1.0);
    const double x3 = rng.uniform(-1.0, 1.0);
    const double x4 = rng.uniform(-1.0, 1.0);
    const double signal =
        eff1[c1] + eff2[c2] + std::sin(3.0 * x1) + x2 * x3 + 0.5 * x4 * x4 - 0.4 * x2;
    const double eps = rng.normal();
    double y;
    if (kind == synth_kind::heavy_tail) {
      y = std::exp(signal + 0.35 * eps);
    } else {
      y = signal + (0.15 + 0.6 * std::abs(x1)) * eps;
    }
    t.cat[0].push_back("a" + std::to_string(c1));
    t.cat[1].push_back("b" + std::to_string(c2));
    t.cont[0].push_back(x1);
    t.cont[1].push_back(x2);
    t.cont[2].push_back(x3);
    t.cont[3].push_back(x4);
    t.timestamp.push_back(static_cast<double>(i));
    t.target.push_back(y);
  }
  return t;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Serializes a table back to CSV with full-precision numbers, matching
/// the synthetic schema's column order.
inline std::string table_to_csv(const typed_table& t) {
  std::ostringstream out;
  for (std::size_t c = 0; c < t.cat_names.size(); ++c) out << t.cat_names[c] << ',';
  for (std::size_t c = 0; c < t.cont_names.size(); ++c) out << t.cont_names[c] << ',';
  if (!t.timestamp.empty()) out << "day,";
  out << "y\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (const auto& col : t.cat) out << col[r] << ',';
    for (const auto& col : t.cont) {
      if (!std::isnan(col[r])) out << detail::format_double(col[r]);
      out << ',';
    }
    if (!t.timestamp.empty()) out << detail::format_double(t.timestamp[r]) << ',';
    out << detail::format_double(t.target[r]) << '\n';
  }
  return out.str();
}

}  // namespace drawering
