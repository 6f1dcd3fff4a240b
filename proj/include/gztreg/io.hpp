#pragma once

// File formats: RFC 4180 CSV ingestion with per-column type inference, the
// key-value model configuration format, and the CSV artifacts written by the
// command line tool. Doubles are serialized with 17 significant digits.

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gztreg/inference.hpp"
#include "gztreg/model.hpp"

namespace gztreg {

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> row_lines;  // source line of each data row, for diagnostics
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  long line = 1;
  long record_line = 1;
  bool any_record = false;

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&]() {
    end_field();
    if (!any_record) {
      table.header = record;
      any_record = true;
    } else {
      if (record.size() != table.header.size())
        throw ParseError("csv: row has " + std::to_string(record.size()) + " fields, expected " +
                             std::to_string(table.header.size()),
                         record_line);
      table.rows.push_back(record);
      table.row_lines.push_back(record_line);
    }
    record.clear();
    record_line = line;
  };

  char c;
  bool pending = false;  // saw any character of the current record
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty())
          throw ParseError("csv: quote inside unquoted field", line);
        in_quotes = true;
        field_started = true;
        pending = true;
        break;
      case ',':
        end_field();
        pending = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        if (pending || !record.empty() || !field.empty()) end_record();
        pending = false;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
        pending = true;
        break;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field", record_line);
  if (pending || !record.empty() || !field.empty()) end_record();
  if (!any_record) throw ParseError("csv: empty input", 1);
  return table;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

struct CsvDataSpec {
  std::string response;
  std::string group_column = "group";
  std::vector<std::string> subgroup_columns;
};

// Long-format ingestion: one row per observation. Columns other than the
// group key, nested keys and the response become covariates; a column is
// numeric when every entry parses as a double, categorical otherwise.
inline std::vector<ObservationRecord> records_from_table(const CsvTable& table,
                                                         const CsvDataSpec& spec) {
  auto column_index = [&](const std::string& name) {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == name) return static_cast<int>(c);
    return -1;
  };
  const int group_col = column_index(spec.group_column);
  if (group_col < 0)
    throw ParseError("csv: required column '" + spec.group_column + "' not found", 1);
  const int response_col = column_index(spec.response);
  if (response_col < 0)
    throw ParseError("csv: response column '" + spec.response + "' not found", 1);
  std::vector<int> sub_cols;
  for (const auto& name : spec.subgroup_columns) {
    const int c = column_index(name);
    if (c < 0) throw ParseError("csv: nested key column '" + name + "' not found", 1);
    sub_cols.push_back(c);
  }

  std::vector<bool> taken(table.header.size(), false);
  taken[group_col] = taken[response_col] = true;
  for (int c : sub_cols) taken[c] = true;

  std::vector<int> cov_cols;
  std::vector<bool> cov_numeric;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (taken[c]) continue;
    bool numeric = true;
    for (const auto& row : table.rows) {
      double v;
      numeric = numeric && detail::parse_double(row[c], v);
      if (!numeric) break;
    }
    cov_cols.push_back(static_cast<int>(c));
    cov_numeric.push_back(numeric);
  }

  std::vector<ObservationRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ObservationRecord rec;
    rec.group_id = row[group_col];
    if (rec.group_id.empty()) throw ParseError("csv: empty group key", table.row_lines[r]);
    for (std::size_t s = 0; s < sub_cols.size(); ++s)
      rec.subgroup_ids.emplace_back(spec.subgroup_columns[s], row[sub_cols[s]]);
    if (!detail::parse_double(row[response_col], rec.response))
      throw ParseError("csv: response '" + row[response_col] + "' is not numeric",
                       table.row_lines[r]);
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      const std::string& raw = row[cov_cols[k]];
      if (cov_numeric[k]) {
        double v;
        detail::parse_double(raw, v);
        rec.covariates[table.header[cov_cols[k]]] = v;
      } else {
        if (raw.empty()) throw ParseError("csv: empty field", table.row_lines[r]);
        rec.covariates[table.header[cov_cols[k]]] = raw;
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// key = value configuration
// ---------------------------------------------------------------------------

struct KvConfig {
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> arrays;

  bool has(const std::string& key) const { return scalars.count(key) || arrays.count(key); }
  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = scalars.find(key);
    return it == scalars.end() ? fallback : it->second;
  }
  std::vector<std::string> get_array(const std::string& key) const {
    auto it = arrays.find(key);
    if (it != arrays.end()) return it->second;
    auto s = scalars.find(key);
    if (s != scalars.end() && !s->second.empty()) return {s->second};
    return {};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline KvConfig parse_kv(std::istream& in) {
  KvConfig cfg;
  std::string raw;
  long line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string text = detail::trim(raw);
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", line);
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError("config: empty key", line);
    if (cfg.has(key)) throw ParseError("config: duplicate key '" + key + "'", line);
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ParseError("config: unterminated array", line);
      std::vector<std::string> items;
      std::string body = value.substr(1, value.size() - 2);
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) items.push_back(item);
      }
      cfg.arrays[key] = std::move(items);
    } else {
      cfg.scalars[key] = value;
    }
  }
  return cfg;
}

inline PairCovariateRule parse_rule(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto need_arg = [&]() {
    if (arg.empty()) throw ParseError("config: rule '" + spec + "' needs a covariate");
    return arg;
  };
  if (kind == "intercept") return PairCovariateRule::intercept();
  if (kind == "same_subgroup") return PairCovariateRule::same_subgroup(need_arg());
  if (kind == "absdiff") return PairCovariateRule::abs_difference(need_arg());
  if (kind == "diff") return PairCovariateRule::difference(need_arg());
  if (kind == "sqdiff") return PairCovariateRule::sq_difference(need_arg());
  if (kind == "prod") return PairCovariateRule::signed_product(need_arg());
  if (kind == "lag") return PairCovariateRule::lag(need_arg());
  throw ParseError("config: unknown correlation rule kind '" + kind + "'");
}

struct ModelConfig {
  std::string response;
  std::vector<std::string> mean;
  std::vector<std::string> variance;
  std::vector<PairCovariateRule> correlation;
  std::vector<std::string> subgroups;
  FitOptions options;
};

inline ModelConfig model_config_from_kv(const KvConfig& kv) {
  static const std::vector<std::string> known = {"response", "mean",     "variance", "correlation",
                                                 "subgroups", "max_iter", "tol",     "restarts",
                                                 "seed"};
  for (const auto& [key, value] : kv.scalars) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw ParseError("config: unknown key '" + key + "'");
  }
  for (const auto& [key, value] : kv.arrays) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw ParseError("config: unknown key '" + key + "'");
  }

  ModelConfig cfg;
  cfg.response = kv.get("response");
  if (cfg.response.empty()) throw ParseError("config: 'response' is required");
  cfg.mean = kv.get_array("mean");
  cfg.variance = kv.get_array("variance");
  for (const auto& spec : kv.get_array("correlation")) cfg.correlation.push_back(parse_rule(spec));
  cfg.subgroups = kv.get_array("subgroups");
  if (kv.has("max_iter")) cfg.options.max_iterations = std::stoi(kv.get("max_iter"));
  if (kv.has("tol")) cfg.options.tolerance = std::stod(kv.get("tol"));
  if (kv.has("restarts")) cfg.options.restarts = std::stoi(kv.get("restarts"));
  if (kv.has("seed")) cfg.options.seed = std::stoull(kv.get("seed"));
  if (cfg.options.tolerance <= 0.0) throw ParseError("config: 'tol' must be positive");
  if (cfg.options.max_iterations < 1) throw ParseError("config: 'max_iter' must be >= 1");
  return cfg;
}

inline GroupedDataset dataset_from_csv(std::istream& in, const ModelConfig& cfg) {
  CsvDataSpec spec;
  spec.response = cfg.response;
  spec.subgroup_columns = cfg.subgroups;
  CsvTable table = read_csv(in);
  std::vector<ObservationRecord> records = records_from_table(table, spec);
  GroupedDataset ds = build_dataset(records, cfg.mean, cfg.variance, cfg.correlation);
  ds.response_name = cfg.response;
  return ds;
}

// ---------------------------------------------------------------------------
// artifacts
// ---------------------------------------------------------------------------

inline void write_estimates_csv(std::ostream& out, const FitResult& fit) {
  write_csv_row(out, {"coefficient", "block", "estimate", "std_error", "z", "p"});
  const Vector packed = fit.params.packed();
  int idx = 0;
  auto emit = [&](const std::vector<std::string>& names, const std::string& block) {
    for (const auto& name : names) {
      const double est = packed(idx);
      const double se = fit.std_errors(idx);
      std::string z = "", p = "";
      if (std::isfinite(se) && se > 0.0) {
        z = format_full(est / se);
        p = format_full(normal_two_sided_p(est / se));
      }
      write_csv_row(out, {name, block, format_full(est),
                          std::isfinite(se) ? format_full(se) : "", z, p});
      ++idx;
    }
  };
  emit(fit.mean_names, "mean");
  emit(fit.pair_names, "matlogcorr");
  emit(fit.variance_names, "logvariance");
}

inline void write_trace_csv(std::ostream& out, const FitResult& fit) {
  write_csv_row(out, {"iteration", "step_norm", "loglik"});
  for (const auto& pt : fit.trace)
    write_csv_row(out, {std::to_string(pt.iteration), format_full(pt.step_norm),
                        format_full(pt.loglik)});
}

inline void write_correlogram_csv(std::ostream& out, const CorrelogramTable& table) {
  write_csv_row(out, {"stratum_lo", "stratum_hi", "group_id", "value"});
  for (const auto& stratum : table.strata)
    for (const auto& [group, value] : stratum.group_values)
      write_csv_row(out, {format_full(stratum.lo), format_full(stratum.hi), group,
                          format_full(value)});
}

// Dataset export in the ingestion format: group, nested keys, response, then
// the numeric covariates.
inline void write_dataset_csv(std::ostream& out, const GroupedDataset& ds) {
  std::vector<std::string> header = {"group"};
  for (const auto& name : ds.subgroup_names) header.push_back(name);
  header.push_back(ds.response_name);
  for (const auto& name : ds.numeric_covariate_names) header.push_back(name);
  write_csv_row(out, header);
  for (const auto& g : ds.groups)
    for (int j = 0; j < g.size(); ++j) {
      std::vector<std::string> row = {g.id};
      for (const auto& level : g.subgroup_values) row.push_back(level[j]);
      row.push_back(format_full(g.y(j)));
      for (int c = 0; c < g.numeric_covariates.cols(); ++c)
        row.push_back(format_full(g.numeric_covariates(j, c)));
      write_csv_row(out, row);
    }
}

inline void write_truth_kv(std::ostream& out, const std::string& design_label,
                           std::uint64_t seed, const ParameterVector& truth) {
  auto emit = [&](const char* key, const Vector& v) {
    out << key << " = [";
    for (int i = 0; i < v.size(); ++i) out << (i ? ", " : "") << format_full(v(i));
    out << "]\n";
  };
  out << "design = " << design_label << "\n";
  out << "seed = " << seed << "\n";
  emit("beta", truth.beta);
  emit("alpha", truth.alpha);
  emit("lambda", truth.lambda);
}

}  // namespace gztreg
