#pragma once

// Grouped-data model: long-format observation records, declarative pair
// covariate rules, and construction of the three design matrices (mean X,
// log-variance Z, pair-level W). W rows follow the vecl ordering over the
// within-group record order.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gztreg/gzt.hpp"

namespace gztreg {

using CovariateValue = std::variant<double, std::string>;

struct ObservationRecord {
  std::string group_id;
  // ordered nested cluster keys, outermost first (e.g. {"class", "A"})
  std::vector<std::pair<std::string, std::string>> subgroup_ids;
  double response = 0.0;
  std::map<std::string, CovariateValue> covariates;
};

// Pair-level covariate constructions. All kinds except `difference` are
// symmetric in the two observations; `difference` is signed as v_j - v_k for
// the vecl pair (j, k) with j later in the record order.
struct PairCovariateRule {
  enum class Kind {
    intercept,
    same_subgroup,   // 1 if both observations share the named nested key
    abs_difference,  // |v_j - v_k|
    difference,      // v_j - v_k
    sq_difference,   // (v_j - v_k)^2
    signed_product,  // v_j * v_k
    lag              // |rank_j - rank_k| when ordered by the named covariate
  };

  Kind kind = Kind::intercept;
  std::string covariate;  // unused for intercept
  std::string name;       // output column label

  static PairCovariateRule intercept() { return {Kind::intercept, "", "intercept"}; }
  static PairCovariateRule same_subgroup(std::string level) {
    return {Kind::same_subgroup, level, "same_subgroup:" + level};
  }
  static PairCovariateRule abs_difference(std::string cov) {
    return {Kind::abs_difference, cov, "absdiff:" + cov};
  }
  static PairCovariateRule difference(std::string cov) {
    return {Kind::difference, cov, "diff:" + cov};
  }
  static PairCovariateRule sq_difference(std::string cov) {
    return {Kind::sq_difference, cov, "sqdiff:" + cov};
  }
  static PairCovariateRule signed_product(std::string cov) {
    return {Kind::signed_product, cov, "prod:" + cov};
  }
  static PairCovariateRule lag(std::string cov) { return {Kind::lag, cov, "lag:" + cov}; }
};

struct GroupData {
  std::string id;
  Vector y;
  Matrix x;  // m x p mean design
  Matrix z;  // m x q log-variance design
  Matrix w;  // pairs x d pair design, rows in vecl order
  Matrix numeric_covariates;  // raw numeric covariate columns, for diagnostics
  std::vector<std::vector<std::string>> subgroup_values;  // [level][observation]

  int size() const { return static_cast<int>(y.size()); }
  int pairs() const { return pair_count(size()); }
};

struct GroupedDataset {
  std::vector<GroupData> groups;
  std::vector<std::string> mean_names;
  std::vector<std::string> variance_names;
  std::vector<std::string> pair_names;
  std::vector<std::string> numeric_covariate_names;
  std::vector<std::string> subgroup_names;
  std::string response_name = "y";
  std::uint64_t fingerprint = 0;

  int n_groups() const { return static_cast<int>(groups.size()); }
  int n_obs() const {
    int n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }
  int p() const { return static_cast<int>(mean_names.size()); }
  int q() const { return static_cast<int>(variance_names.size()); }
  int d() const { return static_cast<int>(pair_names.size()); }
};

// omega = (beta', alpha', lambda')'
struct ParameterVector {
  Vector beta;
  Vector alpha;
  Vector lambda;

  Vector packed() const {
    Vector v(beta.size() + alpha.size() + lambda.size());
    v << beta, alpha, lambda;
    return v;
  }
  static ParameterVector unpack(const Vector& v, int p, int d, int q) {
    if (v.size() != p + d + q) throw BadLengthError("ParameterVector: size mismatch");
    return {v.segment(0, p), v.segment(p, d), v.segment(p + d, q)};
  }
  static ParameterVector zeros(int p, int d, int q) {
    return {Vector::Zero(p), Vector::Zero(d), Vector::Zero(q)};
  }
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t dataset_fingerprint(const std::vector<GroupData>& groups) {
  std::uint64_t h = 1469598103934665603ull;
  const std::uint64_t ng = groups.size();
  h = fnv1a(h, &ng, sizeof(ng));
  for (const auto& g : groups) {
    const std::uint64_t m = g.size();
    h = fnv1a(h, &m, sizeof(m));
    h = fnv1a(h, g.y.data(), sizeof(double) * g.y.size());
  }
  return h;
}

struct CovariateInfo {
  bool numeric = true;
  std::set<std::string> levels;  // categorical levels, lexically ordered
};

}  // namespace detail

inline GroupedDataset build_dataset(const std::vector<ObservationRecord>& records,
                                    const std::vector<std::string>& mean_formula,
                                    const std::vector<std::string>& variance_formula,
                                    const std::vector<PairCovariateRule>& pair_rules) {
  if (records.empty()) throw EmptyGroupError("build_dataset: no records");

  // group keys in first-appearance order; within-group order is input order
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<const ObservationRecord*>> by_group;
  for (const auto& rec : records) {
    if (!std::isfinite(rec.response))
      throw NonFiniteError("build_dataset: non-finite response in group " + rec.group_id);
    auto [it, inserted] = by_group.try_emplace(rec.group_id);
    if (inserted) group_order.push_back(rec.group_id);
    it->second.push_back(&rec);
  }

  // covariate type table; a name must be numeric everywhere or categorical
  // everywhere
  std::map<std::string, detail::CovariateInfo> info;
  for (const auto& rec : records) {
    for (const auto& [name, value] : rec.covariates) {
      const bool numeric = std::holds_alternative<double>(value);
      auto [it, inserted] = info.try_emplace(name);
      if (inserted) it->second.numeric = numeric;
      if (it->second.numeric != numeric)
        throw InconsistentTypesError("build_dataset: covariate '" + name +
                                     "' mixes numeric and categorical values");
      if (!numeric) it->second.levels.insert(std::get<std::string>(value));
    }
  }
  for (const auto& [name, ci] : info) {
    for (const auto& rec : records)
      if (!rec.covariates.count(name))
        throw MissingCovariateError("build_dataset: covariate '" + name +
                                    "' missing in group " + rec.group_id);
    (void)ci;
  }

  // nested key names must agree across records, in order
  std::vector<std::string> subgroup_names;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<std::string> names;
    for (const auto& [n, v] : records[i].subgroup_ids) names.push_back(n);
    if (i == 0)
      subgroup_names = names;
    else if (names != subgroup_names)
      throw InconsistentTypesError("build_dataset: inconsistent nested cluster keys");
  }

  auto require_known = [&](const std::string& name) -> const detail::CovariateInfo& {
    auto it = info.find(name);
    if (it == info.end())
      throw MissingCovariateError("build_dataset: unknown covariate '" + name + "'");
    return it->second;
  };
  auto require_numeric = [&](const std::string& name) {
    if (!require_known(name).numeric)
      throw InconsistentTypesError("build_dataset: covariate '" + name +
                                   "' must be numeric for this use");
  };

  // expand a formula into column labels; categorical covariates become
  // dummies with the first lexical level as reference
  struct Column {
    std::string label;
    std::string covariate;
    std::optional<std::string> level;  // set for dummy columns
  };
  auto expand = [&](const std::vector<std::string>& formula) {
    std::vector<Column> cols;
    cols.push_back({"(Intercept)", "", std::nullopt});
    for (const auto& name : formula) {
      const auto& ci = require_known(name);
      if (ci.numeric) {
        cols.push_back({name, name, std::nullopt});
      } else {
        if (ci.levels.size() < 2)
          continue;  // single-level factor carries no information
        bool first = true;
        for (const auto& level : ci.levels) {
          if (first) {
            first = false;  // reference level
            continue;
          }
          cols.push_back({name + "=" + level, name, level});
        }
      }
    }
    return cols;
  };
  const auto mean_cols = expand(mean_formula);
  const auto var_cols = expand(variance_formula);

  for (const auto& rule : pair_rules) {
    switch (rule.kind) {
      case PairCovariateRule::Kind::intercept:
        break;
      case PairCovariateRule::Kind::same_subgroup: {
        bool found = false;
        for (const auto& n : subgroup_names) found = found || n == rule.covariate;
        if (!found)
          throw MissingCovariateError("build_dataset: unknown nested key '" + rule.covariate +
                                      "' in same_subgroup rule");
        break;
      }
      default:
        require_numeric(rule.covariate);
    }
  }

  std::vector<std::string> numeric_names;
  for (const auto& [name, ci] : info)
    if (ci.numeric) numeric_names.push_back(name);

  GroupedDataset ds;
  for (const auto& c : mean_cols) ds.mean_names.push_back(c.label);
  for (const auto& c : var_cols) ds.variance_names.push_back(c.label);
  for (const auto& r : pair_rules) ds.pair_names.push_back(r.name);
  ds.numeric_covariate_names = numeric_names;
  ds.subgroup_names = subgroup_names;

  auto numeric_value = [](const ObservationRecord& rec, const std::string& name) {
    return std::get<double>(rec.covariates.at(name));
  };
  auto design_value = [&](const ObservationRecord& rec, const Column& col) -> double {
    if (col.covariate.empty()) return 1.0;
    const CovariateValue& v = rec.covariates.at(col.covariate);
    if (col.level) return std::get<std::string>(v) == *col.level ? 1.0 : 0.0;
    return std::get<double>(v);
  };

  for (const auto& gid : group_order) {
    const auto& recs = by_group.at(gid);
    const int m = static_cast<int>(recs.size());
    GroupData g;
    g.id = gid;
    g.y.resize(m);
    g.x.resize(m, static_cast<int>(mean_cols.size()));
    g.z.resize(m, static_cast<int>(var_cols.size()));
    g.numeric_covariates.resize(m, static_cast<int>(numeric_names.size()));
    g.subgroup_values.assign(subgroup_names.size(), std::vector<std::string>(m));
    for (int j = 0; j < m; ++j) {
      const auto& rec = *recs[j];
      g.y(j) = rec.response;
      for (std::size_t c = 0; c < mean_cols.size(); ++c)
        g.x(j, static_cast<int>(c)) = design_value(rec, mean_cols[c]);
      for (std::size_t c = 0; c < var_cols.size(); ++c)
        g.z(j, static_cast<int>(c)) = design_value(rec, var_cols[c]);
      for (std::size_t c = 0; c < numeric_names.size(); ++c)
        g.numeric_covariates(j, static_cast<int>(c)) = numeric_value(rec, numeric_names[c]);
      for (std::size_t l = 0; l < subgroup_names.size(); ++l)
        g.subgroup_values[l][j] = rec.subgroup_ids[l].second;
    }

    // per-rule precomputation of within-group ranks for `lag`
    std::map<std::string, std::vector<int>> ranks;
    for (const auto& rule : pair_rules) {
      if (rule.kind != PairCovariateRule::Kind::lag || ranks.count(rule.covariate)) continue;
      std::vector<int> order(m);
      for (int i = 0; i < m; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return numeric_value(*recs[a], rule.covariate) < numeric_value(*recs[b], rule.covariate);
      });
      std::vector<int> rank(m);
      for (int pos = 0; pos < m; ++pos) rank[order[pos]] = pos;
      ranks[rule.covariate] = std::move(rank);
    }

    auto same_path = [&](const std::string& level, int j, int k) {
      for (std::size_t l = 0; l < subgroup_names.size(); ++l) {
        if (g.subgroup_values[l][j] != g.subgroup_values[l][k]) return false;
        if (subgroup_names[l] == level) return true;
      }
      return true;
    };

    g.w.resize(g.pairs(), static_cast<int>(pair_rules.size()));
    int row = 0;
    for (int k = 0; k < m; ++k)
      for (int j = k + 1; j < m; ++j, ++row)
        for (std::size_t c = 0; c < pair_rules.size(); ++c) {
          const auto& rule = pair_rules[c];
          double value = 0.0;
          switch (rule.kind) {
            case PairCovariateRule::Kind::intercept:
              value = 1.0;
              break;
            case PairCovariateRule::Kind::same_subgroup:
              value = same_path(rule.covariate, j, k) ? 1.0 : 0.0;
              break;
            case PairCovariateRule::Kind::abs_difference:
              value = std::abs(numeric_value(*recs[j], rule.covariate) -
                               numeric_value(*recs[k], rule.covariate));
              break;
            case PairCovariateRule::Kind::difference:
              value = numeric_value(*recs[j], rule.covariate) -
                      numeric_value(*recs[k], rule.covariate);
              break;
            case PairCovariateRule::Kind::sq_difference: {
              const double diff = numeric_value(*recs[j], rule.covariate) -
                                  numeric_value(*recs[k], rule.covariate);
              value = diff * diff;
              break;
            }
            case PairCovariateRule::Kind::signed_product:
              value = numeric_value(*recs[j], rule.covariate) *
                      numeric_value(*recs[k], rule.covariate);
              break;
            case PairCovariateRule::Kind::lag:
              value = std::abs(ranks.at(rule.covariate)[j] - ranks.at(rule.covariate)[k]);
              break;
          }
          g.w(row, static_cast<int>(c)) = value;
        }

    ds.groups.push_back(std::move(g));
  }
  ds.fingerprint = detail::dataset_fingerprint(ds.groups);
  return ds;
}

// Rebuilds the same observations under different formulas or pair rules.
// Only numeric covariates and nested keys are retained by a dataset, so this
// covers datasets built from numeric records (all generated designs).
inline GroupedDataset rebuild_dataset(const GroupedDataset& base,
                                      const std::vector<std::string>& mean_formula,
                                      const std::vector<std::string>& variance_formula,
                                      const std::vector<PairCovariateRule>& pair_rules) {
  std::vector<ObservationRecord> records;
  for (const auto& g : base.groups)
    for (int j = 0; j < g.size(); ++j) {
      ObservationRecord rec;
      rec.group_id = g.id;
      for (std::size_t l = 0; l < base.subgroup_names.size(); ++l)
        rec.subgroup_ids.emplace_back(base.subgroup_names[l], g.subgroup_values[l][j]);
      rec.response = g.y(j);
      for (std::size_t c = 0; c < base.numeric_covariate_names.size(); ++c)
        rec.covariates[base.numeric_covariate_names[c]] = g.numeric_covariates(j, static_cast<int>(c));
      records.push_back(std::move(rec));
    }
  GroupedDataset out = build_dataset(records, mean_formula, variance_formula, pair_rules);
  out.response_name = base.response_name;
  return out;
}

struct GroupStructures {
  Vector mu;
  Vector sd;
  CorrelationMatrix r;
};

inline GroupStructures predict_group_structures(const ParameterVector& params,
                                                const GroupData& g) {
  if (g.x.cols() != params.beta.size() || g.z.cols() != params.lambda.size() ||
      g.w.cols() != params.alpha.size())
    throw BadLengthError("predict_structures: parameter/design dimension mismatch");
  Vector mu = g.x * params.beta;
  Vector sd = (0.5 * (g.z * params.lambda)).array().exp().matrix();
  if (g.size() == 1) return {std::move(mu), std::move(sd), CorrelationMatrix::identity(1)};
  CorrelationMatrix r = gzt_inverse(GztVector(g.w * params.alpha, g.size()));
  return {std::move(mu), std::move(sd), std::move(r)};
}

inline std::vector<GroupStructures> predict_structures(const ParameterVector& params,
                                                       const GroupedDataset& data) {
  std::vector<GroupStructures> out;
  out.reserve(data.groups.size());
  for (const auto& g : data.groups) out.push_back(predict_group_structures(params, g));
  return out;
}

}  // namespace gztreg
