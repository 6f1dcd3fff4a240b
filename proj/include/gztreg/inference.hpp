#pragma once

// Model comparison and diagnostics on top of fitted models: likelihood
// ratio tests for nested specifications, per-group-normalized AIC/BIC, Wald
// tests from information-based standard errors, and the GZT-correlogram of
// stratified averaged pairwise residual correlations.

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gztreg/likelihood.hpp"

namespace gztreg {

namespace detail {

// Regularized incomplete gamma functions (series + continued fraction),
// relative accuracy around 1e-14 in the tested range.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw BadLengthError("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_contfrac(a, x);
}

inline double quantile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Upper tail of the chi-squared distribution.
inline double chi_squared_sf(double x, int df) {
  if (df < 1) throw BadLengthError("chi_squared_sf: df must be >= 1");
  if (x <= 0.0) return 1.0;
  return detail::gamma_q(0.5 * df, 0.5 * x);
}

// Two-sided standard normal tail.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct LrtResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Twice the log-likelihood gap between nested fits on the same dataset.
// Nesting is asserted structurally: every design column of the null model
// must appear in the full model.
inline LrtResult lrt(const FitResult& full, const FitResult& null_model) {
  if (full.data_fingerprint != null_model.data_fingerprint)
    throw NotNestedError("lrt: fits come from different datasets");
  auto subset = [](const std::vector<std::string>& small, const std::vector<std::string>& big) {
    const std::set<std::string> bigset(big.begin(), big.end());
    for (const auto& name : small)
      if (!bigset.count(name)) return false;
    return true;
  };
  if (!subset(null_model.mean_names, full.mean_names) ||
      !subset(null_model.variance_names, full.variance_names) ||
      !subset(null_model.pair_names, full.pair_names))
    throw NotNestedError("lrt: null model columns are not a subset of the full model");

  LrtResult out;
  out.df = full.free_parameters - null_model.free_parameters;
  if (out.df < 0) throw NotNestedError("lrt: null model has more free parameters than the full");
  out.statistic = 2.0 * (full.loglik - null_model.loglik);
  if (out.statistic < -1e-8)
    throw NegativeStatisticError("lrt: statistic below -1e-8; one fit likely did not converge");
  out.statistic = std::max(0.0, out.statistic);
  out.p_value = out.df == 0 ? 1.0 : chi_squared_sf(out.statistic, out.df);
  return out;
}

// AIC = (-2 lmax + 2 k) / n with n the number of groups and k the free
// parameter count p+q+d.
inline double aic(const FitResult& fit, int n_groups) {
  return (-2.0 * fit.loglik + 2.0 * fit.free_parameters) / static_cast<double>(n_groups);
}

// Same normalization; the 2 is replaced by log of the total observation
// count.
inline double bic(const FitResult& fit, int n_groups) {
  return (-2.0 * fit.loglik + fit.free_parameters * std::log(static_cast<double>(fit.n_obs))) /
         static_cast<double>(n_groups);
}

struct WaldResult {
  double z = 0.0;
  double p_value = 1.0;
};

// coefficient indexes the packed (beta, alpha, lambda) order.
inline WaldResult wald(const FitResult& fit, int coefficient) {
  const Vector packed = fit.params.packed();
  if (coefficient < 0 || coefficient >= packed.size())
    throw BadLengthError("wald: coefficient index out of range");
  const double se = fit.std_errors(coefficient);
  if (!std::isfinite(se) || se <= 0.0)
    throw DegenerateSEError("wald: standard error unavailable or non-positive");
  WaldResult out;
  out.z = packed(coefficient) / se;
  out.p_value = normal_two_sided_p(out.z);
  return out;
}

struct CorrelogramStratum {
  double lo = 0.0;  // half-open [lo, hi)
  double hi = 0.0;
  double mean = 0.0;    // pair-weighted average of residual products
  long pair_count = 0;  // eligible pairs across groups
  std::vector<std::pair<std::string, double>> group_values;  // per-group averages
};

struct CorrelogramTable {
  std::string covariate;
  std::vector<CorrelogramStratum> strata;
  bool has_empty_stratum = false;
};

// Averaged pairwise products of standardized residuals, stratified by the
// absolute within-group difference of a numeric covariate. Residuals are
// standardized by the fitted per-observation standard deviation. Default
// strata are three equal-count quantile bins of the observed differences.
inline CorrelogramTable gzt_correlogram(const GroupedDataset& data, const FitResult& fit,
                                        const std::string& covariate,
                                        std::vector<std::pair<double, double>> strata = {}) {
  if (fit.data_fingerprint != data.fingerprint)
    throw NotNestedError("gzt_correlogram: fit does not belong to this dataset");
  int col = -1;
  for (std::size_t c = 0; c < data.numeric_covariate_names.size(); ++c)
    if (data.numeric_covariate_names[c] == covariate) col = static_cast<int>(c);
  if (col < 0)
    throw MissingCovariateError("gzt_correlogram: unknown numeric covariate '" + covariate + "'");

  // standardized residuals and pair differences
  std::vector<Vector> resid(data.groups.size());
  std::vector<double> all_diffs;
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    const auto& g = data.groups[i];
    const Vector mu = g.x * fit.params.beta;
    const Vector sd = (0.5 * (g.z * fit.params.lambda)).array().exp().matrix();
    resid[i] = (g.y - mu).cwiseQuotient(sd);
    for (int k = 0; k < g.size(); ++k)
      for (int j = k + 1; j < g.size(); ++j)
        all_diffs.push_back(std::abs(g.numeric_covariates(j, col) - g.numeric_covariates(k, col)));
  }

  if (strata.empty()) {
    std::sort(all_diffs.begin(), all_diffs.end());
    if (all_diffs.empty()) throw EmptyGroupError("gzt_correlogram: no within-group pairs");
    const double q1 = detail::quantile(all_diffs, 1.0 / 3.0);
    const double q2 = detail::quantile(all_diffs, 2.0 / 3.0);
    const double top = all_diffs.back() + 1e-9 + 1e-9 * std::abs(all_diffs.back());
    strata = {{all_diffs.front(), q1}, {q1, q2}, {q2, top}};
  }

  CorrelogramTable table;
  table.covariate = covariate;
  for (const auto& [lo, hi] : strata) {
    CorrelogramStratum stratum;
    stratum.lo = lo;
    stratum.hi = hi;
    double total = 0.0;
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
      const auto& g = data.groups[i];
      double sum = 0.0;
      long count = 0;
      for (int k = 0; k < g.size(); ++k)
        for (int j = k + 1; j < g.size(); ++j) {
          const double gap =
              std::abs(g.numeric_covariates(j, col) - g.numeric_covariates(k, col));
          if (gap >= lo && gap < hi) {
            sum += resid[i](j) * resid[i](k);
            ++count;
          }
        }
      if (count > 0) {
        stratum.group_values.emplace_back(g.id, sum / static_cast<double>(count));
        stratum.pair_count += count;
        total += sum;
      }
    }
    stratum.mean = stratum.pair_count > 0 ? total / static_cast<double>(stratum.pair_count) : 0.0;
    if (stratum.pair_count == 0) table.has_empty_stratum = true;
    table.strata.push_back(std::move(stratum));
  }
  return table;
}

}  // namespace gztreg
