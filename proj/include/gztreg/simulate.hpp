#pragma once

// Reproducible data generators for the simulation designs used to calibrate
// the estimator, plus the Monte Carlo sampling primitives the acceptance
// battery relies on. A dataset is a pure function of its SimDesign (seed
// included); replication seeds are derived as seed XOR replicate index and
// re-expanded, so batteries are reproducible at any thread count.

#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gztreg/likelihood.hpp"
#include "gztreg/rng.hpp"

namespace gztreg {

enum class ErrorKind { gaussian, student_t };

struct SimDesign {
  enum class Kind {
    study1,        // unbalanced groups, full three-part regression truth
    study2_case1,  // balanced two-level nested random effects
    study2_case2,  // unbalanced, correlation model truth with a time gap
    study2_case3,  // nested random effects + serially correlated innovations
    study2_case4,  // nested random effects + ARCH(1) innovations
    study3,        // case-1 layout with configurable random-effect variances
    family,        // fixed correlation family, unit variances, zero mean
    block          // explicit block sizes and nested variances
  };

  Kind kind = Kind::study1;
  int n = 50;
  std::uint64_t seed = 1;
  ErrorKind error_kind = ErrorKind::gaussian;
  int t_df = 3;

  // family designs
  std::string family_kind = "ar1";  // exchangeable | ar1 | banded
  double rho = 0.5;
  int m = 3;

  // block / study3 designs: nested variances outermost first, residual last
  std::vector<int> block_sizes = {5, 5};
  std::vector<double> variances = {1.0, 1.0, 1.0};
};

struct Simulated {
  GroupedDataset data;
  ParameterVector truth;
};

inline CorrelationMatrix correlation_family(const std::string& kind, double rho, int m) {
  SymmetricMatrix r(m);
  for (int j = 0; j < m; ++j) {
    r.at(j, j) = 1.0;
    for (int k = 0; k < j; ++k) {
      double v = 0.0;
      if (kind == "exchangeable")
        v = rho;
      else if (kind == "ar1")
        v = std::pow(rho, j - k);
      else if (kind == "banded")
        v = j - k == 1 ? rho : 0.0;
      else
        throw BadDesignError("correlation_family: unknown kind '" + kind + "'");
      r.at(j, k) = v;
    }
  }
  try {
    return CorrelationMatrix(r);
  } catch (const Error& e) {
    throw BadDesignError(std::string("correlation_family: ") + e.what());
  }
}

// Draws from N(0, D R D), one sample per row.
inline Matrix gaussian_correlated(const CorrelationMatrix& r, const Vector& sd, int count,
                                  Rng& rng) {
  const int m = r.dim();
  if (sd.size() != m) throw BadLengthError("gaussian_correlated: sd length mismatch");
  Eigen::LLT<Matrix> llt(r.dense());
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("gaussian_correlated: factorization failed");
  const Matrix l = llt.matrixL();
  Matrix out(count, m);
  for (int s = 0; s < count; ++s)
    out.row(s) = (sd.asDiagonal() * (l * rng.normal_vector(m))).transpose();
  return out;
}

namespace detail {

// Correlated draw with the covariance D R D regardless of the error family;
// multivariate t draws are rescaled by sqrt((df-2)/chi2_df).
inline Vector sample_errors(const Matrix& chol_l, const Vector& sd, ErrorKind kind, int t_df,
                            Rng& rng) {
  Vector e = sd.asDiagonal() * (chol_l * rng.normal_vector(static_cast<int>(sd.size())));
  if (kind == ErrorKind::student_t) {
    if (t_df <= 2) throw BadDesignError("student_t errors need df > 2");
    e *= std::sqrt(static_cast<double>(t_df - 2) / rng.chi_squared(t_df));
  }
  return e;
}

// Correlation matrix implied by nested random effects over given block
// sizes: total variance sum(variances); within-block covariance
// variances[0] + variances[1]; between-block covariance variances[0].
inline CorrelationMatrix blocked_correlation(const std::vector<int>& sizes,
                                             const std::vector<double>& variances) {
  if (variances.size() != 3) throw BadDesignError("blocked_correlation: want 3 variances");
  int m = 0;
  for (int s : sizes) m += s;
  const double total = variances[0] + variances[1] + variances[2];
  const double within = (variances[0] + variances[1]) / total;
  const double between = variances[0] / total;
  std::vector<int> label;
  for (std::size_t b = 0; b < sizes.size(); ++b)
    for (int i = 0; i < sizes[b]; ++i) label.push_back(static_cast<int>(b));
  SymmetricMatrix r(m);
  for (int j = 0; j < m; ++j) {
    r.at(j, j) = 1.0;
    for (int k = 0; k < j; ++k) r.at(j, k) = label[j] == label[k] ? within : between;
  }
  return CorrelationMatrix(r);
}

// (alpha0, alpha1) reproducing a balanced blocked correlation under the
// rules {intercept, same_subgroup}.
inline Vector blocked_alpha(const std::vector<int>& sizes, const std::vector<double>& variances) {
  GztVector gamma = gzt_forward(blocked_correlation(sizes, variances));
  int msum = 0;
  for (int s : sizes) msum += s;
  const double within = gamma.values(0);                            // pair (2,1), same block
  const double between = gamma.values(vecl_index(sizes[0], 0, msum));  // first cross-block pair
  Vector alpha(2);
  alpha << between, within - between;
  return alpha;
}

inline void assign_responses(GroupedDataset& ds, const ParameterVector& truth, ErrorKind kind,
                             int t_df, Rng& rng) {
  for (auto& g : ds.groups) {
    GroupStructures st = predict_group_structures(truth, g);
    Eigen::LLT<Matrix> llt(st.r.dense());
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError("generate: correlation factorization failed");
    g.y = st.mu + sample_errors(llt.matrixL(), st.sd, kind, t_df, rng);
  }
  ds.fingerprint = dataset_fingerprint(ds.groups);
}

}  // namespace detail

inline Simulated generate(const SimDesign& design) {
  if (design.n < 1) throw BadDesignError("generate: need n >= 1");
  Rng rng(design.seed);
  using Kind = SimDesign::Kind;
  const double root_half = std::sqrt(0.75);

  auto bivariate = [&](ObservationRecord& rec) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    rec.covariates["x1"] = z1;
    rec.covariates["x2"] = 0.5 * z1 + root_half * z2;  // corr 0.5, unit variance
  };

  switch (design.kind) {
    case Kind::study1: {
      std::vector<ObservationRecord> records;
      for (int i = 0; i < design.n; ++i) {
        const int m = 1 + rng.binomial(6, 0.8);
        for (int j = 0; j < m; ++j) {
          ObservationRecord rec;
          rec.group_id = "g" + std::to_string(i + 1);
          bivariate(rec);
          rec.covariates["u"] = rng.uniform();
          records.push_back(std::move(rec));
        }
      }
      GroupedDataset ds = build_dataset(records, {"x1", "x2"}, {"x1", "x2"},
                                        {PairCovariateRule::intercept(),
                                         PairCovariateRule::difference("u"),
                                         PairCovariateRule::sq_difference("u")});
      ParameterVector truth;
      truth.beta = Vector(3);
      truth.beta << 1.0, -0.5, 0.5;
      truth.alpha = Vector(3);
      truth.alpha << 0.3, -0.2, 0.3;
      truth.lambda = Vector(3);
      truth.lambda << -0.5, 0.5, -0.3;
      detail::assign_responses(ds, truth, design.error_kind, design.t_df, rng);
      return {std::move(ds), std::move(truth)};
    }

    case Kind::study2_case1:
    case Kind::study2_case3:
    case Kind::study2_case4:
    case Kind::study3: {
      const bool balanced = design.kind == Kind::study2_case1 || design.kind == Kind::study3;
      const std::vector<double> vars =
          design.kind == Kind::study3 ? design.variances : std::vector<double>{1.0, 1.0, 1.0};
      const double sigma_u = std::sqrt(vars[0]);
      const double sigma_v = std::sqrt(vars[1]);

      std::vector<ObservationRecord> records;
      std::vector<Vector> errors;
      for (int i = 0; i < design.n; ++i) {
        const int subjects = balanced ? 2 : 2 + static_cast<int>(rng.next() % 3);
        std::vector<int> sizes;
        std::vector<Vector> innov;
        const double u = sigma_u * rng.normal();
        std::vector<double> group_errors;
        for (int j = 0; j < subjects; ++j) {
          const int k = balanced ? 5 : 1 + rng.binomial(4, 0.8);
          sizes.push_back(k);
          const double v = sigma_v * rng.normal();
          Vector eps(k);
          if (design.kind == Kind::study2_case3) {
            // corr(eps_s, eps_s') = 0.85 * 0.6^{|s-s'|} off the diagonal
            SymmetricMatrix c(k);
            for (int a = 0; a < k; ++a) {
              c.at(a, a) = 1.0;
              for (int b = 0; b < a; ++b) c.at(a, b) = 0.85 * std::pow(0.6, a - b);
            }
            Eigen::LLT<Matrix> llt(c.dense());
            eps = llt.matrixL() * rng.normal_vector(k);
          } else if (design.kind == Kind::study2_case4) {
            double var = 1.0;  // sigma^2_{k+1} = 1 + 0.5 eps_k^2
            for (int a = 0; a < k; ++a) {
              eps(a) = std::sqrt(var) * rng.normal();
              var = 1.0 + 0.5 * eps(a) * eps(a);
            }
          } else {
            eps = rng.normal_vector(k) * std::sqrt(vars[2]);
          }
          for (int a = 0; a < k; ++a) group_errors.push_back(u + v + eps(a));
        }
        Vector ge(static_cast<int>(group_errors.size()));
        for (std::size_t a = 0; a < group_errors.size(); ++a) ge(a) = group_errors[a];
        errors.push_back(std::move(ge));

        int obs = 0;
        for (int j = 0; j < subjects; ++j)
          for (int a = 0; a < sizes[j]; ++a, ++obs) {
            ObservationRecord rec;
            rec.group_id = "g" + std::to_string(i + 1);
            rec.subgroup_ids = {{"subject", std::to_string(j + 1)}};
            bivariate(rec);
            records.push_back(std::move(rec));
          }
      }
      GroupedDataset ds = build_dataset(records, {"x1", "x2"}, {},
                                        {PairCovariateRule::intercept(),
                                         PairCovariateRule::same_subgroup("subject")});
      ParameterVector truth;
      truth.beta = Vector(3);
      truth.beta << 1.0, -0.5, 0.5;
      if (design.kind == Kind::study2_case1 || design.kind == Kind::study3) {
        truth.alpha = detail::blocked_alpha({5, 5}, vars);
        truth.lambda = Vector(1);
        truth.lambda << std::log(vars[0] + vars[1] + vars[2]);
      } else {
        // composite innovations are outside the fitted model class
        truth.alpha = Vector(0);
        truth.lambda = Vector(0);
      }
      for (std::size_t i = 0; i < ds.groups.size(); ++i) {
        auto& g = ds.groups[i];
        Vector err = errors[i];
        if (design.error_kind == ErrorKind::student_t) {
          if (design.t_df <= 2) throw BadDesignError("student_t errors need df > 2");
          err *= std::sqrt(static_cast<double>(design.t_df - 2) / rng.chi_squared(design.t_df));
        }
        g.y = g.x * truth.beta + err;
      }
      ds.fingerprint = detail::dataset_fingerprint(ds.groups);
      return {std::move(ds), std::move(truth)};
    }

    case Kind::study2_case2: {
      std::vector<ObservationRecord> records;
      for (int i = 0; i < design.n; ++i) {
        const int subjects = 2 + static_cast<int>(rng.next() % 3);
        for (int j = 0; j < subjects; ++j) {
          const int k = 1 + rng.binomial(4, 0.8);
          for (int a = 0; a < k; ++a) {
            ObservationRecord rec;
            rec.group_id = "g" + std::to_string(i + 1);
            rec.subgroup_ids = {{"subject", std::to_string(j + 1)}};
            bivariate(rec);
            rec.covariates["t"] = rng.uniform();
            records.push_back(std::move(rec));
          }
        }
      }
      GroupedDataset ds = build_dataset(records, {"x1", "x2"}, {},
                                        {PairCovariateRule::intercept(),
                                         PairCovariateRule::same_subgroup("subject"),
                                         PairCovariateRule::abs_difference("t")});
      ParameterVector truth;
      truth.beta = Vector(3);
      truth.beta << 1.0, -0.5, 0.5;
      truth.alpha = Vector(3);
      truth.alpha << 0.2, 0.3, -0.2;
      truth.lambda = Vector(1);
      truth.lambda << 1.0;
      detail::assign_responses(ds, truth, design.error_kind, design.t_df, rng);
      return {std::move(ds), std::move(truth)};
    }

    case Kind::family: {
      CorrelationMatrix r = correlation_family(design.family_kind, design.rho, design.m);
      std::vector<ObservationRecord> records;
      for (int i = 0; i < design.n; ++i)
        for (int j = 0; j < design.m; ++j) {
          ObservationRecord rec;
          rec.group_id = "g" + std::to_string(i + 1);
          records.push_back(std::move(rec));
        }
      GroupedDataset ds = build_dataset(records, {}, {}, {PairCovariateRule::intercept()});
      ParameterVector truth;
      truth.beta = Vector::Zero(1);
      truth.lambda = Vector::Zero(1);
      if (design.family_kind == "exchangeable") {
        truth.alpha = Vector(1);
        truth.alpha << gzt_forward(r).values(0);
      } else {
        truth.alpha = Vector(0);  // not representable by an intercept-only model
      }
      Eigen::LLT<Matrix> llt(r.dense());
      for (auto& g : ds.groups)
        g.y = detail::sample_errors(llt.matrixL(), Vector::Ones(design.m), design.error_kind,
                                    design.t_df, rng);
      ds.fingerprint = detail::dataset_fingerprint(ds.groups);
      return {std::move(ds), std::move(truth)};
    }

    case Kind::block: {
      if (design.variances.size() != 3)
        throw BadDesignError("block design wants {outer, block, residual} variances");
      CorrelationMatrix r = detail::blocked_correlation(design.block_sizes, design.variances);
      const double total = design.variances[0] + design.variances[1] + design.variances[2];
      std::vector<ObservationRecord> records;
      for (int i = 0; i < design.n; ++i)
        for (std::size_t b = 0; b < design.block_sizes.size(); ++b)
          for (int a = 0; a < design.block_sizes[b]; ++a) {
            ObservationRecord rec;
            rec.group_id = "g" + std::to_string(i + 1);
            rec.subgroup_ids = {{"block", std::to_string(b + 1)}};
            records.push_back(std::move(rec));
          }
      GroupedDataset ds = build_dataset(records, {}, {},
                                        {PairCovariateRule::intercept(),
                                         PairCovariateRule::same_subgroup("block")});
      ParameterVector truth;
      truth.beta = Vector::Zero(1);
      truth.lambda = Vector(1);
      truth.lambda << std::log(total);
      bool equal_sizes = true;
      for (int s : design.block_sizes) equal_sizes = equal_sizes && s == design.block_sizes[0];
      truth.alpha = equal_sizes ? detail::blocked_alpha(design.block_sizes, design.variances)
                                : Vector(0);
      Eigen::LLT<Matrix> llt(r.dense());
      const Vector sd = Vector::Constant(r.dim(), std::sqrt(total));
      for (auto& g : ds.groups)
        g.y = detail::sample_errors(llt.matrixL(), sd, design.error_kind, design.t_df, rng);
      ds.fingerprint = detail::dataset_fingerprint(ds.groups);
      return {std::move(ds), std::move(truth)};
    }
  }
  throw BadDesignError("generate: unknown design kind");
}

// Runs f(rep) for rep in [0, n) over the requested number of threads.
// Results must be written into per-index slots by the caller.
template <class F>
inline void parallel_for(int n, int threads, F&& f) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next(0);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
    });
  for (auto& th : pool) th.join();
}

inline std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  return seed ^ static_cast<std::uint64_t>(rep + 1);
}

struct LrtBattery {
  std::vector<double> statistics;  // successful replications only
  int df = 0;
  int failures = 0;
};

// Interior nulls for the LRT calibration battery: fix the whole alpha vector
// at its generating value (df = dim alpha), or drop the subgroup column from
// the pair design (df = 1; the data must be generated with a zero subgroup
// variance so that null is true).
enum class Study3Null { fix_alpha, drop_subgroup };

inline LrtBattery study3_lrt_battery(int n_reps, const SimDesign& design, int threads = 1,
                                     Study3Null null_kind = Study3Null::fix_alpha) {
  std::vector<std::optional<double>> stats(n_reps);
  std::atomic<int> failures(0);
  std::atomic<int> df(0);
  parallel_for(n_reps, threads, [&](int rep) {
    SimDesign local = design;
    local.seed = replication_seed(design.seed, rep);
    try {
      Simulated sim = generate(local);
      FitResult full = fit(sim.data);
      FitResult null = [&] {
        if (null_kind == Study3Null::fix_alpha) {
          FitOptions opts;
          opts.fixed_alpha = sim.truth.alpha;
          return fit(sim.data, std::nullopt, opts);
        }
        GroupedDataset reduced = rebuild_dataset(sim.data, {"x1", "x2"}, {},
                                                 {PairCovariateRule::intercept()});
        return fit(reduced);
      }();
      const double stat = 2.0 * (full.loglik - null.loglik);
      if (!full.converged || !null.converged || stat < -1e-6) {
        failures.fetch_add(1);
      } else {
        stats[rep] = std::max(0.0, stat);
        df.store(full.free_parameters - null.free_parameters);
      }
    } catch (const Error&) {
      failures.fetch_add(1);
    }
  });
  LrtBattery out;
  out.df = df.load();
  out.failures = failures.load();
  for (const auto& s : stats)
    if (s) out.statistics.push_back(*s);
  return out;
}

}  // namespace gztreg
