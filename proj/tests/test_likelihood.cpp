#include "gztreg/likelihood.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gztreg/simulate.hpp"
#include "support/oracles.hpp"

using gztreg::GroupedDataset;
using gztreg::Matrix;
using gztreg::ObservationRecord;
using gztreg::PairCovariateRule;
using gztreg::ParameterVector;
using gztreg::SimDesign;
using gztreg::Vector;

namespace {

ObservationRecord rec(const std::string& group, double y,
                      std::map<std::string, gztreg::CovariateValue> cov = {}) {
  return {group, {}, y, std::move(cov)};
}

// small unbalanced dataset with continuous pair covariates
GroupedDataset small_dataset(int n_groups, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::vector<ObservationRecord> records;
  for (int g = 0; g < n_groups; ++g) {
    const int m = 1 + static_cast<int>(rng() % 4);
    for (int j = 0; j < m; ++j)
      records.push_back(rec("g" + std::to_string(g), normal(rng),
                            {{"x", normal(rng)}, {"t", unif(rng)}}));
  }
  return build_dataset(records, {"x"}, {"x"},
                       {PairCovariateRule::intercept(), PairCovariateRule::abs_difference("t")});
}

ParameterVector point(const GroupedDataset& ds, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ParameterVector p = ParameterVector::zeros(ds.p(), ds.d(), ds.q());
  for (int i = 0; i < p.beta.size(); ++i) p.beta(i) = normal(rng);
  for (int i = 0; i < p.alpha.size(); ++i) p.alpha(i) = normal(rng);
  for (int i = 0; i < p.lambda.size(); ++i) p.lambda(i) = normal(rng);
  return p;
}

}  // namespace

TEST_CASE("log-likelihood trivial values") {
  SECTION("all-zero data at the zero parameter gives zero") {
    std::vector<ObservationRecord> records = {rec("a", 0.0), rec("a", 0.0), rec("b", 0.0)};
    GroupedDataset ds = build_dataset(records, {}, {}, {PairCovariateRule::intercept()});
    ParameterVector params = ParameterVector::zeros(ds.p(), ds.d(), ds.q());
    REQUIRE(log_likelihood(params, ds) == 0.0);
  }
  SECTION("scalar Gaussian kernel without the 2 pi constant") {
    std::vector<ObservationRecord> records = {rec("a", 2.0)};
    GroupedDataset ds = build_dataset(records, {}, {}, {});
    ParameterVector params = ParameterVector::zeros(ds.p(), ds.d(), ds.q());
    // beta = 0 gives mu = 0; lambda = 0 gives sigma = 1; l = -0.5 * (0 + 4)
    REQUIRE(log_likelihood(params, ds) == Catch::Approx(-2.0).margin(1e-14));
  }
}

TEST_CASE("log-likelihood matches a dense multivariate normal oracle") {
  GroupedDataset ds = small_dataset(5, 101);
  ParameterVector params = point(ds, 7, 0.3);
  const double got = log_likelihood(params, ds);
  double expected = 0.0;
  const double pi = 3.14159265358979323846;
  auto structures = predict_structures(params, ds);
  for (std::size_t i = 0; i < ds.groups.size(); ++i) {
    const auto& g = ds.groups[i];
    Matrix sigma = structures[i].sd.asDiagonal() * structures[i].r.dense() *
                   structures[i].sd.asDiagonal();
    expected += oracles::mvn_logpdf(g.y, structures[i].mu, sigma) +
                0.5 * g.size() * std::log(2.0 * pi);
  }
  REQUIRE(got == Catch::Approx(expected).epsilon(1e-10));
}

TEST_CASE("beta score block vanishes at OLS under identity working covariance") {
  GroupedDataset ds = small_dataset(6, 202);
  // beta = OLS, alpha = 0, lambda = 0 -> Sigma_i = I and S1 = X'(y - X beta)
  Matrix x(ds.n_obs(), ds.p());
  Vector y(ds.n_obs());
  int row = 0;
  for (const auto& g : ds.groups) {
    x.middleRows(row, g.size()) = g.x;
    y.segment(row, g.size()) = g.y;
    row += g.size();
  }
  ParameterVector params = ParameterVector::zeros(ds.p(), ds.d(), ds.q());
  params.beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  Vector s = score(params, ds);
  REQUIRE(s.segment(0, ds.p()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("analytic score matches finite differences of the log-likelihood") {
  for (std::uint64_t seed : {11u, 12u}) {
    GroupedDataset ds = small_dataset(4, seed);
    for (int pt = 0; pt < 3; ++pt) {
      ParameterVector params = point(ds, 50 + seed + pt, 0.25);
      Vector analytic = score(params, ds);
      auto f = [&](const Vector& v) {
        return log_likelihood(ParameterVector::unpack(v, ds.p(), ds.d(), ds.q()), ds);
      };
      Vector fd = oracles::fd_gradient(f, params.packed());
      const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
      REQUIRE((analytic - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
    }
  }
}

TEST_CASE("J matrix for m=2 matches the symbolic 2x2 inverse") {
  const double rho = 0.35;
  const double denom = 1.0 - rho * rho;
  Matrix rinv(2, 2);
  rinv << 1.0 / denom, -rho / denom, -rho / denom, 1.0 / denom;
  Matrix j = gztreg::detail::j_matrix(rinv);
  REQUIRE(j.rows() == 1);
  // a_21^2 + a_22 a_11
  REQUIRE(j(0, 0) ==
          Catch::Approx(rinv(1, 0) * rinv(1, 0) + rinv(1, 1) * rinv(0, 0)).epsilon(1e-12));
}

TEST_CASE("J and H match Monte Carlo moments for a fixed 3x3 correlation") {
  gztreg::CorrelationMatrix r = gztreg::correlation_family("ar1", 0.5, 3);
  Matrix rinv = r.dense().inverse();
  Matrix j_analytic = gztreg::detail::j_matrix(rinv);
  Matrix h_analytic = gztreg::detail::h_matrix(rinv);

  gztreg::Rng rng(911);
  Eigen::LLT<Matrix> llt(r.dense());
  const Matrix l = llt.matrixL();
  const int draws = 200000;
  Matrix j_mc = Matrix::Zero(3, 3);
  Matrix h_mc = Matrix::Zero(3, 3);
  for (int s = 0; s < draws; ++s) {
    Vector nu = l * rng.normal_vector(3);
    Vector v = rinv * nu;
    Vector eta(3);
    eta << v(1) * v(0) - rinv(1, 0), v(2) * v(0) - rinv(2, 0), v(2) * v(1) - rinv(2, 1);
    Vector phi = v.cwiseProduct(nu) - Vector::Ones(3);
    j_mc += eta * eta.transpose();
    h_mc += eta * phi.transpose();
  }
  j_mc /= draws;
  h_mc /= draws;
  REQUIRE((j_mc - j_analytic).cwiseAbs().maxCoeff() < 0.05);
  REQUIRE((h_mc - h_analytic).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("likelihood terms: rhat is rank one and h averages to one") {
  GroupedDataset ds = small_dataset(5, 404);
  ParameterVector params = point(ds, 5, 0.2);
  auto terms = likelihood_terms(params, ds);
  REQUIRE(terms.size() == ds.groups.size());
  for (const auto& t : terms) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(t.rhat);
    const int m = static_cast<int>(t.nu.size());
    for (int i = 0; i + 1 < m; ++i) REQUIRE(std::abs(es.eigenvalues()(i)) < 1e-10);
    REQUIRE(es.eigenvalues()(m - 1) >= -1e-12);
  }

  // at the generating parameters, E[h] = 1
  double total = 0.0;
  long count = 0;
  for (int rep = 0; rep < 40; ++rep) {
    SimDesign d;
    d.n = 50;
    d.seed = 1000 + rep;
    gztreg::Simulated s = gztreg::generate(d);
    for (const auto& t : likelihood_terms(s.truth, s.data)) {
      total += t.h.sum();
      count += t.h.size();
    }
  }
  REQUIRE(total / static_cast<double>(count) == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("Fisher information blocks for singleton-only data") {
  std::vector<ObservationRecord> records = {rec("a", 1.0, {{"z", 0.5}}),
                                            rec("b", -1.0, {{"z", -0.25}}),
                                            rec("c", 0.25, {{"z", 1.5}})};
  GroupedDataset ds = build_dataset(records, {}, {"z"}, {});
  ParameterVector params = ParameterVector::zeros(ds.p(), ds.d(), ds.q());
  auto blocks = fisher_information(params, ds);
  REQUIRE(blocks.i22.rows() == 0);
  REQUIRE(blocks.i23.rows() == 0);
  Matrix z(3, 2);
  int row = 0;
  for (const auto& g : ds.groups) z.row(row++) = g.z.row(0);
  REQUIRE((blocks.i33 - 0.5 * z.transpose() * z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("full information assembles with exactly zero beta cross-blocks") {
  GroupedDataset ds = small_dataset(5, 777);
  ParameterVector params = point(ds, 3, 0.2);
  auto blocks = fisher_information(params, ds);
  Matrix full = blocks.full();
  const int p = ds.p(), d = ds.d(), q = ds.q();
  REQUIRE(full.rows() == p + d + q);
  REQUIRE(full.block(0, p, p, d + q).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(full.block(p, 0, d + q, p).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((full - full.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-group score covariance matches the information at the truth") {
  SimDesign design;
  design.n = 8000;
  design.seed = 4242;
  gztreg::Simulated sim = gztreg::generate(design);
  const int dim = sim.data.p() + sim.data.d() + sim.data.q();

  Matrix outer = Matrix::Zero(dim, dim);
  Vector mean = Vector::Zero(dim);
  GroupedDataset sub;
  sub.mean_names = sim.data.mean_names;
  sub.variance_names = sim.data.variance_names;
  sub.pair_names = sim.data.pair_names;
  for (const auto& g : sim.data.groups) {
    sub.groups.assign(1, g);
    Vector s = score(sim.truth, sub);
    outer += s * s.transpose();
    mean += s;
  }
  const double n = static_cast<double>(sim.data.groups.size());
  Matrix cov = outer / n - (mean / n) * (mean / n).transpose();
  Matrix info = fisher_information(sim.truth, sim.data).full() / n;
  REQUIRE((cov - info).norm() <= 0.05 * info.norm());
}

TEST_CASE("fit recovers a null correlation model") {
  SimDesign design;
  design.kind = SimDesign::Kind::family;
  design.family_kind = "exchangeable";
  design.rho = 0.0;
  design.m = 4;
  design.n = 300;
  design.seed = 99;
  gztreg::Simulated sim = gztreg::generate(design);
  auto result = fit(sim.data);
  REQUIRE(result.converged);
  const int alpha_idx = sim.data.p();
  REQUIRE(std::abs(result.params.alpha(0)) < 3.0 * result.std_errors(alpha_idx));
}

TEST_CASE("fit on a correctly specified design: ascent, score at optimum, stability") {
  SimDesign design;
  design.n = 120;
  design.seed = 31;
  gztreg::Simulated sim = gztreg::generate(design);
  auto result = fit(sim.data);
  REQUIRE(result.converged);

  // likelihood trace is nondecreasing after step halving
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    REQUIRE(result.trace[i].loglik >=
            result.trace[i - 1].loglik - 1e-10 * (1.0 + std::abs(result.trace[i].loglik)));

  // score at the reported optimum is numerically zero
  Vector s = score(result.params, sim.data);
  REQUIRE(s.cwiseAbs().maxCoeff() < 1e-5 * (1.0 + std::abs(result.loglik)));

  // a perturbed start lands on the same optimum
  ParameterVector jittered = result.params;
  gztreg::Rng rng(5);
  for (int i = 0; i < jittered.beta.size(); ++i) jittered.beta(i) += 0.3 * rng.normal();
  for (int i = 0; i < jittered.alpha.size(); ++i) jittered.alpha(i) += 0.2 * rng.normal();
  for (int i = 0; i < jittered.lambda.size(); ++i) jittered.lambda(i) += 0.3 * rng.normal();
  auto second = fit(sim.data, jittered);
  REQUIRE(second.converged);
  REQUIRE((second.params.packed() - result.params.packed()).cwiseAbs().maxCoeff() < 1e-5);

  // parameters are close to the generating values at this sample size
  REQUIRE(std::abs(result.params.beta(0) - 1.0) < 0.2);
  REQUIRE(std::abs(result.params.alpha(0) - 0.3) < 0.25);
  REQUIRE(std::abs(result.params.lambda(0) + 0.5) < 0.35);
}

TEST_CASE("fit with fixed alpha leaves it untouched and reports fewer free parameters") {
  SimDesign design;
  design.kind = SimDesign::Kind::study3;
  design.n = 30;
  design.seed = 17;
  gztreg::Simulated sim = gztreg::generate(design);
  gztreg::FitOptions options;
  options.fixed_alpha = sim.truth.alpha;
  options.restarts = 2;  // exercises the perturbed-restart path
  options.seed = 91;
  auto result = fit(sim.data, std::nullopt, options);
  REQUIRE(result.alpha_fixed);
  REQUIRE((result.params.alpha - sim.truth.alpha).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(result.free_parameters == sim.data.p() + sim.data.q());
  REQUIRE(std::isnan(result.std_errors(sim.data.p())));
  REQUIRE(std::isfinite(result.std_errors(0)));
}

TEST_CASE("fit rejects rank-deficient designs") {
  std::vector<ObservationRecord> records;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int g = 0; g < 10; ++g)
    for (int j = 0; j < 2; ++j) {
      const double x = normal(rng);
      records.push_back(rec("g" + std::to_string(g), normal(rng), {{"x", x}, {"xx", 2.0 * x}}));
    }
  GroupedDataset ds = build_dataset(records, {"x", "xx"}, {}, {PairCovariateRule::intercept()});
  REQUIRE_THROWS_AS(fit(ds), gztreg::SingularInformationError);

  // duplicated pair columns make the stacked W rank deficient
  GroupedDataset dup = gztreg::rebuild_dataset(
      ds, {"x"}, {}, {PairCovariateRule::intercept(), PairCovariateRule::intercept()});
  REQUIRE_THROWS_AS(fit(dup), gztreg::SingularInformationError);
}
