#include "gztreg/simulate.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "support/oracles.hpp"

using gztreg::CorrelationMatrix;
using gztreg::Matrix;
using gztreg::SimDesign;
using gztreg::Vector;

TEST_CASE("identical designs generate byte-identical datasets") {
  SimDesign design;
  design.n = 40;
  design.seed = 123456;
  auto a = gztreg::generate(design);
  auto b = gztreg::generate(design);
  REQUIRE(a.data.fingerprint == b.data.fingerprint);
  REQUIRE(a.data.groups.size() == b.data.groups.size());
  for (std::size_t i = 0; i < a.data.groups.size(); ++i) {
    REQUIRE((a.data.groups[i].y - b.data.groups[i].y).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.data.groups[i].w - b.data.groups[i].w).cwiseAbs().maxCoeff() == 0.0);
  }
  design.seed = 123457;
  auto c = gztreg::generate(design);
  REQUIRE(c.data.fingerprint != a.data.fingerprint);
}

TEST_CASE("study 1 group sizes follow 1 + binomial(6, 0.8)") {
  SimDesign design;
  design.n = 2000;
  design.seed = 5;
  auto sim = gztreg::generate(design);
  double mean = 0.0;
  for (const auto& g : sim.data.groups) {
    REQUIRE(g.size() >= 1);
    REQUIRE(g.size() <= 7);
    mean += g.size();
  }
  mean /= static_cast<double>(sim.data.groups.size());
  REQUIRE(mean == Catch::Approx(5.8).margin(0.1));

  // covariate law: x1, x2 standard normal with correlation 0.5
  double sx = 0, sxx = 0, sy = 0, syy = 0, sxy = 0;
  long n = 0;
  for (const auto& g : sim.data.groups)
    for (int j = 0; j < g.size(); ++j) {
      const double x1 = g.x(j, 1), x2 = g.x(j, 2);
      sx += x1; sxx += x1 * x1; sy += x2; syy += x2 * x2; sxy += x1 * x2;
      ++n;
    }
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  const double corr = (sxy / n - (sx / n) * (sy / n)) / std::sqrt(vx * vy);
  REQUIRE(vx == Catch::Approx(1.0).margin(0.05));
  REQUIRE(vy == Catch::Approx(1.0).margin(0.05));
  REQUIRE(corr == Catch::Approx(0.5).margin(0.03));
}

TEST_CASE("correlation families") {
  CorrelationMatrix ar = gztreg::correlation_family("ar1", 0.5, 3);
  Matrix expected(3, 3);
  expected << 1, 0.5, 0.25, 0.5, 1, 0.5, 0.25, 0.5, 1;
  REQUIRE((ar.dense() - expected).cwiseAbs().maxCoeff() == 0.0);

  CorrelationMatrix banded0 = gztreg::correlation_family("banded", 0.0, 5);
  REQUIRE((banded0.dense() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);

  CorrelationMatrix exch = gztreg::correlation_family("exchangeable", 0.3, 4);
  REQUIRE(exch(3, 1) == 0.3);

  REQUIRE_THROWS_AS(gztreg::correlation_family("banded", 0.9, 6), gztreg::BadDesignError);
  REQUIRE_THROWS_AS(gztreg::correlation_family("spiral", 0.1, 3), gztreg::BadDesignError);
}

TEST_CASE("gaussian_correlated reproduces the target moments") {
  gztreg::Rng rng(42);
  SECTION("identity correlation scaled by D") {
    Vector sd(2);
    sd << 0.5, 2.0;
    Matrix draws = gztreg::gaussian_correlated(CorrelationMatrix::identity(2), sd, 200000, rng);
    Vector var = (draws.array().square().colwise().mean()).matrix();
    REQUIRE(var(0) == Catch::Approx(0.25).margin(0.005));
    REQUIRE(var(1) == Catch::Approx(4.0).margin(0.08));
    const double corr = (draws.col(0).cwiseProduct(draws.col(1))).mean() / (0.5 * 2.0);
    REQUIRE(corr == Catch::Approx(0.0).margin(0.01));
  }
  SECTION("rho = 0.8 at a million draws") {
    gztreg::SymmetricMatrix s(2);
    s.at(0, 0) = s.at(1, 1) = 1.0;
    s.at(1, 0) = 0.8;
    Matrix draws =
        gztreg::gaussian_correlated(CorrelationMatrix(s), Vector::Ones(2), 1000000, rng);
    const double corr = (draws.col(0).cwiseProduct(draws.col(1))).mean();
    REQUIRE(corr == Catch::Approx(0.8).margin(0.003));
  }
  SECTION("sample covariance matches D R D within 1 percent in Frobenius norm") {
    CorrelationMatrix r = gztreg::correlation_family("ar1", 0.6, 4);
    Vector sd(4);
    sd << 0.5, 1.0, 1.5, 2.0;
    Matrix draws = gztreg::gaussian_correlated(r, sd, 1000000, rng);
    Matrix cov = (draws.transpose() * draws) / static_cast<double>(draws.rows());
    Matrix target = sd.asDiagonal() * r.dense() * sd.asDiagonal();
    REQUIRE((cov - target).norm() <= 0.01 * target.norm());
  }
}

TEST_CASE("student-t errors carry the covariance correction df/(df-2)") {
  SimDesign design;
  design.kind = SimDesign::Kind::family;
  design.family_kind = "exchangeable";
  design.rho = 0.5;
  design.m = 2;
  design.n = 60000;
  design.seed = 9;
  design.error_kind = gztreg::ErrorKind::student_t;
  design.t_df = 5;
  auto sim = gztreg::generate(design);
  double s11 = 0, s22 = 0, s12 = 0;
  for (const auto& g : sim.data.groups) {
    s11 += g.y(0) * g.y(0);
    s22 += g.y(1) * g.y(1);
    s12 += g.y(0) * g.y(1);
  }
  const double n = static_cast<double>(sim.data.groups.size());
  REQUIRE(s11 / n == Catch::Approx(1.0).margin(0.05));
  REQUIRE(s22 / n == Catch::Approx(1.0).margin(0.05));
  REQUIRE(s12 / n == Catch::Approx(0.5).margin(0.04));
}

TEST_CASE("study 2 case I: balanced nested layout with the blocked truth") {
  SimDesign design;
  design.kind = SimDesign::Kind::study2_case1;
  design.n = 3000;
  design.seed = 11;
  auto sim = gztreg::generate(design);
  for (const auto& g : sim.data.groups) REQUIRE(g.size() == 10);
  // empirical within/between correlations of the centered responses
  double sw = 0, sb = 0, sv = 0;
  long cw = 0, cb = 0, cv = 0;
  for (const auto& g : sim.data.groups) {
    Vector e = g.y - g.x * sim.truth.beta;
    for (int j = 0; j < 10; ++j) {
      sv += e(j) * e(j);
      ++cv;
      for (int k = 0; k < j; ++k) {
        const bool same = (j < 5) == (k < 5);
        (same ? sw : sb) += e(j) * e(k);
        (same ? cw : cb) += 1;
      }
    }
  }
  const double var = sv / cv;
  REQUIRE(var == Catch::Approx(3.0).margin(0.1));
  REQUIRE(sw / cw / var == Catch::Approx(2.0 / 3.0).margin(0.02));
  REQUIRE(sb / cb / var == Catch::Approx(1.0 / 3.0).margin(0.02));
  // blocked truth reproduces those correlations through the inverse map
  CorrelationMatrix r = gzt_inverse(
      gztreg::GztVector(sim.data.groups[0].w * sim.truth.alpha, 10));
  REQUIRE(r(1, 0) == Catch::Approx(2.0 / 3.0).margin(1e-9));
  REQUIRE(r(7, 0) == Catch::Approx(1.0 / 3.0).margin(1e-9));
  REQUIRE(sim.truth.lambda(0) == Catch::Approx(std::log(3.0)).margin(1e-12));
}

TEST_CASE("study 2 cases II-IV generate plausible unbalanced data") {
  for (auto kind : {SimDesign::Kind::study2_case2, SimDesign::Kind::study2_case3,
                    SimDesign::Kind::study2_case4}) {
    SimDesign design;
    design.kind = kind;
    design.n = 200;
    design.seed = 31;
    auto sim = gztreg::generate(design);
    REQUIRE(sim.data.groups.size() == 200);
    long total = 0;
    for (const auto& g : sim.data.groups) {
      REQUIRE(g.size() >= 2);
      REQUIRE(g.y.allFinite());
      total += g.size();
    }
    // subjects per group in {2,3,4}, observations per subject in 1..5
    REQUIRE(total >= 2 * 200);
    REQUIRE(total <= 20 * 200);
    REQUIRE(gztreg::generate(design).data.fingerprint == sim.data.fingerprint);
  }
}

TEST_CASE("case II truth matches its generating parameters") {
  SimDesign design;
  design.kind = SimDesign::Kind::study2_case2;
  design.n = 10;
  design.seed = 3;
  auto sim = gztreg::generate(design);
  Vector expected(3);
  expected << 0.2, 0.3, -0.2;
  REQUIRE((sim.truth.alpha - expected).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sim.truth.lambda(0) == 1.0);
  REQUIRE(sim.data.pair_names ==
          std::vector<std::string>{"intercept", "same_subgroup:subject", "absdiff:t"});
}

TEST_CASE("block design: equal sizes expose a representable truth") {
  SimDesign design;
  design.kind = SimDesign::Kind::block;
  design.block_sizes = {3, 3};
  design.variances = {0.5, 1.0, 1.5};
  design.n = 5;
  design.seed = 2;
  auto sim = gztreg::generate(design);
  REQUIRE(sim.truth.alpha.size() == 2);
  // inverse of the blocked gamma reproduces the mixed-model correlations
  CorrelationMatrix r =
      gzt_inverse(gztreg::GztVector(sim.data.groups[0].w * sim.truth.alpha, 6));
  const double total = 3.0;
  REQUIRE(r(1, 0) == Catch::Approx(1.5 / total).margin(1e-9));
  REQUIRE(r(4, 0) == Catch::Approx(0.5 / total).margin(1e-9));

  design.block_sizes = {2, 4};
  auto unequal = gztreg::generate(design);
  REQUIRE(unequal.truth.alpha.size() == 0);
}

TEST_CASE("study 3 battery: nonnegative statistics with chi-squared-2 scale") {
  SimDesign design;
  design.kind = SimDesign::Kind::study3;
  design.n = 40;
  design.seed = 71;
  auto battery = gztreg::study3_lrt_battery(24, design, 2);
  REQUIRE(battery.df == 2);
  REQUIRE(battery.failures == 0);
  REQUIRE(battery.statistics.size() == 24);
  double mean = 0.0;
  for (double s : battery.statistics) {
    REQUIRE(s >= 0.0);
    mean += s;
  }
  mean /= static_cast<double>(battery.statistics.size());
  REQUIRE(mean > 0.5);
  REQUIRE(mean < 4.5);

  // thread count does not change the outcome
  auto serial = gztreg::study3_lrt_battery(24, design, 1);
  REQUIRE(serial.statistics.size() == battery.statistics.size());
  for (std::size_t i = 0; i < serial.statistics.size(); ++i)
    REQUIRE(serial.statistics[i] == battery.statistics[i]);
}

TEST_CASE("study 3 battery with a dropped-column null has df 1 and chi-squared-1 median") {
  SimDesign design;
  design.kind = SimDesign::Kind::study3;
  design.variances = {1.0, 0.0, 1.0};  // no subgroup effect: alpha_1 = 0 is true and interior
  design.n = 40;
  design.seed = 95;
  auto battery = gztreg::study3_lrt_battery(80, design, 2, gztreg::Study3Null::drop_subgroup);
  REQUIRE(battery.df == 1);
  REQUIRE(battery.failures <= 2);
  std::vector<double> stats = battery.statistics;
  std::sort(stats.begin(), stats.end());
  const double median = stats[stats.size() / 2];
  REQUIRE(median == Catch::Approx(0.455).margin(0.3));
}

TEST_CASE("study 1 error norms decrease with the sample size") {
  const int reps = 48;
  Vector mu_norm = Vector::Zero(3), sigma_norm = Vector::Zero(3);
  const int sizes[3] = {50, 100, 200};
  for (int si = 0; si < 3; ++si) {
    std::vector<double> mus(reps), sigmas(reps);
    gztreg::parallel_for(reps, 2, [&](int rep) {
      SimDesign design;
      design.n = sizes[si];
      design.seed = gztreg::replication_seed(900 + si, rep);
      auto sim = gztreg::generate(design);
      auto result = fit(sim.data);
      double mu_err = 0.0, sigma_err = 0.0;
      auto truth_st = predict_structures(sim.truth, sim.data);
      auto fit_st = predict_structures(result.params, sim.data);
      for (std::size_t i = 0; i < sim.data.groups.size(); ++i) {
        const auto& g = sim.data.groups[i];
        mu_err += (g.x * (result.params.beta - sim.truth.beta)).norm();
        Matrix sig_t = truth_st[i].sd.asDiagonal() * truth_st[i].r.dense() *
                       truth_st[i].sd.asDiagonal();
        Matrix sig_f =
            fit_st[i].sd.asDiagonal() * fit_st[i].r.dense() * fit_st[i].sd.asDiagonal();
        sigma_err += (sig_f - sig_t).norm();
      }
      mus[rep] = mu_err / sim.data.n_groups();
      sigmas[rep] = sigma_err / sim.data.n_groups();
    });
    for (int rep = 0; rep < reps; ++rep) {
      mu_norm(si) += mus[rep] / reps;
      sigma_norm(si) += sigmas[rep] / reps;
    }
  }
  REQUIRE(mu_norm(0) > mu_norm(1));
  REQUIRE(mu_norm(1) > mu_norm(2));
  REQUIRE(sigma_norm(0) > sigma_norm(1));
  REQUIRE(sigma_norm(1) > sigma_norm(2));
}
