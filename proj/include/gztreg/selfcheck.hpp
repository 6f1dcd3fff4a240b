#pragma once

// Embedded diagnostic battery behind `gztreg selfcheck`: transformation
// round trips, the fixed 3x3 Jacobian reference values, and the analytic
// score against finite differences. The divided-difference tolerance is a
// parameter so tests can inject a fault and watch the Jacobian item fail.

#include <iomanip>
#include <ostream>

#include "gztreg/simulate.hpp"

namespace gztreg {

struct SelfcheckOptions {
  double xi_tol = kXiRepeatedEigTolerance;
  std::uint64_t seed = 20240401;
};

inline bool run_selfcheck(std::ostream& out, const SelfcheckOptions& options = {}) {
  int passed = 0, failed = 0;
  auto report = [&](const char* name, bool ok, double value, const char* detail) {
    (ok ? passed : failed) += 1;
    out << (ok ? "PASS " : "FAIL ") << name << " (" << detail << " = " << std::scientific
        << std::setprecision(3) << value << ")\n";
  };

  {
    Rng rng(options.seed);
    double worst = 0.0;
    for (int m : {2, 3, 5, 8}) {
      for (int rep = 0; rep < 25; ++rep) {
        Vector gamma(pair_count(m));
        for (int i = 0; i < gamma.size(); ++i) gamma(i) = 0.8 * rng.normal();
        CorrelationMatrix r = gzt_inverse(GztVector(gamma, m));
        worst = std::max(worst,
                         (gzt_forward(r).values - gamma).cwiseAbs().maxCoeff());
      }
    }
    report("round-trip", worst <= 1e-8, worst, "max error");
  }

  {
    SymmetricMatrix s(3);
    for (int j = 0; j < 3; ++j) {
      s.at(j, j) = 1.0;
      for (int k = 0; k < j; ++k) s.at(j, k) = std::pow(0.5, j - k);
    }
    Matrix expected(3, 3);
    expected << 0.736, 0.188, 0.014, 0.188, 0.910, 0.188, 0.014, 0.188, 0.736;
    Matrix jac = gzt_jacobian(CorrelationMatrix(s), options.xi_tol);
    const double err = (jac - expected).cwiseAbs().maxCoeff();
    report("jacobian-ar05-reference", err <= 0.0005 * (1 + 1e-9), err, "max error");
  }

  {
    SimDesign design;
    design.n = 6;
    design.seed = options.seed + 1;
    Simulated sim = generate(design);
    Vector analytic = score(sim.truth, sim.data);
    Vector packed = sim.truth.packed();
    const int p = sim.data.p(), d = sim.data.d(), q = sim.data.q();
    Vector fd(packed.size());
    const double h = 1e-6;
    for (int i = 0; i < packed.size(); ++i) {
      Vector hi = packed, lo = packed;
      hi(i) += h;
      lo(i) -= h;
      fd(i) = (log_likelihood(ParameterVector::unpack(hi, p, d, q), sim.data) -
               log_likelihood(ParameterVector::unpack(lo, p, d, q), sim.data)) /
              (2 * h);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    const double err = (analytic - fd).cwiseAbs().maxCoeff() / scale;
    report("score-finite-difference", err <= 1e-5, err, "rel error");
  }

  out << (failed == 0 ? "selfcheck: all items passed\n"
                      : "selfcheck: " + std::to_string(failed) + " item(s) FAILED\n");
  return failed == 0;
}

}  // namespace gztreg
