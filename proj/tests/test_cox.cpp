#include <cmath>
#include <vector>

#include "ctsnmm/simgen.hpp"
#include "ctsnmm/survival_cox.hpp"
#include "doctest.h"

using namespace ctsnmm;

namespace {

// three subjects, one binary covariate; events at t=1 (x=1) and t=2 (x=0),
// third subject (x=1) at risk through 2.5. The partial-likelihood score is
//   score(a) = 1/(2e^a+1) - e^a/(e^a+1)
// with a unique root found here by bisection.
std::vector<RiskRow> three_subject_rows() {
  return {
      {1, 0.0, 1.0, {1.0}, true},
      {2, 0.0, 2.0, {0.0}, true},
      {3, 0.0, 2.5, {1.0}, false},
  };
}

double three_subject_score(double a) {
  double e = std::exp(a);
  return 1.0 / (2.0 * e + 1.0) - e / (e + 1.0);
}

double bisect_root() {
  double lo = -5.0, hi = 0.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (three_subject_score(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Trajectory constant_traj(double value) {
  Trajectory t;
  t.visit_times = {0.0};
  t.visit_values = {{value}};
  return t;
}

}  // namespace

TEST_CASE("three-subject fit matches the bisection root") {
  auto rows = three_subject_rows();
  CoxFit fit = fit_cox(rows);
  double root = bisect_root();

  REQUIRE(fit.converged);
  CHECK_FALSE(fit.separation);
  CHECK(fit.score_max_norm <= 1e-8);
  REQUIRE(fit.coef.size() == 1);
  CHECK(std::abs(fit.coef[0] - root) < 1e-7);

  CHECK(fit.n_events == 2);
  REQUIRE(fit.event_times == std::vector<double>{1.0, 2.0});
  CHECK(fit.event_counts == std::vector<int>{1, 1});

  double e = std::exp(fit.coef[0]);
  REQUIRE(fit.masses.size() == 2);
  CHECK(fit.masses[0] == doctest::Approx(1.0 / (2.0 * e + 1.0)).epsilon(1e-12));
  CHECK(fit.masses[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));

  double ll = fit.coef[0] - std::log(2.0 * e + 1.0) - std::log(e + 1.0);
  CHECK(fit.log_partial_likelihood == doctest::Approx(ll).epsilon(1e-12));

  auto masses = breslow_baseline(fit, rows);
  REQUIRE(masses.size() == 2);
  CHECK(masses[0] == doctest::Approx(fit.masses[0]).epsilon(1e-14));
  CHECK(masses[1] == doctest::Approx(fit.masses[1]).epsilon(1e-14));
}

TEST_CASE("monotone partial likelihood flags separation") {
  // the only event carries the larger covariate while the smaller one stays
  // at risk: the score is positive for every coefficient value
  std::vector<RiskRow> two = {
      {1, 0.0, 1.0, {1.0}, true},
      {2, 0.0, 2.0, {0.0}, false},
  };
  CoxFit f2 = fit_cox(two);
  CHECK(f2.separation);
  CHECK_FALSE(f2.converged);

  // same pathology when the second event's risk set has no covariate spread
  std::vector<RiskRow> three = {
      {1, 0.0, 1.0, {1.0}, true},
      {2, 0.0, 2.0, {0.0}, true},
      {3, 0.0, 2.5, {0.0}, false},
  };
  CoxFit f3 = fit_cox(three);
  CHECK(f3.separation);
  CHECK_FALSE(f3.converged);
}

TEST_CASE("covariate translation leaves fit and hazards unchanged") {
  auto rows = three_subject_rows();
  auto shifted = rows;
  for (auto& r : shifted) r.x[0] += 5.0;

  CoxFit a = fit_cox(rows);
  CoxFit b = fit_cox(shifted);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(std::abs(a.coef[0] - b.coef[0]) < 1e-8);

  CovariateSpec spec;
  spec.td_indices = {0};
  double ha = cumulative_hazard(a, constant_traj(1.0), spec, 2.5);
  double hb = cumulative_hazard(b, constant_traj(6.0), spec, 2.5);
  CHECK(std::abs(ha - hb) < 1e-10);
}

TEST_CASE("covariate-free fit reduces to occurrence/exposure masses") {
  auto rows = three_subject_rows();
  for (auto& r : rows) r.x.clear();
  CoxFit fit = fit_cox(rows);
  REQUIRE(fit.converged);
  CHECK(fit.coef.size() == 0);
  REQUIRE(fit.masses.size() == 2);
  CHECK(fit.masses[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(fit.masses[1] == doctest::Approx(1.0 / 2.0).epsilon(1e-14));

  CovariateSpec spec;  // no columns
  Trajectory traj = constant_traj(0.0);
  CHECK(cumulative_hazard(fit, traj, spec, 0.5) == 0.0);
  CHECK(cumulative_hazard(fit, traj, spec, 2.0) ==
        doctest::Approx(1.0 / 3.0 + 1.0 / 2.0).epsilon(1e-14));

  CHECK(censoring_survival(fit, traj, spec, 0.5) == 1.0);
  CHECK(censoring_survival(fit, traj, spec, 1.0) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(censoring_survival(fit, traj, spec, 2.0) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  int clamps = 0;
  double floored = censoring_survival(fit, traj, spec, 2.0, 0.5, &clamps);
  CHECK(floored == 0.5);
  CHECK(clamps == 1);
}

TEST_CASE("degenerate inputs raise fit errors") {
  std::vector<RiskRow> no_events = {
      {1, 0.0, 1.0, {1.0}, false},
      {2, 0.0, 2.0, {0.0}, false},
  };
  CHECK_THROWS_AS(fit_cox(no_events), FitError);

  // duplicated column makes the information singular
  std::vector<RiskRow> collinear = {
      {1, 0.0, 1.0, {1.0, 1.0}, true},
      {2, 0.0, 2.0, {0.0, 0.0}, true},
      {3, 0.0, 2.5, {1.0, 1.0}, false},
  };
  CHECK_THROWS_AS(fit_cox(collinear), FitError);
}

TEST_CASE("martingale increments sum to zero over the sample") {
  GenConfig cfg;
  cfg.n = 300;
  cfg.seed = 17;
  auto subjects = gen_dataset(cfg);
  StudyConfig study = default_study_config(cfg.tau);

  auto rows = to_risk_rows(subjects, study.treatment_spec, cfg.tau,
                           Process::treatment);
  CoxFit fit = fit_cox(rows);
  REQUIRE(fit.converged);

  double total = 0.0;
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(2);
  size_t lo = 0;
  while (lo < rows.size()) {
    size_t hi = lo;
    while (hi < rows.size() && rows[hi].subject_id == rows[lo].subject_id)
      ++hi;
    std::vector<RiskRow> subject(rows.begin() + lo, rows.begin() + hi);
    for (auto [k, dm] : martingale_increments(fit, subject)) {
      total += dm;
      // covariates in force at the event time within this subject's rows
      for (const auto& r : subject)
        if (r.start < fit.event_times[k] && fit.event_times[k] <= r.stop)
          for (int j = 0; j < 2; ++j) weighted[j] += r.x[j] * dm;
    }
    lo = hi;
  }
  CHECK(std::abs(total) < 1e-9);
  // the covariate-weighted sums reproduce the score at the estimate
  CHECK(weighted.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit recovers the generator's log hazard ratios") {
  GenConfig cfg;
  cfg.n = 2000;
  cfg.censoring = true;
  cfg.seed = 99;
  auto subjects = gen_dataset(cfg);
  StudyConfig study = default_study_config(cfg.tau);

  auto rows_t = to_risk_rows(subjects, study.treatment_spec, cfg.tau,
                             Process::treatment);
  CoxFit ft = fit_cox(rows_t);
  REQUIRE(ft.converged);
  Eigen::VectorXd se_t = ft.standard_errors();
  CHECK(std::abs(ft.coef[0] - cfg.alpha1) < 3.0 * se_t[0]);
  CHECK(std::abs(ft.coef[1] - cfg.alpha2) < 3.0 * se_t[1]);

  auto rows_c = to_risk_rows(subjects, study.censoring_spec, cfg.tau,
                             Process::censoring);
  CoxFit fc = fit_cox(rows_c);
  REQUIRE(fc.converged);
  Eigen::VectorXd se_c = fc.standard_errors();
  CHECK(std::abs(fc.coef[0] - cfg.eta1) < 3.0 * se_c[0]);
  CHECK(std::abs(fc.coef[1] - cfg.eta2) < 3.0 * se_c[1]);
}
