#include <cmath>
#include <random>

#include "ctsnmm/regression.hpp"
#include "doctest.h"

using namespace ctsnmm;

TEST_CASE("least squares matches the hand-solved normal equations") {
  // X'X = [[4,6],[6,14]], X'y = [15,32]  =>  beta = (0.9, 1.9), SSR = 0.7
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(4);
  y << 1, 3, 4, 7;

  for (auto* fit : {new LinearFit(fit_ols(X, y)),
                    new LinearFit(fit_ols_normal(X, y))}) {
    CHECK(fit->coef[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(fit->coef[1] == doctest::Approx(1.9).epsilon(1e-12));
    CHECK(fit->rank == 2);
    CHECK_FALSE(fit->rank_deficient);
    CHECK(fit->sigma2 == doctest::Approx(0.35).epsilon(1e-10));
    delete fit;
  }
}

TEST_CASE("decomposition and normal-equation paths agree") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(60, 4);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < 4; ++j) X(i, j) = nd(gen);
    y[i] = nd(gen);
  }
  LinearFit a = fit_ols(X, y);
  LinearFit b = fit_ols_normal(X, y);
  CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(a.sigma2 - b.sigma2) < 1e-10);
}

TEST_CASE("rank-deficient designs give the smallest-norm solution") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 1, 1, 1, 2, 2;
  Eigen::VectorXd y(3);
  y << 2, 2, 4;
  for (auto fit : {fit_ols(X, y), fit_ols_normal(X, y)}) {
    CHECK(fit.rank == 1);
    CHECK(fit.rank_deficient);
    CHECK(fit.coef[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit.coef[1] == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("residual variance uses n minus rank") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXd y(4);
  y << 0, 1, 2, 3;
  LinearFit fit = fit_ols(X, y);
  CHECK(fit.coef[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(fit.sigma2 == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("logistic fit reproduces the saturated two-cell solution") {
  // 10 rows per cell: 3/10 successes at x=0, 7/10 at x=1
  Eigen::MatrixXd X(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i < 10 ? 0.0 : 1.0;
    y[i] = (i < 10) ? (i < 3 ? 1.0 : 0.0) : (i < 17 ? 1.0 : 0.0);
  }
  LogisticFit fit = fit_logistic(X, y);
  REQUIRE(fit.converged);
  CHECK_FALSE(fit.separation);
  CHECK(fit.coef[0] == doctest::Approx(std::log(3.0 / 7.0)).epsilon(1e-8));
  CHECK(fit.coef[1] == doctest::Approx(std::log(49.0 / 9.0)).epsilon(1e-8));
  CHECK(fit.loglik ==
        doctest::Approx(6.0 * std::log(0.3) + 14.0 * std::log(0.7))
            .epsilon(1e-10));
  Eigen::VectorXd x0(2), x1(2);
  x0 << 1.0, 0.0;
  x1 << 1.0, 1.0;
  CHECK(fit.predict(x0) == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(fit.predict(x1) == doctest::Approx(0.7).epsilon(1e-8));
}

TEST_CASE("balanced intercept-only logistic solves at zero") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(2, 1);
  Eigen::VectorXd y(2);
  y << 0, 1;
  LogisticFit fit = fit_logistic(X, y);
  CHECK(fit.converged);
  CHECK(fit.coef[0] == 0.0);
}

TEST_CASE("logistic degeneracies are flagged or raised") {
  {
    // perfectly separated at x = 0
    Eigen::MatrixXd X(4, 2);
    X << 1, -1, 1, -0.5, 1, 0.5, 1, 1;
    Eigen::VectorXd y(4);
    y << 0, 0, 1, 1;
    LogisticFit fit = fit_logistic(X, y);
    CHECK(fit.separation);
    CHECK_FALSE(fit.converged);
  }
  {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 2);
    Eigen::VectorXd y(4);
    y << 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_logistic(X, y), FitError);
  }
  {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(fit_logistic(X, y), FitError);
  }
}

TEST_CASE("interaction expansion covers every subset in bitmask order") {
  Eigen::VectorXd z(2);
  z << 3.0, 5.0;
  Eigen::VectorXd f = interaction_features(2.0, z);
  REQUIRE(f.size() == 8);
  Eigen::VectorXd expect(8);
  expect << 1, 2, 3, 6, 5, 10, 15, 30;
  CHECK((f - expect).cwiseAbs().maxCoeff() == 0.0);

  auto names = interaction_feature_names({"a", "b"});
  CHECK(names == std::vector<std::string>{"1", "u", "a", "u*a", "b", "u*b",
                                          "a*b", "u*a*b"});
}

TEST_CASE("stacked design keeps exactly the qualifying pairs") {
  SubjectRecord s1;
  s1.id = 1;
  s1.traj.visit_times = {0.0};
  s1.traj.visit_values = {{2.0}};
  s1.treated = true;
  s1.treatment_time = 0.7;
  s1.followup_end = 2.0;
  s1.outcome = 1.0;
  SubjectRecord s2 = s1;
  s2.id = 2;
  s2.treated = false;
  s2.treatment_time = kInf;
  s2.outcome = 0.0;

  CovariateSpec spec;
  spec.td_indices = {0};
  std::vector<double> grid = {0.25, 0.75, 1.5};
  auto gamma = [](const SubjectRecord& s) { return s.treated ? 1.0 : 0.0; };

  auto at_risk = build_at_risk_design({s1, s2}, grid, spec, 2.0,
                                      Restriction::at_risk, gamma);
  REQUIRE(at_risk.rows.size() == 4);
  CHECK(at_risk.rows[0] == std::pair<int, int>{0, 0});
  CHECK(at_risk.rows[1] == std::pair<int, int>{1, 0});
  CHECK(at_risk.rows[2] == std::pair<int, int>{1, 1});
  CHECK(at_risk.rows[3] == std::pair<int, int>{1, 2});
  // features at (subject 1, u=0.25): (1, u, z, u*z) with z = 2
  Eigen::VectorXd expect(4);
  expect << 1.0, 0.25, 2.0, 0.5;
  CHECK((at_risk.X.row(0).transpose() - expect).cwiseAbs().maxCoeff() == 0.0);
  CHECK(at_risk.y[0] == 1.0);
  CHECK(at_risk.y[1] == 0.0);

  auto window = build_at_risk_design({s1, s2}, grid, spec, 2.0,
                                     Restriction::treated_in_window, gamma);
  REQUIRE(window.rows.size() == 1);
  CHECK(window.rows[0] == std::pair<int, int>{0, 0});
}
