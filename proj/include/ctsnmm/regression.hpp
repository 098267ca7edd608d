#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctsnmm/data_model.hpp"

namespace ctsnmm {

struct LinearFit {
  Eigen::VectorXd coef;
  int rank = 0;
  bool rank_deficient = false;
  double sigma2 = 0.0;  // SSR / (n - rank)

  double predict(const Eigen::VectorXd& x) const { return coef.dot(x); }
};

// least squares via complete orthogonal decomposition; rank-deficient
// designs get the smallest-norm solution and a flag
LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// normal-equations path for tall designs; a near-singular Gram matrix gets
// an eigenvalue-clipped pseudo-inverse solution and the rank flag
LinearFit fit_ols_normal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct LogisticFit {
  Eigen::VectorXd coef;
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  double loglik = 0.0;

  double predict(const Eigen::VectorXd& x) const {
    return 1.0 / (1.0 + std::exp(-coef.dot(x)));
  }
};

struct LogisticOptions {
  int max_iter = 50;
  double tol = 1e-8;
  double separation_bound = 15.0;
};

// Newton/IRLS with step halving; converges on the score tolerance or on
// likelihood stagnation at an interior point, with the hazard fit's
// separation policy. Requires both classes present.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const LogisticOptions& opt = {});

// Full factorial interaction expansion of (u, z1..zk): one column per
// subset, intercept first, ordered by bitmask with u as bit 0.
Eigen::VectorXd interaction_features(double u, const Eigen::VectorXd& z);
std::vector<std::string> interaction_feature_names(
    const std::vector<std::string>& z_names);

enum class Restriction {
  at_risk,            // initiation time >= u (never-treated always qualify)
  treated_in_window,  // treated with u <= initiation time (<= tau)
};

// Stacked regression design over (subject, grid time) pairs that satisfy
// the restriction. Features are the interaction expansion of grid time and
// the selected covariates at that time; the response is a per-subject value.
struct AtRiskDesign {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::pair<int, int>> rows;  // (subject index, grid index)
};

AtRiskDesign build_at_risk_design(
    const std::vector<SubjectRecord>& subjects, const std::vector<double>& grid,
    const CovariateSpec& spec, double tau, Restriction restriction,
    const std::function<double(const SubjectRecord&)>& response);

}  // namespace ctsnmm
