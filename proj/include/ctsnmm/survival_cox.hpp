#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ctsnmm/data_model.hpp"

namespace ctsnmm {

struct CoxOptions {
  int max_iter = 50;
  double tol = 1e-8;              // max-norm of the score at the solution
  double separation_bound = 15.0;  // |coef| beyond this flags separation
};

// Proportional-hazards fit on counting-process rows, ties handled by the
// Breslow convention. Baseline increments are the Breslow masses at the
// distinct event times. Newton with step halving; converges on the score
// tolerance or on partial-likelihood stagnation at an interior point.
struct CoxFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd info;  // observed information at coef
  std::vector<double> event_times;  // distinct, ascending
  std::vector<int> event_counts;
  std::vector<double> masses;
  double log_partial_likelihood = 0.0;
  double score_max_norm = 0.0;  // at the returned coefficients
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  int n_events = 0;

  Eigen::VectorXd standard_errors() const;
};

CoxFit fit_cox(const std::vector<RiskRow>& rows, const CoxOptions& opt = {});

// Breslow increments recomputed from rows at fit.coef (equals fit.masses).
std::vector<double> breslow_baseline(const CoxFit& fit,
                                     const std::vector<RiskRow>& rows);

// integrated hazard for one subject: sum of mass_k * exp(coef' W(u_k-))
// over event times u_k <= t, W evaluated just before u_k
double cumulative_hazard(const CoxFit& fit, const Trajectory& traj,
                         const CovariateSpec& spec, double t);

// product-integral survival for the censoring process:
//   prod over event times u_k <= t of (1 - exp(coef' W(u_k-)) * mass_k).
// A factor <= 0 is an error; results below `floor` are clamped (counted via
// clamp_count when given).
double censoring_survival(const CoxFit& fit, const Trajectory& traj,
                          const CovariateSpec& spec, double t,
                          double floor = 0.01, int* clamp_count = nullptr);

// dM for one subject at the fit's event times: dN_i(u_k) minus
// exp(coef' x) * mass_k while at risk; returned as (event index, value)
// pairs, ascending. Rows must all belong to the same subject.
std::vector<std::pair<int, double>> martingale_increments(
    const CoxFit& fit, const std::vector<RiskRow>& subject_rows);

// coefficient table: name,estimate,se,p
std::string cox_summary_csv(const CoxFit& fit,
                            const std::vector<std::string>& names);

}  // namespace ctsnmm
