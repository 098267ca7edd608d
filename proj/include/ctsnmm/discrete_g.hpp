#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ctsnmm/snmm.hpp"

namespace ctsnmm {

// One subject reshaped onto a regular grid of n_bins intervals over
// [0, tau]. Initiation is snapped to the next grid point; bin covariates
// average the visit values observed in (t_{m-1}, t_m], carrying the last
// value forward when a bin has no visit.
struct DiscreteRecord {
  double weight = 1.0;
  double Y = 0.0;
  double T_disc = kInf;
  bool treated = false;
  int at_risk_bins = 0;               // bins m with t_m <= T_disc
  std::vector<Eigen::VectorXd> z;     // z[m-1] holds bin-m covariates
};

struct DiscreteData {
  double tau = 2.0;
  int n_bins = 24;
  std::vector<double> edges;  // t_0 = 0 .. t_{n_bins} = tau
  std::vector<DiscreteRecord> recs;
};

// Subjects with zero weight (censored) produce no record. The covariate set
// must not request visit-history features; bins only carry covariate values.
DiscreteData discretize(const std::vector<SubjectRecord>& subjects,
                        const std::vector<double>& weights,
                        const CovariateSpec& spec, double tau, int n_bins);

struct DiscreteFit {
  Eigen::Vector2d psi_preliminary = Eigen::Vector2d::Zero();
  Eigen::Vector2d psi = Eigen::Vector2d::Zero();
  LogisticFit hazard_model;  // pr(A_m = 1 | not yet treated, bin covariates)
  LogisticFit prob_by_tau;
  LinearFit dur_model, tdur_model;
  // componentwise outcome regressions, as in the continuous fit
  LinearFit outcome_y_model, outcome_b1_model, outcome_b2_model;
};

// Two-stage discrete-time g-estimate: the pooled initiation model replaces
// the martingale increments and the same nuisance recipes run on the
// reshaped rows.
DiscreteFit g_estimate_discrete(const DiscreteData& data);

}  // namespace ctsnmm
