#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ctsnmm/data_model.hpp"
#include "ctsnmm/rng.hpp"

namespace ctsnmm {

// Longitudinal data generator. One binary baseline covariate, one
// time-dependent covariate that is piecewise constant on the knots with
// AR-correlated Gaussian levels (corr rho^|i-j|), initiation and dropout
// hazards loglinear in (baseline, current level), treatment-free outcome
// equal to the last level, and the blip with psi_true added at initiation.
struct GenConfig {
  int n = 1000;
  double tau = 2.0;
  double lambda_T0 = 0.4;
  double alpha1 = 0.15, alpha2 = 0.8;   // initiation log hazard ratios
  Eigen::Vector2d psi_true{15.0, -1.0};
  double bernoulli_p = 0.55;
  double ar_rho = 0.7;
  bool censoring = false;
  double lambda_C0 = 0.2;
  double eta1 = 0.2, eta2 = 0.2;        // dropout log hazard ratios
  std::vector<double> knots{0.0, 0.5, 1.0, 1.5};
  std::uint64_t seed = 0;
};

// Event time under a piecewise-constant hazard: rates[j] applies on
// [knots[j], knots[j+1]), the last piece extending to infinity. Interval
// by interval inverse-CDF draws, one uniform per interval reached.
double gen_event_time(const std::vector<double>& knots,
                      const std::vector<double>& rates, Rng& rng);

// Per-subject draw order on stream(kSubjectStream + i): baseline Bernoulli,
// four normals for the levels, initiation uniforms, then dropout uniforms
// when censoring is on. Records are identical for a given (seed, i)
// regardless of n or thread count.
std::vector<SubjectRecord> gen_dataset(const GenConfig& cfg);

// feature recipes matching the generated columns; the misspecification
// switches drop the time-dependent covariate from the initiation model and
// all covariates from the dropout model
StudyConfig default_study_config(double tau, bool misspec_treatment = false,
                                 bool misspec_censoring = false);

inline const std::vector<std::string> kTiNames = {"L_TI"};
inline const std::vector<std::string> kTdNames = {"L_TD"};

}  // namespace ctsnmm
