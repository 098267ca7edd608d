#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctsnmm/data_model.hpp"
#include "ctsnmm/regression.hpp"
#include "ctsnmm/survival_cox.hpp"

namespace ctsnmm {

// Treatment effect of initiating at t, evaluated at the end of follow-up:
//   gamma_t(psi) = (psi1 + psi2 t)(tau - t) for t <= tau, else 0.
// Linear in psi with basis ((tau-t), t(tau-t)).
Eigen::Vector2d blip_basis(double t, double tau);
double blip(double t, const Eigen::Vector2d& psi, double tau);

// H(psi): outcome with the effect of the observed initiation removed
double mimicking_outcome(const SubjectRecord& s, const Eigen::Vector2d& psi,
                         double tau);

enum class Estimator { preliminary, cont1, cont2, discrete_g };
std::string estimator_tag(Estimator e);
Estimator estimator_from_tag(const std::string& tag);

// The estimating function is linear in psi: P_n{G(psi)} = b - A psi.
struct EstimatingSystem {
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
};

// root of the linear system; errors out when the 2x2 matrix has condition
// number above cond_limit
Eigen::Vector2d solve_psi(const EstimatingSystem& sys,
                          double cond_limit = 1e10);

// weight function at time u: remaining-duration basis centered by its
// modeled conditional expectation,
//   ((tau-u) - p*e_dur, u(tau-u) - p*e_tdur)
// with p the modeled P(T <= tau | at risk at u) and e_dur, e_tdur the
// modeled E(tau-T | u <= T <= tau) and E(T(tau-T) | u <= T <= tau)
Eigen::Vector2d c_weight(double u, double tau, double p_by_tau, double e_dur,
                         double e_tdur);

// Per-(subject, event time) pieces of the estimating function. Pair r sits
// at grid[pair_k[r]] for subject pair_subject[r] (index into the subject
// vector). basis is zero for never-treated subjects, weight is zero for
// subjects excluded by censoring. The outcome-model centering of
// H(psi) = Y - basis'psi is carried componentwise so it tracks psi:
// predY models E(Y | at risk at u) and predB1/predB2 model the two basis
// components, giving the centered residual
//   (Y - predY) - (basis - predB)' psi.
struct EstimationParts {
  std::vector<double> grid;
  std::vector<int> pair_subject, pair_k;
  std::vector<double> dM, c1, c2, predY, predB1, predB2;
  std::vector<double> weight;            // per subject
  std::vector<double> Y;                 // per subject
  std::vector<Eigen::Vector2d> basis;    // per subject
  Eigen::Vector2d psi_ref = Eigen::Vector2d::Zero();  // preliminary root
  int n = 0;
};

// direct evaluation of P_n{G(psi)} from the parts (reference path; the
// assembled system gives the same value as b - A psi)
Eigen::Vector2d evaluate_estimating_function(const EstimationParts& parts,
                                             const Eigen::Vector2d& psi,
                                             bool use_outcome_model);

EstimatingSystem assemble_system(const EstimationParts& parts,
                                 bool use_outcome_model,
                                 const std::vector<double>* inv_scale = nullptr);

// sample variance of the centered residual at psi_ref over at-risk subjects
// per event time; entries with fewer than min_at_risk subjects fall back to 1
std::vector<double> event_time_variances(const EstimationParts& parts,
                                         int min_at_risk, double var_floor,
                                         bool* fallback);

struct PipelineOptions {
  bool censoring = false;
  std::vector<Estimator> estimators = {Estimator::preliminary,
                                       Estimator::cont1, Estimator::cont2};
  int n_bins = 24;          // discrete comparator grid
  int bootstrap = 0;        // resamples for the covariance; 0 = none
  std::uint64_t seed = 0;   // bootstrap stream seed
  int threads = 1;          // bootstrap parallelism
  double kc_floor = 0.01;
  double var_floor = 1e-8;
  int var_min_at_risk = 5;
  CoxOptions cox;
};

// Stage 1 and 2 of the continuous-time fit: hazard models, censoring
// weights, pooled nuisance regressions, preliminary root and the outcome
// model refit at it.
struct ContinuousModel {
  CoxFit fit_treatment;
  std::optional<CoxFit> fit_censoring;
  LogisticFit prob_by_tau;   // P(T <= tau | at risk at u)
  LinearFit dur_model;       // E(tau - T | u <= T <= tau)
  LinearFit tdur_model;      // E(T(tau - T) | u <= T <= tau)
  LinearFit outcome_y_model;   // E(Y | at risk at u)
  LinearFit outcome_b1_model;  // E(basis_1 | at risk at u)
  LinearFit outcome_b2_model;  // E(basis_2 | at risk at u)
  Eigen::Vector2d psi_preliminary;
  EstimationParts parts;
  int kc_clamp_count = 0;
  bool variance_fallback = false;
};

ContinuousModel fit_continuous(const std::vector<SubjectRecord>& subjects,
                               const StudyConfig& config,
                               const PipelineOptions& opts);

struct PsiEstimate {
  Eigen::Vector2d psi = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  Eigen::Vector2d ci_lower = Eigen::Vector2d::Zero();
  Eigen::Vector2d ci_upper = Eigen::Vector2d::Zero();
  int n_bootstrap = 0;
  bool has_ci = false;
  std::string tag;
};

struct PipelineResult {
  std::vector<PsiEstimate> estimates;  // order of opts.estimators
  CoxFit treatment_fit;
  std::optional<CoxFit> censoring_fit;
  int kc_clamp_count = 0;
  bool variance_fallback = false;
  int failed_bootstrap = 0;
};

// Point estimates for the requested estimators plus subject-level bootstrap
// confidence intervals when opts.bootstrap > 0.
PipelineResult estimate_pipeline(const std::vector<SubjectRecord>& subjects,
                                 const StudyConfig& config,
                                 const PipelineOptions& opts);

// estimate / SE / CI / p-value tables
std::string results_table_csv(const PipelineResult& res);
std::string results_table_text(const PipelineResult& res);

}  // namespace ctsnmm
