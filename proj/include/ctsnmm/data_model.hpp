#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "ctsnmm/errors.hpp"

namespace ctsnmm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Irregular visit history for one subject. Covariates split into
// time-independent values and per-visit time-dependent vectors; between
// visits time-dependent values are carried forward (LOCF).
struct Trajectory {
  std::vector<double> visit_times;  // strictly increasing, first must be 0
  std::vector<double> time_independent;
  std::vector<std::vector<double>> visit_values;  // one vector per visit

  int n_visits() const { return static_cast<int>(visit_times.size()); }
};

// index of the last visit at or before time u
int locf_index(const Trajectory& traj, double u);

struct SubjectRecord {
  int id = 0;
  Trajectory traj;
  double treatment_time = kInf;  // initiation time when treated, +inf otherwise
  bool treated = false;          // initiation observed before min(censoring, tau)
  double censor_time = kInf;     // observed dropout time, +inf when none before tau
  bool uncensored = true;        // still under observation at tau
  double followup_end = 0.0;     // min(censor_time, tau)
  double outcome = kNaN;         // Y at tau, NaN when censored
};

// Named feature recipe: maps (trajectory, time u) to a covariate vector.
// Index lists select columns; flags add visit-history summaries.
struct CovariateSpec {
  std::vector<int> ti_indices;  // into Trajectory::time_independent
  std::vector<int> td_indices;  // into per-visit vectors, LOCF at u
  bool days_since_last_visit = false;
  bool first_visit_flag = false;
  bool second_visit_flag = false;

  int dim() const;
  Eigen::VectorXd eval(const Trajectory& traj, double u) const;
  std::vector<std::string> names(const std::vector<std::string>& ti_names,
                                 const std::vector<std::string>& td_names) const;
};

// Study-level configuration shared by the fitting routines.
struct StudyConfig {
  double tau = 2.0;
  CovariateSpec treatment_spec;  // hazard model for initiation
  CovariateSpec censoring_spec;  // hazard model for dropout
  CovariateSpec outcome_spec;    // features for the pooled outcome regressions
};

// One counting-process interval (start, stop]; covariates fixed at start.
struct RiskRow {
  int subject_id = 0;
  double start = 0.0;
  double stop = 0.0;
  std::vector<double> x;
  bool event = false;
};

enum class Process { treatment, censoring };

// Expand subjects into counting-process rows for one of the two processes.
// Treatment: at risk until min(initiation, censoring, tau), event at
// initiation. Censoring: at risk until min(censoring, tau), event at a
// dropout before tau. Interval boundaries are the visit times.
std::vector<RiskRow> to_risk_rows(const std::vector<SubjectRecord>& subjects,
                                  const CovariateSpec& spec, double tau,
                                  Process process);

// Checks ids, visit ordering, flag consistency and outcome missingness.
void validate_dataset(const std::vector<SubjectRecord>& subjects, double tau);

// ---- CSV ------------------------------------------------------------------
// subject-level file: header id,T,Gamma,C,deltaC,Y ("inf" for +inf, empty Y
// when censored); trajectory file (long format): header
// id,start,stop,event,<time-independent cols>,<time-dependent cols>.

std::string format_double(double v);  // shortest round-trip decimal

void write_subjects_csv(const std::string& path,
                        const std::vector<SubjectRecord>& subjects);
// returns records without trajectories; followup_end derived from tau
std::vector<SubjectRecord> read_subjects_csv(const std::string& path, double tau);

void write_trajectories_csv(const std::string& path,
                            const std::vector<SubjectRecord>& subjects,
                            const std::vector<std::string>& ti_names,
                            const std::vector<std::string>& td_names);
// attaches trajectories to matching ids; every subject must get one
void read_trajectories_csv(const std::string& path,
                           const std::vector<std::string>& ti_names,
                           const std::vector<std::string>& td_names,
                           std::vector<SubjectRecord>& subjects);

void write_risk_rows_csv(const std::string& path,
                         const std::vector<RiskRow>& rows,
                         const std::vector<std::string>& covariate_names);

}  // namespace ctsnmm
