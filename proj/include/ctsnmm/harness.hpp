#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctsnmm/simgen.hpp"
#include "ctsnmm/snmm.hpp"

namespace ctsnmm {

struct ScenarioConfig {
  std::string name = "scenario";
  GenConfig gen;
  bool misspec_treatment = false;  // drop the time-dependent initiation covariate
  bool misspec_censoring = false;  // drop all dropout covariates
  std::vector<Estimator> estimators = {Estimator::preliminary,
                                       Estimator::cont1};
  int replicates = 200;
  int bootstrap = 50;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct McSummary {
  std::string scenario, estimator;
  int n = 0;
  int bootstrap = 0;
  int replicates = 0;  // successful replicates aggregated
  int failures = 0;
  std::array<double, 2> bias{}, mc_se{}, rmse{}, coverage{}, coverage_se{};
  bool has_coverage = false;
};

struct ScenarioResult {
  std::vector<McSummary> summaries;  // one per estimator
  bool flagged = false;              // failure rate above 5% somewhere
};

// Replicates are generated and analyzed on per-replicate seed streams and
// aggregated in replicate order, so results do not depend on the thread
// count. A failed replicate is dropped from every estimator and counted.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

// aligned text, values scaled by 100 per reporting convention
std::string emit_table_text(const std::vector<McSummary>& summaries);
// raw full-precision values, two rows (parameters) per estimator
std::string emit_table_csv(const std::vector<McSummary>& summaries);
std::vector<McSummary> parse_table_csv(const std::string& csv);

}  // namespace ctsnmm
