#include "ctsnmm/simgen.hpp"

#include <algorithm>
#include <cmath>

#include "ctsnmm/snmm.hpp"

namespace ctsnmm {

double gen_event_time(const std::vector<double>& knots,
                      const std::vector<double>& rates, Rng& rng) {
  if (knots.empty() || knots.size() != rates.size())
    throw ConfigError("knots and rates must align");
  for (size_t j = 0; j < knots.size(); ++j) {
    if (!(rates[j] > 0.0)) throw ConfigError("hazard rates must be positive");
    double draw = rng.exponential(rates[j]);
    double len = j + 1 < knots.size() ? knots[j + 1] - knots[j] : kInf;
    if (draw < len) return knots[j] + draw;
  }
  return kInf;  // unreachable: the last piece is unbounded
}

std::vector<SubjectRecord> gen_dataset(const GenConfig& cfg) {
  const int m = static_cast<int>(cfg.knots.size());
  if (m < 1 || cfg.knots.front() != 0.0)
    throw ConfigError("knots must start at 0");
  if (cfg.knots.back() >= cfg.tau)
    throw ConfigError("last knot must precede tau");

  Eigen::MatrixXd sigma(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      sigma(a, b) = std::pow(cfg.ar_rho, std::abs(a - b));
  Eigen::MatrixXd chol = sigma.llt().matrixL();

  Rng root(cfg.seed);
  std::vector<SubjectRecord> out;
  out.reserve(cfg.n);

  for (int i = 0; i < cfg.n; ++i) {
    Rng rng = root.stream(kSubjectStream + static_cast<std::uint64_t>(i));

    double lti = rng.bernoulli(cfg.bernoulli_p) ? 1.0 : 0.0;
    Eigen::VectorXd zn(m);
    for (int j = 0; j < m; ++j) zn[j] = rng.normal();
    Eigen::VectorXd lev = chol * zn;

    std::vector<double> rates_T(m), rates_C(m);
    for (int j = 0; j < m; ++j) {
      rates_T[j] = cfg.lambda_T0 * std::exp(cfg.alpha1 * lti + cfg.alpha2 * lev[j]);
      rates_C[j] = cfg.lambda_C0 * std::exp(cfg.eta1 * lti + cfg.eta2 * lev[j]);
    }
    double t_raw = gen_event_time(cfg.knots, rates_T, rng);
    double c_raw = cfg.censoring ? gen_event_time(cfg.knots, rates_C, rng)
                                 : kInf;

    SubjectRecord s;
    s.id = i;
    s.uncensored = c_raw >= cfg.tau;
    s.censor_time = s.uncensored ? kInf : c_raw;
    s.followup_end = std::min(c_raw, cfg.tau);
    s.treated = t_raw <= s.followup_end;
    s.treatment_time = s.treated ? t_raw : kInf;

    s.traj.time_independent = {lti};
    for (int j = 0; j < m; ++j) {
      double t = cfg.knots[j];
      if (t > s.followup_end) break;
      s.traj.visit_times.push_back(t);
      s.traj.visit_values.push_back({lev[j]});
    }
    if (s.treated && s.treatment_time < s.followup_end) {
      auto& vt = s.traj.visit_times;
      if (std::find(vt.begin(), vt.end(), s.treatment_time) == vt.end()) {
        auto pos = std::upper_bound(vt.begin(), vt.end(), s.treatment_time);
        int piece = static_cast<int>(
            std::upper_bound(cfg.knots.begin(), cfg.knots.end(),
                             s.treatment_time) -
            cfg.knots.begin()) - 1;
        s.traj.visit_values.insert(
            s.traj.visit_values.begin() + (pos - vt.begin()), {lev[piece]});
        vt.insert(pos, s.treatment_time);
      }
    }

    if (s.uncensored) {
      double y = lev[m - 1];
      if (s.treated) y += blip(s.treatment_time, cfg.psi_true, cfg.tau);
      s.outcome = y;
    } else {
      s.outcome = kNaN;
    }
    out.push_back(std::move(s));
  }
  return out;
}

StudyConfig default_study_config(double tau, bool misspec_treatment,
                                 bool misspec_censoring) {
  StudyConfig cfg;
  cfg.tau = tau;
  cfg.treatment_spec.ti_indices = {0};
  if (!misspec_treatment) cfg.treatment_spec.td_indices = {0};
  if (!misspec_censoring) {
    cfg.censoring_spec.ti_indices = {0};
    cfg.censoring_spec.td_indices = {0};
  }
  cfg.outcome_spec.ti_indices = {0};
  cfg.outcome_spec.td_indices = {0};
  return cfg;
}

}  // namespace ctsnmm
