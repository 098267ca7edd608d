#include "ctsnmm/discrete_g.hpp"

#include <algorithm>
#include <cmath>

#include "ctsnmm/regression.hpp"

namespace ctsnmm {

DiscreteData discretize(const std::vector<SubjectRecord>& subjects,
                        const std::vector<double>& weights,
                        const CovariateSpec& spec, double tau, int n_bins) {
  if (n_bins < 2) throw ConfigError("need at least 2 bins");
  if (weights.size() != subjects.size())
    throw DataError("weight vector length mismatch");
  if (spec.days_since_last_visit || spec.first_visit_flag ||
      spec.second_visit_flag)
    throw DataError(
        "visit-history features are not supported by the discrete comparator");

  DiscreteData dd;
  dd.tau = tau;
  dd.n_bins = n_bins;
  dd.edges.resize(n_bins + 1);
  for (int m = 0; m <= n_bins; ++m)
    dd.edges[m] = tau * static_cast<double>(m) / n_bins;

  const int p_ti = static_cast<int>(spec.ti_indices.size());
  const int p_td = static_cast<int>(spec.td_indices.size());

  for (size_t i = 0; i < subjects.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const auto& s = subjects[i];
    DiscreteRecord rec;
    rec.weight = weights[i];
    rec.Y = s.outcome;
    rec.treated = s.treated;
    if (s.treated) {
      auto it = std::lower_bound(dd.edges.begin() + 1, dd.edges.end(),
                                 s.treatment_time);
      if (it == dd.edges.end())
        throw DataError("initiation time beyond tau");
      rec.T_disc = *it;
      rec.at_risk_bins = static_cast<int>(it - dd.edges.begin());
    } else {
      rec.T_disc = kInf;
      rec.at_risk_bins = n_bins;
    }
    rec.z.resize(rec.at_risk_bins);
    for (int m = 1; m <= rec.at_risk_bins; ++m) {
      Eigen::VectorXd z(p_ti + p_td);
      for (int j = 0; j < p_ti; ++j)
        z[j] = s.traj.time_independent[spec.ti_indices[j]];
      if (p_td > 0) {
        // average the visits observed in (t_{m-1}, t_m], LOCF when empty
        auto lo = std::upper_bound(s.traj.visit_times.begin(),
                                   s.traj.visit_times.end(), dd.edges[m - 1]);
        auto hi = std::upper_bound(s.traj.visit_times.begin(),
                                   s.traj.visit_times.end(), dd.edges[m]);
        if (lo == hi) {
          int vi = locf_index(s.traj, dd.edges[m]);
          for (int j = 0; j < p_td; ++j)
            z[p_ti + j] = s.traj.visit_values[vi][spec.td_indices[j]];
        } else {
          for (int j = 0; j < p_td; ++j) z[p_ti + j] = 0.0;
          for (auto it2 = lo; it2 != hi; ++it2) {
            int vi = static_cast<int>(it2 - s.traj.visit_times.begin());
            for (int j = 0; j < p_td; ++j)
              z[p_ti + j] += s.traj.visit_values[vi][spec.td_indices[j]];
          }
          z.tail(p_td) /= static_cast<double>(hi - lo);
        }
      }
      rec.z[m - 1] = std::move(z);
    }
    dd.recs.push_back(std::move(rec));
  }
  if (dd.recs.empty()) throw DataError("no usable subjects after weighting");
  return dd;
}

namespace {

struct DiscRows {
  Eigen::MatrixXd X;                       // stacked feature rows
  std::vector<std::pair<int, int>> rows;   // (record index, bin m)
};

DiscRows stack_at_risk(const DiscreteData& dd) {
  size_t total = 0;
  for (const auto& r : dd.recs) total += static_cast<size_t>(r.at_risk_bins);
  DiscRows out;
  out.rows.reserve(total);
  long cols = 0;
  for (size_t i = 0; i < dd.recs.size(); ++i)
    for (int m = 1; m <= dd.recs[i].at_risk_bins; ++m)
      out.rows.emplace_back(static_cast<int>(i), m);
  if (!out.rows.empty())
    cols = interaction_features(0.0, dd.recs[0].z[0]).size();
  out.X.resize(static_cast<long>(out.rows.size()), cols);
  for (size_t q = 0; q < out.rows.size(); ++q) {
    auto [i, m] = out.rows[q];
    out.X.row(static_cast<long>(q)) =
        interaction_features(dd.edges[m], dd.recs[i].z[m - 1]).transpose();
  }
  return out;
}

}  // namespace

DiscreteFit g_estimate_discrete(const DiscreteData& data) {
  const double tau = data.tau;
  DiscRows rows = stack_at_risk(data);
  const long R = rows.X.rows();

  Eigen::VectorXd y_haz(R), y_gamma(R);
  for (long q = 0; q < R; ++q) {
    auto [i, m] = rows.rows[static_cast<size_t>(q)];
    const auto& rec = data.recs[static_cast<size_t>(i)];
    y_haz[q] = rec.treated && m == rec.at_risk_bins ? 1.0 : 0.0;
    y_gamma[q] = rec.treated ? 1.0 : 0.0;
  }

  DiscreteFit fit;
  fit.hazard_model = fit_logistic(rows.X, y_haz);
  if (!fit.hazard_model.converged)
    throw FitError("pooled initiation model did not converge");
  fit.prob_by_tau = fit_logistic(rows.X, y_gamma);
  if (!fit.prob_by_tau.converged)
    throw FitError("initiation-by-tau model did not converge");

  std::vector<long> treated_rows;
  for (long q = 0; q < R; ++q)
    if (data.recs[static_cast<size_t>(rows.rows[static_cast<size_t>(q)].first)]
            .treated)
      treated_rows.push_back(q);
  if (treated_rows.empty())
    throw FitError("no treated subjects available for the duration models");
  Eigen::MatrixXd Xtr(treated_rows.size(), rows.X.cols());
  Eigen::VectorXd ydur(treated_rows.size()), ytdur(treated_rows.size());
  for (size_t q = 0; q < treated_rows.size(); ++q) {
    long src = treated_rows[q];
    Xtr.row(static_cast<long>(q)) = rows.X.row(src);
    double T = data.recs[static_cast<size_t>(rows.rows[static_cast<size_t>(src)]
                                                 .first)]
                   .T_disc;
    ydur[static_cast<long>(q)] = tau - T;
    ytdur[static_cast<long>(q)] = T * (tau - T);
  }
  fit.dur_model = fit_ols_normal(Xtr, ydur);
  fit.tdur_model = fit_ols_normal(Xtr, ytdur);

  Eigen::VectorXd p_haz =
      (1.0 + (-(rows.X * fit.hazard_model.coef).array()).exp()).inverse();
  Eigen::VectorXd p_tau =
      (1.0 + (-(rows.X * fit.prob_by_tau.coef).array()).exp()).inverse();
  Eigen::VectorXd edur = rows.X * fit.dur_model.coef;
  Eigen::VectorXd etdur = rows.X * fit.tdur_model.coef;

  auto assemble = [&](const Eigen::VectorXd* pY, const Eigen::VectorXd* pB1,
                      const Eigen::VectorXd* pB2) {
    EstimatingSystem sys;
    for (long q = 0; q < R; ++q) {
      auto [i, m] = rows.rows[static_cast<size_t>(q)];
      const auto& rec = data.recs[static_cast<size_t>(i)];
      double u = data.edges[m];
      Eigen::Vector2d c = c_weight(u, tau, p_tau[q], edur[q], etdur[q]);
      double a = y_haz[q] - p_haz[q];
      double f = rec.weight * a;
      double y0 = rec.Y - (pY ? (*pY)[q] : 0.0);
      Eigen::Vector2d slope =
          rec.treated ? blip_basis(rec.T_disc, tau) : Eigen::Vector2d::Zero();
      if (pB1) {
        slope[0] -= (*pB1)[q];
        slope[1] -= (*pB2)[q];
      }
      sys.b += c * (f * y0);
      sys.A += (f * c) * slope.transpose();
    }
    double n = static_cast<double>(data.recs.size());
    sys.A /= n;
    sys.b /= n;
    return sys;
  };

  fit.psi_preliminary = solve_psi(assemble(nullptr, nullptr, nullptr));

  // componentwise outcome regressions keep the centering linear in psi
  Eigen::VectorXd yY(R), yB1(R), yB2(R);
  for (long q = 0; q < R; ++q) {
    const auto& rec =
        data.recs[static_cast<size_t>(rows.rows[static_cast<size_t>(q)].first)];
    Eigen::Vector2d b = rec.treated ? blip_basis(rec.T_disc, tau)
                                    : Eigen::Vector2d::Zero();
    yY[q] = rec.Y;
    yB1[q] = b[0];
    yB2[q] = b[1];
  }
  fit.outcome_y_model = fit_ols_normal(rows.X, yY);
  fit.outcome_b1_model = fit_ols_normal(rows.X, yB1);
  fit.outcome_b2_model = fit_ols_normal(rows.X, yB2);
  Eigen::VectorXd pY = rows.X * fit.outcome_y_model.coef;
  Eigen::VectorXd pB1 = rows.X * fit.outcome_b1_model.coef;
  Eigen::VectorXd pB2 = rows.X * fit.outcome_b2_model.coef;
  fit.psi = solve_psi(assemble(&pY, &pB1, &pB2));
  return fit;
}

}  // namespace ctsnmm
