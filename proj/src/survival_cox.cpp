#include "ctsnmm/survival_cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ctsnmm {

namespace {

struct SweepResult {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  std::vector<double> s0;  // risk-set exp sum at each event time
};

// One pass over the event times in decreasing order. Rows enter the risk
// set when stop >= t and leave when start >= t, so each row is added and
// removed exactly once per pass.
SweepResult sweep(const std::vector<RiskRow>& rows,
                  const std::vector<double>& times,
                  const std::vector<std::vector<int>>& events_at,
                  const std::vector<int>& by_stop,
                  const std::vector<int>& by_start,
                  const Eigen::VectorXd& beta) {
  const int p = static_cast<int>(beta.size());
  const int K = static_cast<int>(times.size());
  SweepResult out;
  out.score = Eigen::VectorXd::Zero(p);
  out.info = Eigen::MatrixXd::Zero(p, p);
  out.s0.assign(K, 0.0);

  std::vector<double> exp_eta(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    double eta = 0.0;
    for (int j = 0; j < p; ++j) eta += beta[j] * rows[r].x[j];
    exp_eta[r] = std::exp(eta);
  }

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  size_t ia = 0, ir = 0;
  Eigen::VectorXd xr(p);

  for (int k = K - 1; k >= 0; --k) {
    const double t = times[k];
    while (ia < by_stop.size() && rows[by_stop[ia]].stop >= t) {
      int r = by_stop[ia++];
      for (int j = 0; j < p; ++j) xr[j] = rows[r].x[j];
      s0 += exp_eta[r];
      s1.noalias() += exp_eta[r] * xr;
      s2.noalias() += exp_eta[r] * xr * xr.transpose();
    }
    while (ir < by_start.size() && rows[by_start[ir]].start >= t) {
      int r = by_start[ir++];
      for (int j = 0; j < p; ++j) xr[j] = rows[r].x[j];
      s0 -= exp_eta[r];
      s1.noalias() -= exp_eta[r] * xr;
      s2.noalias() -= exp_eta[r] * xr * xr.transpose();
    }
    const auto& ev = events_at[k];
    const double d = static_cast<double>(ev.size());
    out.s0[k] = s0;
    if (s0 <= 0.0)
      throw FitError("empty risk set at event time " + format_double(t));
    for (int r : ev) {
      double eta = 0.0;
      for (int j = 0; j < p; ++j) {
        eta += beta[j] * rows[r].x[j];
        out.score[j] += rows[r].x[j];
      }
      out.loglik += eta;
    }
    out.loglik -= d * std::log(s0);
    if (p > 0) {
      Eigen::VectorXd xbar = s1 / s0;
      out.score.noalias() -= d * xbar;
      out.info.noalias() += d * (s2 / s0 - xbar * xbar.transpose());
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd CoxFit::standard_errors() const {
  if (coef.size() == 0) return Eigen::VectorXd();
  Eigen::MatrixXd cov = info.ldlt().solve(
      Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

CoxFit fit_cox(const std::vector<RiskRow>& rows, const CoxOptions& opt) {
  if (rows.empty()) throw FitError("no risk rows");
  const int p = static_cast<int>(rows.front().x.size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.x.size()) != p)
      throw FitError("inconsistent covariate dimension in risk rows");
    if (!(r.stop > r.start))
      throw FitError("risk row with non-positive length");
  }

  std::vector<double> times;
  for (const auto& r : rows)
    if (r.event) times.push_back(r.stop);
  if (times.empty()) throw FitError("no events in risk rows");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const int K = static_cast<int>(times.size());

  std::vector<std::vector<int>> events_at(K);
  int n_events = 0;
  for (size_t r = 0; r < rows.size(); ++r)
    if (rows[r].event) {
      int k = static_cast<int>(
          std::lower_bound(times.begin(), times.end(), rows[r].stop) -
          times.begin());
      events_at[k].push_back(static_cast<int>(r));
      ++n_events;
    }

  std::vector<int> by_stop(rows.size()), by_start(rows.size());
  std::iota(by_stop.begin(), by_stop.end(), 0);
  std::iota(by_start.begin(), by_start.end(), 0);
  std::sort(by_stop.begin(), by_stop.end(), [&](int a, int b) {
    return rows[a].stop > rows[b].stop;
  });
  std::sort(by_start.begin(), by_start.end(), [&](int a, int b) {
    return rows[a].start > rows[b].start;
  });

  CoxFit fit;
  fit.event_times = times;
  fit.event_counts.resize(K);
  for (int k = 0; k < K; ++k)
    fit.event_counts[k] = static_cast<int>(events_at[k].size());
  fit.n_events = n_events;
  fit.coef = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  SweepResult cur = sweep(rows, times, events_at, by_stop, by_start, beta);

  if (p == 0) {
    fit.converged = true;
  } else {
    for (int it = 0; it < opt.max_iter; ++it) {
      if (cur.score.cwiseAbs().maxCoeff() <= opt.tol) {
        fit.converged = true;
        break;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur.info);
      if (es.eigenvalues().minCoeff() <=
          1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw FitError("singular information matrix in hazard fit");
      Eigen::VectorXd delta = es.eigenvectors() *
                              es.eigenvalues().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose() * cur.score;
      const double ll_before = cur.loglik;
      double step = 1.0;
      bool accepted = false;
      for (int h = 0; h < 30; ++h) {
        Eigen::VectorXd cand = beta + step * delta;
        SweepResult trial =
            sweep(rows, times, events_at, by_stop, by_start, cand);
        if (trial.loglik >= cur.loglik - 1e-12) {
          beta = cand;
          cur = std::move(trial);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      fit.iterations = it + 1;
      if (!accepted) break;
      if (beta.cwiseAbs().maxCoeff() > opt.separation_bound) {
        fit.separation = true;
        break;
      }
      // the score tolerance can sit below the sweep's summation noise floor
      // on large row sets; a stagnant partial likelihood at an interior
      // point is the numerical optimum
      if (std::abs(cur.loglik - ll_before) <=
          1e-11 * (1.0 + std::abs(cur.loglik))) {
        fit.converged = true;
        break;
      }
    }
    if (!fit.separation && !fit.converged &&
        cur.score.cwiseAbs().maxCoeff() <= opt.tol)
      fit.converged = true;
  }

  fit.coef = beta;
  fit.info = cur.info;
  fit.log_partial_likelihood = cur.loglik;
  fit.score_max_norm = p > 0 ? cur.score.cwiseAbs().maxCoeff() : 0.0;
  fit.masses.resize(K);
  for (int k = 0; k < K; ++k)
    fit.masses[k] = static_cast<double>(fit.event_counts[k]) / cur.s0[k];
  return fit;
}

std::vector<double> breslow_baseline(const CoxFit& fit,
                                     const std::vector<RiskRow>& rows) {
  const int K = static_cast<int>(fit.event_times.size());
  std::vector<double> s0(K, 0.0);
  std::vector<int> d(K, 0);
  for (const auto& r : rows) {
    double eta = 0.0;
    for (int j = 0; j < fit.coef.size(); ++j) eta += fit.coef[j] * r.x[j];
    double e = std::exp(eta);
    // r covers u iff start < u <= stop
    auto lo = std::upper_bound(fit.event_times.begin(), fit.event_times.end(),
                               r.start);
    auto hi = std::upper_bound(fit.event_times.begin(), fit.event_times.end(),
                               r.stop);
    for (auto it = lo; it != hi; ++it) s0[it - fit.event_times.begin()] += e;
    if (r.event) {
      int k = static_cast<int>(
          std::lower_bound(fit.event_times.begin(), fit.event_times.end(),
                           r.stop) -
          fit.event_times.begin());
      ++d[k];
    }
  }
  std::vector<double> masses(K);
  for (int k = 0; k < K; ++k) masses[k] = d[k] / s0[k];
  return masses;
}

namespace {

// covariates just before u: last visit strictly before u
Eigen::VectorXd eval_before(const CovariateSpec& spec, const Trajectory& traj,
                            double u) {
  double eps_target = u;
  // pick the latest visit time < u, then evaluate at that visit
  auto it = std::lower_bound(traj.visit_times.begin(), traj.visit_times.end(),
                             eps_target);
  double at = it == traj.visit_times.begin() ? traj.visit_times.front()
                                             : *(it - 1);
  return spec.eval(traj, at);
}

}  // namespace

double cumulative_hazard(const CoxFit& fit, const Trajectory& traj,
                         const CovariateSpec& spec, double t) {
  double h = 0.0;
  for (size_t k = 0; k < fit.event_times.size(); ++k) {
    double u = fit.event_times[k];
    if (u > t) break;
    double eta = fit.coef.size() == 0
                     ? 0.0
                     : fit.coef.dot(eval_before(spec, traj, u));
    h += std::exp(eta) * fit.masses[k];
  }
  return h;
}

double censoring_survival(const CoxFit& fit, const Trajectory& traj,
                          const CovariateSpec& spec, double t, double floor,
                          int* clamp_count) {
  double surv = 1.0;
  for (size_t k = 0; k < fit.event_times.size(); ++k) {
    double u = fit.event_times[k];
    if (u > t) break;
    double eta = fit.coef.size() == 0
                     ? 0.0
                     : fit.coef.dot(eval_before(spec, traj, u));
    double factor = 1.0 - std::exp(eta) * fit.masses[k];
    if (factor <= 0.0)
      throw FitError("censoring survival factor <= 0 at event time " +
                     format_double(u));
    surv *= factor;
  }
  if (surv < floor) {
    surv = floor;
    if (clamp_count) ++(*clamp_count);
  }
  return surv;
}

std::vector<std::pair<int, double>> martingale_increments(
    const CoxFit& fit, const std::vector<RiskRow>& subject_rows) {
  std::vector<std::pair<int, double>> out;
  const auto& times = fit.event_times;
  for (const auto& r : subject_rows) {
    double eta = 0.0;
    for (int j = 0; j < fit.coef.size(); ++j) eta += fit.coef[j] * r.x[j];
    double e = std::exp(eta);
    auto lo = std::upper_bound(times.begin(), times.end(), r.start);
    auto hi = std::upper_bound(times.begin(), times.end(), r.stop);
    for (auto it = lo; it != hi; ++it) {
      int k = static_cast<int>(it - times.begin());
      double dm = -e * fit.masses[k];
      if (r.event && *it == r.stop) dm += 1.0;
      out.emplace_back(k, dm);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string cox_summary_csv(const CoxFit& fit,
                            const std::vector<std::string>& names) {
  Eigen::VectorXd se = fit.standard_errors();
  std::ostringstream os;
  os << "name,estimate,se,p\n";
  for (int j = 0; j < fit.coef.size(); ++j) {
    double z = se[j] > 0 ? fit.coef[j] / se[j] : 0.0;
    double pval = std::erfc(std::abs(z) / std::sqrt(2.0));
    os << names.at(j) << ',' << format_double(fit.coef[j]) << ','
       << format_double(se[j]) << ',' << format_double(pval) << '\n';
  }
  return os.str();
}

}  // namespace ctsnmm
