#include "ctsnmm/snmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ctsnmm/discrete_g.hpp"
#include "ctsnmm/parallel.hpp"
#include "ctsnmm/rng.hpp"

namespace ctsnmm {

Eigen::Vector2d blip_basis(double t, double tau) {
  if (t > tau) return Eigen::Vector2d::Zero();
  return {tau - t, t * (tau - t)};
}

double blip(double t, const Eigen::Vector2d& psi, double tau) {
  return psi.dot(blip_basis(t, tau));
}

double mimicking_outcome(const SubjectRecord& s, const Eigen::Vector2d& psi,
                         double tau) {
  if (!s.treated) return s.outcome;
  return s.outcome - blip(s.treatment_time, psi, tau);
}

std::string estimator_tag(Estimator e) {
  switch (e) {
    case Estimator::preliminary: return "preliminary";
    case Estimator::cont1: return "cont1";
    case Estimator::cont2: return "cont2";
    case Estimator::discrete_g: return "discrete_g";
  }
  return "?";
}

Estimator estimator_from_tag(const std::string& tag) {
  for (Estimator e : {Estimator::preliminary, Estimator::cont1,
                      Estimator::cont2, Estimator::discrete_g})
    if (estimator_tag(e) == tag) return e;
  throw ConfigError("unknown estimator '" + tag + "'");
}

Eigen::Vector2d solve_psi(const EstimatingSystem& sys, double cond_limit) {
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(
      sys.A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double smax = svd.singularValues()[0];
  double smin = svd.singularValues()[1];
  if (!(smin > 0.0) || smax / smin > cond_limit)
    throw IdentificationError(
        "estimating system is singular or ill-conditioned (condition " +
        format_double(smin > 0 ? smax / smin : kInf) + ")");
  return svd.solve(sys.b);
}

Eigen::Vector2d c_weight(double u, double tau, double p_by_tau, double e_dur,
                         double e_tdur) {
  return {(tau - u) - p_by_tau * e_dur,
          u * (tau - u) - p_by_tau * e_tdur};
}

Eigen::Vector2d evaluate_estimating_function(const EstimationParts& parts,
                                             const Eigen::Vector2d& psi,
                                             bool use_outcome_model) {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (size_t r = 0; r < parts.dM.size(); ++r) {
    int i = parts.pair_subject[r];
    double w = parts.weight[i];
    if (w == 0.0) continue;
    double resid = parts.Y[i] - parts.basis[i].dot(psi);
    if (use_outcome_model)
      resid -= parts.predY[r] - parts.predB1[r] * psi[0] -
               parts.predB2[r] * psi[1];
    double f = w * resid * parts.dM[r];
    g[0] += parts.c1[r] * f;
    g[1] += parts.c2[r] * f;
  }
  return g / static_cast<double>(parts.n);
}

EstimatingSystem assemble_system(const EstimationParts& parts,
                                 bool use_outcome_model,
                                 const std::vector<double>* inv_scale) {
  EstimatingSystem sys;
  for (size_t r = 0; r < parts.dM.size(); ++r) {
    int i = parts.pair_subject[r];
    double w = parts.weight[i];
    if (w == 0.0) continue;
    double scale = inv_scale ? (*inv_scale)[parts.pair_k[r]] : 1.0;
    double f = w * scale * parts.dM[r];
    Eigen::Vector2d c(parts.c1[r], parts.c2[r]);
    double y0 = parts.Y[i];
    Eigen::Vector2d slope = parts.basis[i];
    if (use_outcome_model) {
      y0 -= parts.predY[r];
      slope[0] -= parts.predB1[r];
      slope[1] -= parts.predB2[r];
    }
    sys.b += c * (f * y0);
    sys.A += (f * c) * slope.transpose();
  }
  double n = static_cast<double>(parts.n);
  sys.A /= n;
  sys.b /= n;
  return sys;
}

std::vector<double> event_time_variances(const EstimationParts& parts,
                                         int min_at_risk, double var_floor,
                                         bool* fallback) {
  const size_t K = parts.grid.size();
  std::vector<double> sum(K, 0.0), sum2(K, 0.0);
  std::vector<int> cnt(K, 0);
  for (size_t r = 0; r < parts.dM.size(); ++r) {
    int i = parts.pair_subject[r];
    if (parts.weight[i] == 0.0) continue;
    int k = parts.pair_k[r];
    // centered residual at the preliminary root
    double resid = parts.Y[i] - parts.predY[r] -
                   (parts.basis[i][0] - parts.predB1[r]) * parts.psi_ref[0] -
                   (parts.basis[i][1] - parts.predB2[r]) * parts.psi_ref[1];
    sum[k] += resid;
    sum2[k] += resid * resid;
    ++cnt[k];
  }
  std::vector<double> v(K, 1.0);
  for (size_t k = 0; k < K; ++k) {
    if (cnt[k] < min_at_risk) {
      if (fallback) *fallback = true;
      continue;
    }
    double m = sum[k] / cnt[k];
    double var = (sum2[k] - cnt[k] * m * m) / (cnt[k] - 1);
    v[k] = std::max(var, var_floor);
  }
  return v;
}

namespace {

// inverse of the variances, for the weighted assembly
std::vector<double> invert_scale(const std::vector<double>& v) {
  std::vector<double> inv(v.size());
  for (size_t k = 0; k < v.size(); ++k) inv[k] = 1.0 / v[k];
  return inv;
}

}  // namespace

ContinuousModel fit_continuous(const std::vector<SubjectRecord>& subjects,
                               const StudyConfig& config,
                               const PipelineOptions& opts) {
  const double tau = config.tau;
  validate_dataset(subjects, tau);
  const int n = static_cast<int>(subjects.size());

  bool any_censored = false;
  for (const auto& s : subjects)
    if (!s.uncensored) any_censored = true;
  if (any_censored && !opts.censoring)
    throw DataError(
        "dataset contains censored subjects; enable censoring handling");

  ContinuousModel model;

  auto rows_T = to_risk_rows(subjects, config.treatment_spec, tau,
                             Process::treatment);
  model.fit_treatment = fit_cox(rows_T, opts.cox);
  if (!model.fit_treatment.converged)
    throw FitError(model.fit_treatment.separation
                       ? "separation in the initiation hazard fit"
                       : "initiation hazard fit did not converge");

  // per-subject ranges into rows_T (subjects emit contiguous blocks)
  std::vector<std::pair<size_t, size_t>> row_range(n);
  {
    size_t r = 0;
    for (int i = 0; i < n; ++i) {
      size_t begin = r;
      while (r < rows_T.size() && rows_T[r].subject_id == subjects[i].id) ++r;
      row_range[i] = {begin, r};
    }
  }

  // censoring weights
  std::vector<double> w(n, 1.0);
  if (opts.censoring && any_censored) {
    auto rows_C = to_risk_rows(subjects, config.censoring_spec, tau,
                               Process::censoring);
    CoxFit fc = fit_cox(rows_C, opts.cox);
    if (!fc.converged)
      throw FitError(fc.separation
                         ? "separation in the censoring hazard fit"
                         : "censoring hazard fit did not converge");
    for (int i = 0; i < n; ++i) {
      if (!subjects[i].uncensored) {
        w[i] = 0.0;
        continue;
      }
      double surv =
          censoring_survival(fc, subjects[i].traj, config.censoring_spec, tau,
                             opts.kc_floor, &model.kc_clamp_count);
      w[i] = 1.0 / surv;
    }
    model.fit_censoring = std::move(fc);
  } else {
    for (int i = 0; i < n; ++i)
      if (!subjects[i].uncensored) w[i] = 0.0;
  }

  const auto& grid = model.fit_treatment.event_times;
  if (!grid.empty() && grid.back() > tau + 1e-12)
    throw DataError("initiation event beyond tau");

  // subjects entering the estimating function
  std::vector<int> eligible;
  for (int i = 0; i < n; ++i)
    if (w[i] > 0.0) eligible.push_back(i);
  std::vector<SubjectRecord> elig_subjects;
  elig_subjects.reserve(eligible.size());
  for (int i : eligible) elig_subjects.push_back(subjects[i]);

  // pooled at-risk design over the event grid; rows double as the
  // (subject, event time) pairs of the estimating function
  AtRiskDesign design = build_at_risk_design(
      elig_subjects, grid, config.outcome_spec, tau, Restriction::at_risk,
      [](const SubjectRecord& s) { return s.treated ? 1.0 : 0.0; });

  EstimationParts& parts = model.parts;
  parts.n = n;
  parts.grid = grid;
  parts.weight = w;
  parts.Y.assign(n, 0.0);
  parts.basis.assign(n, Eigen::Vector2d::Zero());
  for (int i = 0; i < n; ++i) {
    parts.Y[i] = subjects[i].uncensored ? subjects[i].outcome : 0.0;
    if (subjects[i].treated)
      parts.basis[i] = blip_basis(subjects[i].treatment_time, tau);
  }

  const size_t R = design.rows.size();
  parts.pair_subject.resize(R);
  parts.pair_k.resize(R);
  parts.dM.resize(R);
  size_t r = 0;
  for (size_t e = 0; e < eligible.size(); ++e) {
    int i = eligible[e];
    auto [lo, hi] = row_range[i];
    std::vector<RiskRow> sub(rows_T.begin() + lo, rows_T.begin() + hi);
    auto dm = martingale_increments(model.fit_treatment, sub);
    for (const auto& [k, val] : dm) {
      if (r >= R || design.rows[r].first != static_cast<int>(e) ||
          design.rows[r].second != k)
        throw FitError("internal: design rows and martingale support differ");
      parts.pair_subject[r] = i;
      parts.pair_k[r] = k;
      parts.dM[r] = val;
      ++r;
    }
  }
  if (r != R)
    throw FitError("internal: design rows and martingale support differ");

  // nuisance models for the weight function
  model.prob_by_tau = fit_logistic(design.X, design.y);
  if (!model.prob_by_tau.converged)
    throw FitError("initiation-by-tau model did not converge");

  std::vector<long> treated_rows;
  for (size_t q = 0; q < R; ++q)
    if (elig_subjects[design.rows[q].first].treated)
      treated_rows.push_back(static_cast<long>(q));
  if (treated_rows.empty())
    throw FitError("no treated subjects available for the duration models");
  Eigen::MatrixXd Xtr(treated_rows.size(), design.X.cols());
  Eigen::VectorXd ydur(treated_rows.size()), ytdur(treated_rows.size());
  for (size_t q = 0; q < treated_rows.size(); ++q) {
    long src = treated_rows[q];
    Xtr.row(static_cast<long>(q)) = design.X.row(src);
    double T = elig_subjects[design.rows[src].first].treatment_time;
    ydur[static_cast<long>(q)] = tau - T;
    ytdur[static_cast<long>(q)] = T * (tau - T);
  }
  model.dur_model = fit_ols_normal(Xtr, ydur);
  model.tdur_model = fit_ols_normal(Xtr, ytdur);

  Eigen::VectorXd phat =
      (1.0 + (-(design.X * model.prob_by_tau.coef).array()).exp()).inverse();
  Eigen::VectorXd edur = design.X * model.dur_model.coef;
  Eigen::VectorXd etdur = design.X * model.tdur_model.coef;
  parts.c1.resize(R);
  parts.c2.resize(R);
  for (size_t q = 0; q < R; ++q) {
    double u = grid[design.rows[q].second];
    Eigen::Vector2d c = c_weight(u, tau, phat[q], edur[q], etdur[q]);
    parts.c1[q] = c[0];
    parts.c2[q] = c[1];
  }

  // stage 1: no outcome model
  parts.predY.assign(R, 0.0);
  parts.predB1.assign(R, 0.0);
  parts.predB2.assign(R, 0.0);
  model.psi_preliminary = solve_psi(assemble_system(parts, false));
  parts.psi_ref = model.psi_preliminary;

  // stage 2: componentwise outcome regressions, so the centering of
  // H(psi) = Y - basis'psi tracks psi through the linear system
  Eigen::VectorXd yY(R), yB1(R), yB2(R);
  for (size_t q = 0; q < R; ++q) {
    int i = parts.pair_subject[q];
    yY[static_cast<long>(q)] = parts.Y[i];
    yB1[static_cast<long>(q)] = parts.basis[i][0];
    yB2[static_cast<long>(q)] = parts.basis[i][1];
  }
  model.outcome_y_model = fit_ols_normal(design.X, yY);
  model.outcome_b1_model = fit_ols_normal(design.X, yB1);
  model.outcome_b2_model = fit_ols_normal(design.X, yB2);
  Eigen::VectorXd pY = design.X * model.outcome_y_model.coef;
  Eigen::VectorXd pB1 = design.X * model.outcome_b1_model.coef;
  Eigen::VectorXd pB2 = design.X * model.outcome_b2_model.coef;
  for (size_t q = 0; q < R; ++q) {
    parts.predY[q] = pY[static_cast<long>(q)];
    parts.predB1[q] = pB1[static_cast<long>(q)];
    parts.predB2[q] = pB2[static_cast<long>(q)];
  }

  return model;
}

namespace {

struct PointResult {
  std::vector<Eigen::Vector2d> psi;  // aligned with requested estimators
  int kc_clamp_count = 0;
  bool variance_fallback = false;
};

PointResult compute_point(const std::vector<SubjectRecord>& subjects,
                          const StudyConfig& config,
                          const PipelineOptions& opts, CoxFit* fit_T,
                          std::optional<CoxFit>* fit_C) {
  bool need_continuous = false;
  bool need_discrete = false;
  for (Estimator e : opts.estimators)
    (e == Estimator::discrete_g ? need_discrete : need_continuous) = true;

  PointResult out;
  out.psi.resize(opts.estimators.size());

  // the discrete comparator reuses the censoring weights, so the
  // continuous stage runs whenever weights are needed
  ContinuousModel model = fit_continuous(subjects, config, opts);
  out.kc_clamp_count = model.kc_clamp_count;
  if (fit_T) *fit_T = model.fit_treatment;
  if (fit_C) *fit_C = model.fit_censoring;
  (void)need_continuous;

  Eigen::Vector2d psi_cont1, psi_cont2;
  bool have_cont1 = false, have_cont2 = false;
  for (size_t j = 0; j < opts.estimators.size(); ++j) {
    switch (opts.estimators[j]) {
      case Estimator::preliminary:
        out.psi[j] = model.psi_preliminary;
        break;
      case Estimator::cont1:
        if (!have_cont1) {
          psi_cont1 = solve_psi(assemble_system(model.parts, true));
          have_cont1 = true;
        }
        out.psi[j] = psi_cont1;
        break;
      case Estimator::cont2: {
        if (!have_cont2) {
          bool fb = false;
          auto v = event_time_variances(model.parts, opts.var_min_at_risk,
                                        opts.var_floor, &fb);
          out.variance_fallback = out.variance_fallback || fb;
          auto inv = invert_scale(v);
          psi_cont2 = solve_psi(assemble_system(model.parts, true, &inv));
          have_cont2 = true;
        }
        out.psi[j] = psi_cont2;
        break;
      }
      case Estimator::discrete_g: {
        DiscreteData dd = discretize(subjects, model.parts.weight,
                                     config.outcome_spec, config.tau,
                                     opts.n_bins);
        DiscreteFit df = g_estimate_discrete(dd);
        out.psi[j] = df.psi;
        break;
      }
    }
  }
  (void)need_discrete;
  return out;
}

}  // namespace

PipelineResult estimate_pipeline(const std::vector<SubjectRecord>& subjects,
                                 const StudyConfig& config,
                                 const PipelineOptions& opts) {
  PipelineResult res;
  std::optional<CoxFit> fit_C;
  CoxFit fit_T;
  PointResult point = compute_point(subjects, config, opts, &fit_T, &fit_C);
  res.treatment_fit = std::move(fit_T);
  res.censoring_fit = std::move(fit_C);
  res.kc_clamp_count = point.kc_clamp_count;
  res.variance_fallback = point.variance_fallback;

  const size_t m = opts.estimators.size();
  res.estimates.resize(m);
  for (size_t j = 0; j < m; ++j) {
    res.estimates[j].tag = estimator_tag(opts.estimators[j]);
    res.estimates[j].psi = point.psi[j];
  }

  const int B = opts.bootstrap;
  if (B <= 0) return res;
  if (B < 2) throw ConfigError("bootstrap needs at least 2 resamples");

  const int n = static_cast<int>(subjects.size());
  std::vector<std::vector<Eigen::Vector2d>> boot(B);
  std::vector<char> ok(B, 0);
  Rng root(opts.seed);

  parallel_for(static_cast<size_t>(B), opts.threads, [&](size_t b) {
    Rng rng = root.stream(kBootstrapStream + b);
    std::vector<SubjectRecord> resampled;
    resampled.reserve(n);
    for (int i = 0; i < n; ++i) {
      int idx = std::min(n - 1, static_cast<int>(rng.uniform() * n));
      resampled.push_back(subjects[idx]);
      resampled.back().id = i;
    }
    try {
      PointResult pr = compute_point(resampled, config, opts, nullptr, nullptr);
      boot[b] = std::move(pr.psi);
      ok[b] = 1;
    } catch (const std::exception&) {
      ok[b] = 0;
    }
  });

  int good = 0;
  for (int b = 0; b < B; ++b)
    if (ok[b]) ++good;
  res.failed_bootstrap = B - good;
  if (res.failed_bootstrap * 10 > B)
    throw FitError("more than 10% of bootstrap resamples failed (" +
                   std::to_string(res.failed_bootstrap) + "/" +
                   std::to_string(B) + ")");
  if (good < 2) throw FitError("too few successful bootstrap resamples");

  for (size_t j = 0; j < m; ++j) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int b = 0; b < B; ++b)
      if (ok[b]) mean += boot[b][j];
    mean /= good;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (int b = 0; b < B; ++b)
      if (ok[b]) {
        Eigen::Vector2d d = boot[b][j] - mean;
        cov += d * d.transpose();
      }
    cov /= good - 1;
    auto& est = res.estimates[j];
    est.cov = cov;
    est.n_bootstrap = good;
    est.has_ci = true;
    for (int q = 0; q < 2; ++q) {
      double se = std::sqrt(std::max(cov(q, q), 0.0));
      est.ci_lower[q] = est.psi[q] - 1.96 * se;
      est.ci_upper[q] = est.psi[q] + 1.96 * se;
    }
  }
  return res;
}

namespace {

double wald_p(double est, double se) {
  if (!(se > 0.0)) return kNaN;
  return std::erfc(std::abs(est / se) / std::sqrt(2.0));
}

}  // namespace

std::string results_table_csv(const PipelineResult& res) {
  std::ostringstream os;
  os << "estimator,parameter,estimate,se,ci_lower,ci_upper,p\n";
  for (const auto& e : res.estimates) {
    for (int q = 0; q < 2; ++q) {
      double se = e.has_ci ? std::sqrt(std::max(e.cov(q, q), 0.0)) : kNaN;
      os << e.tag << ",psi" << (q + 1) << ',' << format_double(e.psi[q]) << ','
         << format_double(se) << ','
         << format_double(e.has_ci ? e.ci_lower[q] : kNaN) << ','
         << format_double(e.has_ci ? e.ci_upper[q] : kNaN) << ','
         << format_double(e.has_ci ? wald_p(e.psi[q], se) : kNaN) << '\n';
    }
  }
  return os.str();
}

std::string results_table_text(const PipelineResult& res) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %-5s %10s %9s %10s %10s %8s\n",
                "method", "par", "est", "se", "lower.95", "upper.95", "p");
  os << buf;
  for (const auto& e : res.estimates) {
    for (int q = 0; q < 2; ++q) {
      double se = e.has_ci ? std::sqrt(std::max(e.cov(q, q), 0.0)) : kNaN;
      std::snprintf(buf, sizeof buf,
                    "%-12s psi%-2d %10.4f %9.4f %10.4f %10.4f %8.4f\n",
                    e.tag.c_str(), q + 1, e.psi[q], se,
                    e.has_ci ? e.ci_lower[q] : kNaN,
                    e.has_ci ? e.ci_upper[q] : kNaN,
                    e.has_ci ? wald_p(e.psi[q], se) : kNaN);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace ctsnmm
