#include "ctsnmm/regression.hpp"

#include <cmath>

namespace ctsnmm {

LinearFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw FitError("design/response size mismatch");
  if (X.rows() == 0) throw FitError("empty regression design");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  LinearFit fit;
  fit.coef = cod.solve(y);
  fit.rank = static_cast<int>(cod.rank());
  fit.rank_deficient = fit.rank < X.cols();
  double ssr = (y - X * fit.coef).squaredNorm();
  long dof = X.rows() - fit.rank;
  fit.sigma2 = dof > 0 ? ssr / static_cast<double>(dof) : 0.0;
  return fit;
}

LinearFit fit_ols_normal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw FitError("design/response size mismatch");
  if (X.rows() == 0) throw FitError("empty regression design");
  const auto p = X.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
  G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  Eigen::VectorXd Xty = X.transpose() * y;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  double emax = es.eigenvalues().maxCoeff();
  double cut = 1e-10 * std::max(emax, 1e-300);
  LinearFit fit;
  Eigen::VectorXd inv = es.eigenvalues().unaryExpr(
      [&](double v) { return v > cut ? 1.0 / v : 0.0; });
  fit.coef = es.eigenvectors() * inv.asDiagonal() *
             es.eigenvectors().transpose() * Xty;
  fit.rank = static_cast<int>((es.eigenvalues().array() > cut).count());
  fit.rank_deficient = fit.rank < p;
  double ssr = y.squaredNorm() - 2.0 * fit.coef.dot(Xty) +
               fit.coef.dot(G * fit.coef);
  long dof = X.rows() - fit.rank;
  fit.sigma2 = dof > 0 ? std::max(ssr, 0.0) / static_cast<double>(dof) : 0.0;
  return fit;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const LogisticOptions& opt) {
  const auto n = X.rows();
  if (n != y.size()) throw FitError("design/response size mismatch");
  if (n == 0) throw FitError("empty regression design");
  bool any0 = false, any1 = false;
  for (long i = 0; i < n; ++i) {
    if (y[i] == 0.0)
      any0 = true;
    else if (y[i] == 1.0)
      any1 = true;
    else
      throw FitError("logistic response must be 0/1");
  }
  if (!any0 || !any1)
    throw FitError("logistic response has a single class");

  const auto p = X.cols();
  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);

  auto loglik_of = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = X * b;
    double ll = 0.0;
    for (long i = 0; i < n; ++i) {
      // log(sigmoid) forms that stay finite for large |eta|
      double e = eta[i];
      ll += y[i] * e - (e > 30 ? e : std::log1p(std::exp(e)));
    }
    return ll;
  };

  double ll = loglik_of(beta);
  for (int it = 0; it < opt.max_iter; ++it) {
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse().matrix();
    Eigen::VectorXd score = X.transpose() * (y - mu);
    if (score.cwiseAbs().maxCoeff() <= opt.tol) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    if (es.eigenvalues().minCoeff() <=
        1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw FitError("singular information matrix in logistic fit");
    Eigen::VectorXd delta = es.eigenvectors() *
                            es.eigenvalues().cwiseInverse().asDiagonal() *
                            es.eigenvectors().transpose() * score;
    double step = 1.0;
    bool accepted = false;
    double ll_before = ll;
    for (int h = 0; h < 30; ++h) {
      Eigen::VectorXd cand = beta + step * delta;
      double ll2 = loglik_of(cand);
      if (ll2 >= ll - 1e-12) {
        beta = cand;
        ll = ll2;
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
    // on large pooled designs the score tolerance sits below the summation
    // noise floor; a stagnant likelihood at an interior point is the
    // numerical optimum
    if (std::abs(ll - ll_before) <= 1e-11 * (1.0 + std::abs(ll))) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && !fit.separation) {
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse().matrix();
    if ((X.transpose() * (y - mu)).cwiseAbs().maxCoeff() <= opt.tol)
      fit.converged = true;
  }
  fit.coef = beta;
  fit.loglik = ll;
  return fit;
}

Eigen::VectorXd interaction_features(double u, const Eigen::VectorXd& z) {
  const int m = 1 + static_cast<int>(z.size());
  const int cols = 1 << m;
  Eigen::VectorXd out(cols);
  for (int mask = 0; mask < cols; ++mask) {
    double v = 1.0;
    if (mask & 1) v *= u;
    for (int j = 1; j < m; ++j)
      if (mask & (1 << j)) v *= z[j - 1];
    out[mask] = v;
  }
  return out;
}

std::vector<std::string> interaction_feature_names(
    const std::vector<std::string>& z_names) {
  const int m = 1 + static_cast<int>(z_names.size());
  std::vector<std::string> out;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::string name;
    if (mask & 1) name = "u";
    for (int j = 1; j < m; ++j)
      if (mask & (1 << j))
        name += (name.empty() ? "" : "*") + z_names[j - 1];
    out.push_back(name.empty() ? "1" : name);
  }
  return out;
}

AtRiskDesign build_at_risk_design(
    const std::vector<SubjectRecord>& subjects, const std::vector<double>& grid,
    const CovariateSpec& spec, double tau, Restriction restriction,
    const std::function<double(const SubjectRecord&)>& response) {
  std::vector<std::pair<int, int>> idx;
  for (size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    double T = s.treated ? s.treatment_time : kInf;
    for (size_t k = 0; k < grid.size(); ++k) {
      double u = grid[k];
      bool keep = restriction == Restriction::at_risk
                      ? T >= u
                      : (s.treated && u <= T && T <= tau);
      if (keep) idx.emplace_back(static_cast<int>(i), static_cast<int>(k));
    }
  }
  const int cols = 1 << (1 + spec.dim());
  AtRiskDesign d;
  d.X.resize(static_cast<long>(idx.size()), cols);
  d.y.resize(static_cast<long>(idx.size()));
  d.rows = std::move(idx);
  for (size_t r = 0; r < d.rows.size(); ++r) {
    const auto& s = subjects[d.rows[r].first];
    double u = grid[d.rows[r].second];
    d.X.row(static_cast<long>(r)) =
        interaction_features(u, spec.eval(s.traj, u)).transpose();
    d.y[static_cast<long>(r)] = response(s);
  }
  return d;
}

}  // namespace ctsnmm
