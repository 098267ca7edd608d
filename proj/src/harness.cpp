#include "ctsnmm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "ctsnmm/parallel.hpp"

namespace ctsnmm {

namespace {

struct RepOutcome {
  bool ok = false;
  std::vector<Eigen::Vector2d> psi;
  std::vector<std::array<bool, 2>> covered;  // valid when has_ci
  bool has_ci = false;
};

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  if (cfg.replicates < 1) throw ConfigError("need at least one replicate");
  StudyConfig study = default_study_config(cfg.gen.tau, cfg.misspec_treatment,
                                           cfg.misspec_censoring);
  PipelineOptions opts;
  opts.censoring = cfg.gen.censoring;
  opts.estimators = cfg.estimators;
  opts.bootstrap = cfg.bootstrap;
  opts.threads = 1;  // parallelism lives at the replicate level

  const size_t m = cfg.estimators.size();
  std::vector<RepOutcome> reps(cfg.replicates);

  parallel_for(static_cast<size_t>(cfg.replicates), cfg.threads,
               [&](size_t r) {
    GenConfig gen = cfg.gen;
    gen.seed = Rng::derive(cfg.seed, kReplicateStream + r);
    PipelineOptions o = opts;
    o.seed = Rng::derive(gen.seed, kBootstrapStream);
    RepOutcome& out = reps[r];
    try {
      auto data = gen_dataset(gen);
      PipelineResult res = estimate_pipeline(data, study, o);
      out.psi.resize(m);
      out.covered.resize(m);
      out.has_ci = cfg.bootstrap > 0;
      for (size_t j = 0; j < m; ++j) {
        out.psi[j] = res.estimates[j].psi;
        for (int q = 0; q < 2; ++q)
          out.covered[j][q] = res.estimates[j].has_ci &&
                              res.estimates[j].ci_lower[q] <= gen.psi_true[q] &&
                              gen.psi_true[q] <= res.estimates[j].ci_upper[q];
      }
      out.ok = true;
    } catch (const std::exception&) {
      out.ok = false;
    }
  });

  ScenarioResult result;
  for (size_t j = 0; j < m; ++j) {
    McSummary s;
    s.scenario = cfg.name;
    s.estimator = estimator_tag(cfg.estimators[j]);
    s.n = cfg.gen.n;
    s.bootstrap = cfg.bootstrap;
    int ok = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& rep : reps)
      if (rep.ok) {
        ++ok;
        mean += rep.psi[j];
      }
    s.replicates = ok;
    s.failures = cfg.replicates - ok;
    if (ok > 0) {
      mean /= ok;
      Eigen::Vector2d ss = Eigen::Vector2d::Zero();
      std::array<int, 2> cov_hits{0, 0};
      for (const auto& rep : reps)
        if (rep.ok) {
          Eigen::Vector2d d = rep.psi[j] - mean;
          ss += d.cwiseProduct(d);
          for (int q = 0; q < 2; ++q)
            if (rep.covered[j][q]) ++cov_hits[q];
        }
      s.has_coverage = cfg.bootstrap > 0;
      for (int q = 0; q < 2; ++q) {
        s.bias[q] = mean[q] - cfg.gen.psi_true[q];
        s.mc_se[q] = ok > 1 ? std::sqrt(ss[q] / (ok - 1)) : kNaN;
        s.rmse[q] = ok > 1 ? std::sqrt(s.bias[q] * s.bias[q] +
                                       s.mc_se[q] * s.mc_se[q])
                           : kNaN;
        if (s.has_coverage) {
          double c = static_cast<double>(cov_hits[q]) / ok;
          s.coverage[q] = c;
          s.coverage_se[q] = std::sqrt(c * (1.0 - c) / ok);
        } else {
          s.coverage[q] = kNaN;
          s.coverage_se[q] = kNaN;
        }
      }
    } else {
      for (int q = 0; q < 2; ++q)
        s.bias[q] = s.mc_se[q] = s.rmse[q] = s.coverage[q] = s.coverage_se[q] =
            kNaN;
    }
    if (s.failures * 20 > cfg.replicates) result.flagged = true;
    result.summaries.push_back(std::move(s));
  }
  return result;
}

std::string emit_table_text(const std::vector<McSummary>& summaries) {
  std::ostringstream os;
  char buf[256];
  std::string current;
  auto cell = [](double v, double scale) {
    char b[32];
    if (std::isnan(v))
      std::snprintf(b, sizeof b, "%7s", "-");
    else
      std::snprintf(b, sizeof b, "%7.1f", v * scale);
    return std::string(b);
  };
  for (const auto& s : summaries) {
    if (s.scenario != current) {
      current = s.scenario;
      std::snprintf(buf, sizeof buf,
                    "scenario %s  (n=%d, bootstrap=%d)\n", current.c_str(),
                    s.n, s.bootstrap);
      os << (os.tellp() > 0 ? "\n" : "") << buf;
      os << "values x100"
         << "                 ---------- psi1 ----------- "
         << "---------- psi2 -----------\n";
      std::snprintf(buf, sizeof buf, "%-12s %5s %5s %7s %7s %7s %7s %7s %7s %7s %7s\n",
                    "method", "reps", "fail", "bias", "mc_se", "rmse", "cover",
                    "bias", "mc_se", "rmse", "cover");
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-12s %5d %5d", s.estimator.c_str(),
                  s.replicates, s.failures);
    os << buf;
    for (int q = 0; q < 2; ++q)
      os << ' ' << cell(s.bias[q], 100) << ' ' << cell(s.mc_se[q], 100) << ' '
         << cell(s.rmse[q], 100) << ' ' << cell(s.coverage[q], 100);
    os << '\n';
  }
  return os.str();
}

std::string emit_table_csv(const std::vector<McSummary>& summaries) {
  std::ostringstream os;
  os << "scenario,estimator,parameter,n,bootstrap,replicates,failures,bias,"
        "mc_se,rmse,coverage,coverage_se\n";
  for (const auto& s : summaries)
    for (int q = 0; q < 2; ++q)
      os << s.scenario << ',' << s.estimator << ",psi" << (q + 1) << ',' << s.n
         << ',' << s.bootstrap << ',' << s.replicates << ',' << s.failures
         << ',' << format_double(s.bias[q]) << ',' << format_double(s.mc_se[q])
         << ',' << format_double(s.rmse[q]) << ','
         << format_double(s.coverage[q]) << ','
         << format_double(s.coverage_se[q]) << '\n';
  return os.str();
}

std::vector<McSummary> parse_table_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) ||
      line != "scenario,estimator,parameter,n,bootstrap,replicates,failures,"
              "bias,mc_se,rmse,coverage,coverage_se")
    throw SchemaError("unexpected summary csv header");
  std::vector<McSummary> out;
  auto num = [](const std::string& tok) {
    if (tok.empty()) return kNaN;
    return std::stod(tok);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> tok;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        tok.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    tok.push_back(cur);
    if (tok.size() != 12) throw SchemaError("bad summary csv row");
    int q = tok[2] == "psi1" ? 0 : 1;
    if (q == 0) {
      McSummary s;
      s.scenario = tok[0];
      s.estimator = tok[1];
      s.n = std::stoi(tok[3]);
      s.bootstrap = std::stoi(tok[4]);
      s.replicates = std::stoi(tok[5]);
      s.failures = std::stoi(tok[6]);
      out.push_back(std::move(s));
    }
    McSummary& s = out.back();
    s.bias[q] = num(tok[7]);
    s.mc_se[q] = num(tok[8]);
    s.rmse[q] = num(tok[9]);
    s.coverage[q] = num(tok[10]);
    s.coverage_se[q] = num(tok[11]);
    s.has_coverage = s.has_coverage || !std::isnan(s.coverage[q]);
  }
  return out;
}

}  // namespace ctsnmm
