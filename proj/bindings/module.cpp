// python bindings for the main operations: dataset generation, CSV round
// trips, the estimation pipeline and the Monte Carlo scenario runner. Model
// feature recipes follow the generated columns (one binary baseline
// covariate, one time-dependent covariate); the CLI exposes full recipe
// control for external data.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctsnmm/harness.hpp"
#include "ctsnmm/snmm.hpp"

namespace py = pybind11;
using namespace ctsnmm;

namespace {

struct DatasetHandle {
  std::vector<SubjectRecord> subjects;
};

GenConfig make_gen(int n, std::uint64_t seed, bool censoring, double tau,
                   double lambda_T0, double alpha1, double alpha2,
                   std::pair<double, double> psi_true, double bernoulli_p,
                   double ar_rho, double lambda_C0, double eta1, double eta2,
                   std::vector<double> knots) {
  GenConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.censoring = censoring;
  cfg.tau = tau;
  cfg.lambda_T0 = lambda_T0;
  cfg.alpha1 = alpha1;
  cfg.alpha2 = alpha2;
  cfg.psi_true = Eigen::Vector2d(psi_true.first, psi_true.second);
  cfg.bernoulli_p = bernoulli_p;
  cfg.ar_rho = ar_rho;
  cfg.lambda_C0 = lambda_C0;
  cfg.eta1 = eta1;
  cfg.eta2 = eta2;
  cfg.knots = std::move(knots);
  return cfg;
}

std::vector<Estimator> to_estimators(const std::vector<std::string>& tags) {
  std::vector<Estimator> out;
  for (const auto& t : tags) out.push_back(estimator_from_tag(t));
  return out;
}

py::dict estimate_to_dict(const PipelineResult& res) {
  py::list estimates;
  for (const auto& e : res.estimates) {
    py::dict d;
    d["estimator"] = e.tag;
    d["psi"] = py::make_tuple(e.psi[0], e.psi[1]);
    if (e.has_ci) {
      d["se"] = py::make_tuple(std::sqrt(std::max(e.cov(0, 0), 0.0)),
                               std::sqrt(std::max(e.cov(1, 1), 0.0)));
      d["ci_lower"] = py::make_tuple(e.ci_lower[0], e.ci_lower[1]);
      d["ci_upper"] = py::make_tuple(e.ci_upper[0], e.ci_upper[1]);
      d["n_bootstrap"] = e.n_bootstrap;
    } else {
      d["se"] = py::none();
      d["ci_lower"] = py::none();
      d["ci_upper"] = py::none();
      d["n_bootstrap"] = 0;
    }
    estimates.append(d);
  }
  py::dict out;
  out["estimates"] = estimates;
  std::vector<double> tc(res.treatment_fit.coef.begin(),
                         res.treatment_fit.coef.end());
  out["treatment_coef"] = tc;
  if (res.censoring_fit) {
    std::vector<double> cc(res.censoring_fit->coef.begin(),
                           res.censoring_fit->coef.end());
    out["censoring_coef"] = cc;
  } else {
    out["censoring_coef"] = py::none();
  }
  out["kc_clamp_count"] = res.kc_clamp_count;
  out["variance_fallback"] = res.variance_fallback;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "continuous-time structural nested mean model estimation on "
      "irregularly spaced longitudinal data";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
  py::register_exception<IdentificationError>(m, "IdentificationError",
                                              PyExc_RuntimeError);

  py::class_<DatasetHandle>(m, "Dataset")
      .def("__len__",
           [](const DatasetHandle& d) { return d.subjects.size(); })
      .def_property_readonly("n_treated",
                             [](const DatasetHandle& d) {
                               int k = 0;
                               for (const auto& s : d.subjects)
                                 if (s.treated) ++k;
                               return k;
                             })
      .def_property_readonly("n_censored", [](const DatasetHandle& d) {
        int k = 0;
        for (const auto& s : d.subjects)
          if (!s.uncensored) ++k;
        return k;
      });

  m.def(
      "generate_dataset",
      [](int n, std::uint64_t seed, bool censoring, double tau,
         double lambda_T0, double alpha1, double alpha2,
         std::pair<double, double> psi_true, double bernoulli_p, double ar_rho,
         double lambda_C0, double eta1, double eta2,
         std::vector<double> knots) {
        DatasetHandle d;
        d.subjects = gen_dataset(make_gen(
            n, seed, censoring, tau, lambda_T0, alpha1, alpha2, psi_true,
            bernoulli_p, ar_rho, lambda_C0, eta1, eta2, std::move(knots)));
        return d;
      },
      py::arg("n") = 1000, py::arg("seed") = 0, py::arg("censoring") = false,
      py::arg("tau") = 2.0, py::arg("lambda_T0") = 0.4,
      py::arg("alpha1") = 0.15, py::arg("alpha2") = 0.8,
      py::arg("psi_true") = std::pair<double, double>(15.0, -1.0),
      py::arg("bernoulli_p") = 0.55, py::arg("ar_rho") = 0.7,
      py::arg("lambda_C0") = 0.2, py::arg("eta1") = 0.2, py::arg("eta2") = 0.2,
      py::arg("knots") = std::vector<double>{0.0, 0.5, 1.0, 1.5},
      "Draw a seeded longitudinal dataset.");

  m.def(
      "write_csv",
      [](const DatasetHandle& d, const std::string& subjects_path,
         const std::string& trajectories_path) {
        write_subjects_csv(subjects_path, d.subjects);
        write_trajectories_csv(trajectories_path, d.subjects, kTiNames,
                               kTdNames);
      },
      py::arg("dataset"), py::arg("subjects_path"),
      py::arg("trajectories_path"),
      "Write the subject-level and trajectory CSV files.");

  m.def(
      "read_csv",
      [](const std::string& subjects_path,
         const std::string& trajectories_path, double tau) {
        DatasetHandle d;
        d.subjects = read_subjects_csv(subjects_path, tau);
        read_trajectories_csv(trajectories_path, kTiNames, kTdNames,
                              d.subjects);
        validate_dataset(d.subjects, tau);
        return d;
      },
      py::arg("subjects_path"), py::arg("trajectories_path"),
      py::arg("tau") = 2.0, "Read a dataset back from its CSV pair.");

  m.def(
      "estimate",
      [](const DatasetHandle& d, double tau, bool censoring,
         const std::vector<std::string>& estimators, int bootstrap,
         std::uint64_t seed, int threads, int n_bins, bool misspec_treatment,
         bool misspec_censoring) {
        StudyConfig study =
            default_study_config(tau, misspec_treatment, misspec_censoring);
        PipelineOptions opts;
        opts.censoring = censoring;
        opts.estimators = to_estimators(estimators);
        opts.bootstrap = bootstrap;
        opts.seed = seed;
        opts.threads = threads;
        opts.n_bins = n_bins;
        return estimate_to_dict(estimate_pipeline(d.subjects, study, opts));
      },
      py::arg("dataset"), py::arg("tau") = 2.0, py::arg("censoring") = false,
      py::arg("estimators") =
          std::vector<std::string>{"preliminary", "cont1", "cont2"},
      py::arg("bootstrap") = 0, py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("n_bins") = 24, py::arg("misspec_treatment") = false,
      py::arg("misspec_censoring") = false,
      "Run the estimation pipeline and return per-estimator results.");

  m.def(
      "run_scenario",
      [](const std::string& name, int n, int replicates, int bootstrap,
         std::uint64_t seed, bool censoring, bool misspec_treatment,
         bool misspec_censoring, const std::vector<std::string>& estimators,
         int threads) {
        ScenarioConfig cfg;
        cfg.name = name;
        cfg.gen.n = n;
        cfg.gen.censoring = censoring;
        cfg.replicates = replicates;
        cfg.bootstrap = bootstrap;
        cfg.seed = seed;
        cfg.misspec_treatment = misspec_treatment;
        cfg.misspec_censoring = misspec_censoring;
        cfg.estimators = to_estimators(estimators);
        cfg.threads = threads;
        ScenarioResult res = run_scenario(cfg);
        py::list summaries;
        for (const auto& s : res.summaries) {
          py::dict d;
          d["scenario"] = s.scenario;
          d["estimator"] = s.estimator;
          d["n"] = s.n;
          d["bootstrap"] = s.bootstrap;
          d["replicates"] = s.replicates;
          d["failures"] = s.failures;
          d["bias"] = py::make_tuple(s.bias[0], s.bias[1]);
          d["mc_se"] = py::make_tuple(s.mc_se[0], s.mc_se[1]);
          d["rmse"] = py::make_tuple(s.rmse[0], s.rmse[1]);
          if (s.has_coverage) {
            d["coverage"] = py::make_tuple(s.coverage[0], s.coverage[1]);
            d["coverage_se"] =
                py::make_tuple(s.coverage_se[0], s.coverage_se[1]);
          } else {
            d["coverage"] = py::none();
            d["coverage_se"] = py::none();
          }
          summaries.append(d);
        }
        py::dict out;
        out["summaries"] = summaries;
        out["flagged"] = res.flagged;
        return out;
      },
      py::arg("name") = "scenario", py::arg("n") = 1000,
      py::arg("replicates") = 200, py::arg("bootstrap") = 50,
      py::arg("seed") = 1, py::arg("censoring") = false,
      py::arg("misspec_treatment") = false,
      py::arg("misspec_censoring") = false,
      py::arg("estimators") = std::vector<std::string>{"preliminary", "cont1"},
      py::arg("threads") = 1,
      "Run a seeded Monte Carlo scenario and return its summaries.");
}
