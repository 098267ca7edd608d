// command line front end: scenario simulation, dataset analysis and raw
// dataset generation. JSON configs are validated strictly (unknown keys are
// rejected) and every output file is byte-deterministic for a given config.
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctsnmm/harness.hpp"
#include "ctsnmm/snmm.hpp"
#include "json.hpp"

using json = nlohmann::json;
using namespace ctsnmm;

namespace {

// exit codes follow sysexits where one applies
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;   // estimation failed
constexpr int kExitFlagged = 2;   // simulation finished but was flagged
constexpr int kExitConfig = 64;   // bad usage or config file
constexpr int kExitData = 65;     // malformed input data
constexpr int kExitIo = 74;       // file system failure

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json load_config(const std::string& path, const std::string& schema) {
  std::ifstream f(path);
  if (!f.good()) throw IoError("cannot open config file: " + path);
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!cfg.is_object() || !cfg.contains("schema") ||
      !cfg["schema"].is_string() || cfg["schema"] != schema)
    throw ConfigError("config must declare \"schema\": \"" + schema + "\"");
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f.good()) throw IoError("cannot write " + path.string());
  f << text;
  if (!f.good()) throw IoError("write failed for " + path.string());
}

std::filesystem::path prepare_out_dir(const std::string& out) {
  std::filesystem::path dir(out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + out);
  return dir;
}

GenConfig parse_generator(const json& g, const std::string& where) {
  require_keys(g, {"tau", "lambda_T0", "alpha1", "alpha2", "psi_true",
                   "bernoulli_p", "ar_rho", "lambda_C0", "eta1", "eta2",
                   "knots"},
               where);
  GenConfig cfg;
  cfg.tau = g.value("tau", cfg.tau);
  cfg.lambda_T0 = g.value("lambda_T0", cfg.lambda_T0);
  cfg.alpha1 = g.value("alpha1", cfg.alpha1);
  cfg.alpha2 = g.value("alpha2", cfg.alpha2);
  if (g.contains("psi_true")) {
    auto v = g["psi_true"].get<std::vector<double>>();
    if (v.size() != 2)
      throw ConfigError("psi_true must have two entries in " + where);
    cfg.psi_true = Eigen::Vector2d(v[0], v[1]);
  }
  cfg.bernoulli_p = g.value("bernoulli_p", cfg.bernoulli_p);
  cfg.ar_rho = g.value("ar_rho", cfg.ar_rho);
  cfg.lambda_C0 = g.value("lambda_C0", cfg.lambda_C0);
  cfg.eta1 = g.value("eta1", cfg.eta1);
  cfg.eta2 = g.value("eta2", cfg.eta2);
  if (g.contains("knots"))
    cfg.knots = g["knots"].get<std::vector<double>>();
  return cfg;
}

std::vector<Estimator> parse_estimators(const json& arr,
                                        const std::string& where) {
  if (!arr.is_array() || arr.empty())
    throw ConfigError("estimators must be a non-empty array in " + where);
  std::vector<Estimator> out;
  for (const auto& e : arr) out.push_back(estimator_from_tag(e.get<std::string>()));
  return out;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config, out;
  int threads = 1;
  std::optional<int> replicates, bootstrap;
  std::optional<std::uint64_t> seed;
  bool full = false;
};

int run_simulate(const SimulateArgs& args) {
  json cfg = load_config(args.config, "ctsnmm-simulate/1");
  require_keys(cfg, {"schema", "scenarios"}, "the simulate config");
  if (!cfg.contains("scenarios") || !cfg["scenarios"].is_array() ||
      cfg["scenarios"].empty())
    throw ConfigError("simulate config needs a non-empty scenarios array");

  std::vector<ScenarioConfig> scenarios;
  for (const auto& s : cfg["scenarios"]) {
    const std::string where =
        "scenario '" + s.value("name", std::string("?")) + "'";
    require_keys(s, {"name", "n", "censoring", "misspec_treatment",
                     "misspec_censoring", "estimators", "replicates",
                     "bootstrap", "seed", "generator"},
                 where);
    ScenarioConfig sc;
    if (!s.contains("name") || !s["name"].is_string())
      throw ConfigError("every scenario needs a string name");
    sc.name = s["name"].get<std::string>();
    if (s.contains("generator"))
      sc.gen = parse_generator(s["generator"], where);
    sc.gen.n = s.value("n", sc.gen.n);
    sc.gen.censoring = s.value("censoring", sc.gen.censoring);
    sc.misspec_treatment = s.value("misspec_treatment", false);
    sc.misspec_censoring = s.value("misspec_censoring", false);
    if (s.contains("estimators"))
      sc.estimators = parse_estimators(s["estimators"], where);
    sc.replicates = s.value("replicates", sc.replicates);
    sc.bootstrap = s.value("bootstrap", sc.bootstrap);
    sc.seed = s.value("seed", sc.seed);

    if (args.full) {
      sc.replicates = 1000;
      sc.bootstrap = sc.bootstrap > 0 ? 100 : 0;
    }
    if (args.replicates) sc.replicates = *args.replicates;
    if (args.bootstrap) sc.bootstrap = *args.bootstrap;
    if (args.seed) sc.seed = *args.seed;
    sc.threads = args.threads;
    if (sc.gen.n < 2) throw ConfigError("scenario n must be at least 2");
    if (sc.replicates < 1)
      throw ConfigError("scenario replicates must be at least 1");
    scenarios.push_back(std::move(sc));
  }
  {
    std::vector<std::string> names;
    for (const auto& sc : scenarios) names.push_back(sc.name);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw ConfigError("scenario names must be unique");
  }

  auto dir = prepare_out_dir(args.out);
  std::vector<McSummary> all;
  bool flagged = false;
  for (const auto& sc : scenarios) {
    ScenarioResult res = run_scenario(sc);
    flagged = flagged || res.flagged;
    write_file(dir / (sc.name + ".csv"), emit_table_csv(res.summaries));
    all.insert(all.end(), res.summaries.begin(), res.summaries.end());
    std::cerr << "scenario " << sc.name << " done ("
              << res.summaries.front().replicates << " replicates";
    if (res.flagged) std::cerr << ", flagged";
    std::cerr << ")\n";
  }
  write_file(dir / "report.csv", emit_table_csv(all));
  write_file(dir / "report.txt", emit_table_text(all));
  std::cout << emit_table_text(all);
  return flagged ? kExitFlagged : kExitOk;
}

// ---- analyze ----------------------------------------------------------------

CovariateSpec parse_model_spec(const json& m,
                               const std::vector<std::string>& ti_names,
                               const std::vector<std::string>& td_names,
                               const std::string& where) {
  require_keys(m, {"covariates", "days_since_last_visit", "first_visit_flag",
                   "second_visit_flag"},
               where);
  CovariateSpec spec;
  if (!m.contains("covariates") || !m["covariates"].is_array())
    throw ConfigError(where + " needs a covariates array");
  for (const auto& c : m["covariates"]) {
    std::string name = c.get<std::string>();
    auto ti = std::find(ti_names.begin(), ti_names.end(), name);
    auto td = std::find(td_names.begin(), td_names.end(), name);
    if (ti != ti_names.end())
      spec.ti_indices.push_back(static_cast<int>(ti - ti_names.begin()));
    else if (td != td_names.end())
      spec.td_indices.push_back(static_cast<int>(td - td_names.begin()));
    else
      throw ConfigError("unknown covariate '" + name + "' in " + where);
  }
  spec.days_since_last_visit = m.value("days_since_last_visit", false);
  spec.first_visit_flag = m.value("first_visit_flag", false);
  spec.second_visit_flag = m.value("second_visit_flag", false);
  return spec;
}

struct AnalyzeArgs {
  std::string config, out;
  int threads = 1;
  std::optional<int> bootstrap;
  std::optional<std::uint64_t> seed;
};

int run_analyze(const AnalyzeArgs& args) {
  json cfg = load_config(args.config, "ctsnmm-analyze/1");
  require_keys(cfg, {"schema", "subjects", "trajectories", "tau", "censoring",
                     "time_independent", "time_dependent", "models",
                     "estimators", "bootstrap", "seed", "n_bins"},
               "the analyze config");
  for (const char* key : {"subjects", "trajectories"})
    if (!cfg.contains(key) || !cfg[key].is_string())
      throw ConfigError(std::string("analyze config needs a string '") + key +
                        "' path");

  StudyConfig study;
  study.tau = cfg.value("tau", 2.0);
  if (!(study.tau > 0.0)) throw ConfigError("tau must be positive");

  std::vector<std::string> ti_names, td_names;
  if (cfg.contains("time_independent"))
    ti_names = cfg["time_independent"].get<std::vector<std::string>>();
  if (cfg.contains("time_dependent"))
    td_names = cfg["time_dependent"].get<std::vector<std::string>>();

  if (!cfg.contains("models") || !cfg["models"].is_object())
    throw ConfigError("analyze config needs a models object");
  const json& models = cfg["models"];
  require_keys(models, {"treatment", "censoring", "outcome"}, "models");
  for (const char* key : {"treatment", "censoring", "outcome"})
    if (!models.contains(key))
      throw ConfigError(std::string("models needs a '") + key + "' entry");
  study.treatment_spec = parse_model_spec(models["treatment"], ti_names,
                                          td_names, "the treatment model");
  study.censoring_spec = parse_model_spec(models["censoring"], ti_names,
                                          td_names, "the censoring model");
  study.outcome_spec = parse_model_spec(models["outcome"], ti_names, td_names,
                                        "the outcome model");

  PipelineOptions opts;
  opts.censoring = cfg.value("censoring", false);
  if (cfg.contains("estimators"))
    opts.estimators = parse_estimators(cfg["estimators"], "the analyze config");
  opts.bootstrap = cfg.value("bootstrap", 0);
  opts.seed = cfg.value("seed", std::uint64_t{0});
  opts.n_bins = cfg.value("n_bins", opts.n_bins);
  if (args.bootstrap) opts.bootstrap = *args.bootstrap;
  if (args.seed) opts.seed = *args.seed;
  opts.threads = args.threads;

  // data paths resolve relative to the config file
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_absolute()) return path;
    return std::filesystem::path(args.config).parent_path() / path;
  };
  auto subjects = read_subjects_csv(resolve(cfg["subjects"]).string(),
                                    study.tau);
  read_trajectories_csv(resolve(cfg["trajectories"]).string(), ti_names,
                        td_names, subjects);

  PipelineResult res = estimate_pipeline(subjects, study, opts);

  auto dir = prepare_out_dir(args.out);
  write_file(dir / "results.csv", results_table_csv(res));
  write_file(dir / "results.txt", results_table_text(res));
  write_file(dir / "treatment_model.csv",
             cox_summary_csv(res.treatment_fit,
                             study.treatment_spec.names(ti_names, td_names)));
  if (res.censoring_fit)
    write_file(dir / "censoring_model.csv",
               cox_summary_csv(*res.censoring_fit,
                               study.censoring_spec.names(ti_names, td_names)));
  std::cout << results_table_text(res);
  if (res.kc_clamp_count > 0)
    std::cerr << "note: " << res.kc_clamp_count
              << " censoring survival values were clamped at the floor\n";
  if (res.variance_fallback)
    std::cerr << "note: sparse event times fell back to unit variance "
                 "scaling\n";
  return kExitOk;
}

// ---- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
};

int run_generate(const GenerateArgs& args) {
  json cfg = load_config(args.config, "ctsnmm-generate/1");
  require_keys(cfg, {"schema", "n", "seed", "censoring", "generator"},
               "the generate config");
  GenConfig gen;
  if (cfg.contains("generator"))
    gen = parse_generator(cfg["generator"], "the generate config");
  gen.n = cfg.value("n", gen.n);
  gen.censoring = cfg.value("censoring", gen.censoring);
  gen.seed = cfg.value("seed", std::uint64_t{0});
  if (args.n) gen.n = *args.n;
  if (args.seed) gen.seed = *args.seed;
  if (gen.n < 1) throw ConfigError("n must be positive");

  auto subjects = gen_dataset(gen);
  auto dir = prepare_out_dir(args.out);
  write_subjects_csv((dir / "subjects.csv").string(), subjects);
  write_trajectories_csv((dir / "trajectories.csv").string(), subjects,
                         kTiNames, kTdNames);
  std::cerr << "wrote " << subjects.size() << " subjects to " << dir.string()
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "continuous-time structural nested mean model estimation on "
      "irregularly spaced longitudinal data"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand(
      "simulate", "run seeded Monte Carlo scenarios and tabulate them");
  simulate->add_option("--config", sim.config, "scenario config (JSON)")
      ->required();
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--threads", sim.threads, "worker threads")
      ->envname("CTSNMM_THREADS")
      ->check(CLI::Range(1, 256));
  int sim_reps = 0, sim_boot = -1;
  std::uint64_t sim_seed = 0;
  auto* reps_opt = simulate->add_option("--replicates", sim_reps,
                                        "override replicates per scenario");
  auto* boot_opt = simulate->add_option("--bootstrap", sim_boot,
                                        "override bootstrap resamples");
  auto* seed_opt =
      simulate->add_option("--seed", sim_seed, "override the scenario seed");
  simulate->add_flag("--full", sim.full,
                     "full-size run: 1000 replicates, 100 bootstrap resamples");

  AnalyzeArgs ana;
  auto* analyze = app.add_subcommand(
      "analyze", "estimate initiation-effect parameters from CSV data");
  analyze->add_option("--config", ana.config, "analysis config (JSON)")
      ->required();
  analyze->add_option("--out", ana.out, "output directory")->required();
  analyze->add_option("--threads", ana.threads, "worker threads")
      ->envname("CTSNMM_THREADS")
      ->check(CLI::Range(1, 256));
  int ana_boot = -1;
  std::uint64_t ana_seed = 0;
  auto* ana_boot_opt = analyze->add_option("--bootstrap", ana_boot,
                                           "override bootstrap resamples");
  auto* ana_seed_opt =
      analyze->add_option("--seed", ana_seed, "override the bootstrap seed");

  GenerateArgs gen;
  auto* generate = app.add_subcommand(
      "generate", "write one simulated dataset as subject/trajectory CSVs");
  generate->add_option("--config", gen.config, "generator config (JSON)")
      ->required();
  generate->add_option("--out", gen.out, "output directory")->required();
  int gen_n = 0;
  std::uint64_t gen_seed = 0;
  auto* gen_n_opt = generate->add_option("--n", gen_n, "override sample size");
  auto* gen_seed_opt =
      generate->add_option("--seed", gen_seed, "override the generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      if (reps_opt->count()) sim.replicates = sim_reps;
      if (boot_opt->count()) sim.bootstrap = sim_boot;
      if (seed_opt->count()) sim.seed = sim_seed;
      return run_simulate(sim);
    }
    if (analyze->parsed()) {
      if (ana_boot_opt->count()) ana.bootstrap = ana_boot;
      if (ana_seed_opt->count()) ana.seed = ana_seed;
      return run_analyze(ana);
    }
    if (gen_n_opt->count()) gen.n = gen_n;
    if (gen_seed_opt->count()) gen.seed = gen_seed;
    return run_generate(gen);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
