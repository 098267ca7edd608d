#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  if (const char* env = std::getenv("CTSNMM_CLI")) return env;
  for (const char* guess : {"build/ctsnmm", "./ctsnmm"})
    if (fs::exists(guess)) return guess;
  return "ctsnmm";
}

std::string data_dir() {
  if (const char* env = std::getenv("CTSNMM_TEST_DATA")) return env;
  for (const char* guess : {"tests/data", "../tests/data"})
    if (fs::exists(guess)) return guess;
  return "tests/data";
}

int run(const std::string& args) {
  std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  int ret = std::system(cmd.c_str());
  REQUIRE(ret != -1);
  return WEXITSTATUS(ret);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  REQUIRE(f.good());
  f << text;
}

const char* kAnalyzeConfig = R"({
  "schema": "ctsnmm-analyze/1",
  "subjects": "subjects.csv",
  "trajectories": "trajectories.csv",
  "tau": 2.0,
  "censoring": true,
  "time_independent": ["L_TI"],
  "time_dependent": ["L_TD"],
  "models": {
    "treatment": {"covariates": ["L_TI", "L_TD"]},
    "censoring": {"covariates": ["L_TI", "L_TD"]},
    "outcome": {"covariates": ["L_TI", "L_TD"]}
  },
  "estimators": ["preliminary", "cont1", "cont2"],
  "bootstrap": 40,
  "seed": 3
})";

// cont1 rows of results.csv: estimator,parameter,estimate,se,lower,upper,p
bool ci_covers(const std::string& csv, const std::string& par, double value) {
  size_t pos = csv.find("cont1," + par);
  REQUIRE(pos != std::string::npos);
  std::string row = csv.substr(pos, csv.find('\n', pos) - pos);
  std::vector<std::string> cells;
  size_t lo = 0;
  while (lo <= row.size()) {
    size_t hi = row.find(',', lo);
    if (hi == std::string::npos) hi = row.size();
    cells.push_back(row.substr(lo, hi - lo));
    lo = hi + 1;
  }
  REQUIRE(cells.size() == 7);
  return std::stod(cells[4]) <= value && value <= std::stod(cells[5]);
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("simulate --help") == 0);
  CHECK(run("") == 64);
  CHECK(run("simulate --out /tmp/ctsnmm_cli_noconf") == 64);
}

TEST_CASE("simulation reports are deterministic across runs and threads") {
  std::string cfg = data_dir() + "/smoke_sim.json";
  fs::path out1 = fresh_dir("ctsnmm_cli_sim1");
  fs::path out2 = fresh_dir("ctsnmm_cli_sim2");

  CHECK(run("simulate --config " + cfg + " --out " + out1.string()) == 0);
  CHECK(run("simulate --config " + cfg + " --out " + out2.string() +
            " --threads 8") == 0);
  CHECK(fs::exists(out1 / "report.txt"));
  CHECK(fs::exists(out1 / "smoke.csv"));
  CHECK(slurp(out1 / "report.csv") == slurp(out2 / "report.csv"));
  CHECK(slurp(out1 / "report.csv") == slurp(out1 / "smoke.csv"));

  // a different seed changes the numbers
  fs::path out3 = fresh_dir("ctsnmm_cli_sim3");
  CHECK(run("simulate --config " + cfg + " --out " + out3.string() +
            " --seed 99") == 0);
  CHECK(slurp(out1 / "report.csv") != slurp(out3 / "report.csv"));
}

TEST_CASE("config problems exit with the usage code") {
  fs::path out = fresh_dir("ctsnmm_cli_bad");
  std::string dir = data_dir();
  CHECK(run("simulate --config " + dir + "/bad_schema.json --out " +
            out.string()) == 64);
  CHECK(run("simulate --config " + dir + "/bad_key.json --out " +
            out.string()) == 64);
  CHECK(run("simulate --config " + dir + "/no_such_file.json --out " +
            out.string()) == 74);
}

TEST_CASE("excessive replicate failures exit with the flagged code") {
  fs::path out = fresh_dir("ctsnmm_cli_flagged");
  CHECK(run("simulate --config " + data_dir() + "/flagged_sim.json --out " +
            out.string()) == 2);
  CHECK(fs::exists(out / "report.csv"));
}

TEST_CASE("generate then analyze recovers the effect parameters") {
  fs::path dir = fresh_dir("ctsnmm_cli_pipeline");
  spit(dir / "gen.json", R"({
    "schema": "ctsnmm-generate/1",
    "n": 800,
    "seed": 4,
    "censoring": true
  })");
  CHECK(run("generate --config " + (dir / "gen.json").string() + " --out " +
            dir.string()) == 0);
  REQUIRE(fs::exists(dir / "subjects.csv"));
  REQUIRE(fs::exists(dir / "trajectories.csv"));

  spit(dir / "analyze.json", kAnalyzeConfig);
  fs::path out = fresh_dir("ctsnmm_cli_pipeline_out");
  CHECK(run("analyze --config " + (dir / "analyze.json").string() +
            " --out " + out.string()) == 0);
  REQUIRE(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "results.txt"));
  CHECK(fs::exists(out / "treatment_model.csv"));
  CHECK(fs::exists(out / "censoring_model.csv"));

  std::string results = slurp(out / "results.csv");
  CHECK(ci_covers(results, "psi1", 15.0));
  CHECK(ci_covers(results, "psi2", -1.0));

  // reruns are byte identical; threads leave the answer alone
  fs::path out2 = fresh_dir("ctsnmm_cli_pipeline_out2");
  CHECK(run("analyze --config " + (dir / "analyze.json").string() +
            " --out " + out2.string() + " --threads 8") == 0);
  CHECK(results == slurp(out2 / "results.csv"));
}

TEST_CASE("malformed data files exit with the data code") {
  fs::path dir = fresh_dir("ctsnmm_cli_baddata");
  spit(dir / "subjects.csv", "id,T,Gamma,C\n1,inf,0,inf\n");
  spit(dir / "trajectories.csv",
       "id,start,stop,event,L_TI,L_TD\n1,0,2,0,1,0.5\n");
  spit(dir / "analyze.json", kAnalyzeConfig);
  fs::path out = fresh_dir("ctsnmm_cli_baddata_out");
  CHECK(run("analyze --config " + (dir / "analyze.json").string() +
            " --out " + out.string()) == 65);

  // unknown covariate name in a model block is a config problem
  spit(dir / "bad_model.json", R"({
    "schema": "ctsnmm-analyze/1",
    "subjects": "subjects.csv",
    "trajectories": "trajectories.csv",
    "time_independent": ["L_TI"],
    "time_dependent": ["L_TD"],
    "models": {
      "treatment": {"covariates": ["L_MYSTERY"]},
      "censoring": {"covariates": ["L_TI"]},
      "outcome": {"covariates": ["L_TI"]}
    }
  })");
  CHECK(run("analyze --config " + (dir / "bad_model.json").string() +
            " --out " + out.string()) == 64);
}

TEST_CASE("degenerate datasets exit with the runtime code") {
  fs::path dir = fresh_dir("ctsnmm_cli_degenerate");
  // nobody initiates: the initiation hazard fit has no events
  spit(dir / "subjects.csv",
       "id,T,Gamma,C,deltaC,Y\n"
       "1,inf,0,inf,1,0.5\n2,inf,0,inf,1,-0.25\n3,inf,0,inf,1,1\n");
  spit(dir / "trajectories.csv",
       "id,start,stop,event,L_TI,L_TD\n"
       "1,0,2,0,1,0.5\n2,0,2,0,0,-1\n3,0,2,0,1,0.25\n");
  spit(dir / "analyze.json", R"({
    "schema": "ctsnmm-analyze/1",
    "subjects": "subjects.csv",
    "trajectories": "trajectories.csv",
    "time_independent": ["L_TI"],
    "time_dependent": ["L_TD"],
    "models": {
      "treatment": {"covariates": ["L_TI", "L_TD"]},
      "censoring": {"covariates": ["L_TI", "L_TD"]},
      "outcome": {"covariates": ["L_TI", "L_TD"]}
    }
  })");
  fs::path out = fresh_dir("ctsnmm_cli_degenerate_out");
  CHECK(run("analyze --config " + (dir / "analyze.json").string() +
            " --out " + out.string()) == 1);
}
