#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctsnmm/data_model.hpp"
#include "doctest.h"

using namespace ctsnmm;

namespace {

SubjectRecord make_subject_1() {
  // treated at 0.7, fully observed to tau = 2
  SubjectRecord s;
  s.id = 1;
  s.traj.visit_times = {0.0, 0.5, 0.7, 1.0, 1.5};
  s.traj.time_independent = {1.0};
  s.traj.visit_values = {{1.0}, {2.0}, {2.0}, {3.0}, {4.0}};
  s.treated = true;
  s.treatment_time = 0.7;
  s.uncensored = true;
  s.censor_time = kInf;
  s.followup_end = 2.0;
  s.outcome = 10.0;
  return s;
}

SubjectRecord make_subject_2() {
  // untreated, dropped out at 1.2
  SubjectRecord s;
  s.id = 2;
  s.traj.visit_times = {0.0, 0.5, 1.0};
  s.traj.time_independent = {0.0};
  s.traj.visit_values = {{-1.0}, {-2.0}, {-3.0}};
  s.treated = false;
  s.treatment_time = kInf;
  s.uncensored = false;
  s.censor_time = 1.2;
  s.followup_end = 1.2;
  s.outcome = kNaN;
  return s;
}

CovariateSpec both_columns() {
  CovariateSpec spec;
  spec.ti_indices = {0};
  spec.td_indices = {0};
  return spec;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("locf picks the last visit at or before u") {
  auto s = make_subject_1();
  CHECK(locf_index(s.traj, 0.0) == 0);
  CHECK(locf_index(s.traj, 0.49) == 0);
  CHECK(locf_index(s.traj, 0.5) == 1);
  CHECK(locf_index(s.traj, 1.99) == 4);
  CHECK_THROWS_AS(locf_index(s.traj, -0.1), DataError);
}

TEST_CASE("covariate spec evaluation and names") {
  auto s = make_subject_1();
  CovariateSpec spec = both_columns();
  spec.days_since_last_visit = true;
  spec.first_visit_flag = true;
  spec.second_visit_flag = true;
  Eigen::VectorXd x = spec.eval(s.traj, 0.6);
  REQUIRE(x.size() == 5);
  CHECK(x[0] == 1.0);                    // time-independent
  CHECK(x[1] == 2.0);                    // carried forward from 0.5
  CHECK(x[2] == doctest::Approx(0.1));   // days since last visit
  CHECK(x[3] == 0.0);
  CHECK(x[4] == 1.0);
  auto names = spec.names({"L_TI"}, {"L_TD"});
  CHECK(names == std::vector<std::string>{"L_TI", "L_TD",
                                          "days_since_last_visit",
                                          "first_visit", "second_visit"});
}

TEST_CASE("risk row expansion matches hand enumeration") {
  std::vector<SubjectRecord> subjects = {make_subject_1(), make_subject_2()};
  CovariateSpec spec = both_columns();

  auto rt = to_risk_rows(subjects, spec, 2.0, Process::treatment);
  // subject 1 at risk to 0.7 (2 rows, event), subject 2 to 1.2 (3 rows)
  REQUIRE(rt.size() == 5);
  CHECK(rt[0].subject_id == 1);
  CHECK(rt[0].start == 0.0);
  CHECK(rt[0].stop == 0.5);
  CHECK(rt[0].x == std::vector<double>{1.0, 1.0});
  CHECK_FALSE(rt[0].event);
  CHECK(rt[1].start == 0.5);
  CHECK(rt[1].stop == 0.7);
  CHECK(rt[1].x == std::vector<double>{1.0, 2.0});
  CHECK(rt[1].event);
  CHECK(rt[2].subject_id == 2);
  CHECK(rt[4].stop == 1.2);
  CHECK(rt[4].x == std::vector<double>{0.0, -3.0});
  CHECK_FALSE(rt[4].event);

  auto rc = to_risk_rows(subjects, spec, 2.0, Process::censoring);
  // subject 1 to tau (5 rows, no event), subject 2 to 1.2 (3 rows, event)
  REQUIRE(rc.size() == 8);
  CHECK(rc[4].start == 1.5);
  CHECK(rc[4].stop == 2.0);
  CHECK_FALSE(rc[4].event);
  CHECK(rc[7].stop == 1.2);
  CHECK(rc[7].event);
}

TEST_CASE("dataset validation rejects inconsistent records") {
  std::vector<SubjectRecord> ok = {make_subject_1(), make_subject_2()};
  CHECK_NOTHROW(validate_dataset(ok, 2.0));

  auto dup = ok;
  dup[1].id = 1;
  CHECK_THROWS_AS(validate_dataset(dup, 2.0), DataError);

  auto late_visit = ok;
  late_visit[0].traj.visit_times.back() = 2.5;
  CHECK_THROWS_AS(validate_dataset(late_visit, 2.0), DataError);

  auto missing_y = ok;
  missing_y[0].outcome = kNaN;
  CHECK_THROWS_AS(validate_dataset(missing_y, 2.0), DataError);

  auto bad_first = ok;
  bad_first[0].traj.visit_times[0] = 0.1;
  CHECK_THROWS_AS(validate_dataset(bad_first, 2.0), DataError);

  auto bad_t = ok;
  bad_t[1].treatment_time = 0.4;  // finite but flagged untreated
  CHECK_THROWS_AS(validate_dataset(bad_t, 2.0), DataError);
}

TEST_CASE("subject and trajectory csv round trip") {
  std::vector<SubjectRecord> subjects = {make_subject_1(), make_subject_2()};
  std::string subj = tmp_path("ctsnmm_subjects.csv");
  std::string traj = tmp_path("ctsnmm_traj.csv");
  write_subjects_csv(subj, subjects);
  write_trajectories_csv(traj, subjects, {"L_TI"}, {"L_TD"});

  auto back = read_subjects_csv(subj, 2.0);
  read_trajectories_csv(traj, {"L_TI"}, {"L_TD"}, back);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    const auto& a = subjects[i];
    const auto& b = back[i];
    CHECK(a.id == b.id);
    CHECK(a.treated == b.treated);
    if (a.treated) CHECK(a.treatment_time == b.treatment_time);
    CHECK(a.uncensored == b.uncensored);
    CHECK(a.followup_end == b.followup_end);
    if (a.uncensored)
      CHECK(a.outcome == b.outcome);
    else
      CHECK(std::isnan(b.outcome));
    CHECK(a.traj.visit_times == b.traj.visit_times);
    CHECK(a.traj.time_independent == b.traj.time_independent);
    CHECK(a.traj.visit_values == b.traj.visit_values);
  }
  CHECK_NOTHROW(validate_dataset(back, 2.0));

  // byte-stable re-emission
  std::string subj2 = tmp_path("ctsnmm_subjects2.csv");
  write_subjects_csv(subj2, back);
  std::ifstream f1(subj), f2(subj2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("csv schema violations are reported") {
  std::string p = tmp_path("ctsnmm_bad.csv");
  {
    std::ofstream f(p);
    f << "id,T,Gamma,C,deltaC\n1,inf,0,inf,1\n";
  }
  CHECK_THROWS_AS(read_subjects_csv(p, 2.0), SchemaError);
  {
    std::ofstream f(p);
    f << "id,T,Gamma,C,deltaC,Y\n1,abc,0,inf,1,0\n";
  }
  CHECK_THROWS_AS(read_subjects_csv(p, 2.0), SchemaError);
  CHECK_THROWS_AS(read_subjects_csv(tmp_path("ctsnmm_missing_file.csv"), 2.0),
                  IoError);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 12345.6789, 1e-17, 2.0}) {
    double back = std::stod(format_double(v));
    CHECK(back == v);
  }
  CHECK(format_double(kInf) == "inf");
  CHECK(format_double(kNaN) == "");
}
