#include "ctsnmm/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ctsnmm {

int locf_index(const Trajectory& traj, double u) {
  if (traj.visit_times.empty() || u < traj.visit_times.front())
    throw DataError("time " + format_double(u) + " precedes the first visit");
  auto it = std::upper_bound(traj.visit_times.begin(), traj.visit_times.end(), u);
  return static_cast<int>(it - traj.visit_times.begin()) - 1;
}

int CovariateSpec::dim() const {
  return static_cast<int>(ti_indices.size() + td_indices.size()) +
         (days_since_last_visit ? 1 : 0) + (first_visit_flag ? 1 : 0) +
         (second_visit_flag ? 1 : 0);
}

Eigen::VectorXd CovariateSpec::eval(const Trajectory& traj, double u) const {
  Eigen::VectorXd out(dim());
  int pos = 0;
  for (int j : ti_indices) {
    if (j < 0 || j >= static_cast<int>(traj.time_independent.size()))
      throw DataError("time-independent covariate index out of range");
    out[pos++] = traj.time_independent[j];
  }
  int vi = -1;
  if (!td_indices.empty() || days_since_last_visit || first_visit_flag ||
      second_visit_flag)
    vi = locf_index(traj, u);
  for (int j : td_indices) {
    const auto& vals = traj.visit_values[vi];
    if (j < 0 || j >= static_cast<int>(vals.size()))
      throw DataError("time-dependent covariate index out of range");
    out[pos++] = vals[j];
  }
  if (days_since_last_visit) out[pos++] = u - traj.visit_times[vi];
  if (first_visit_flag) out[pos++] = vi == 0 ? 1.0 : 0.0;
  if (second_visit_flag) out[pos++] = vi == 1 ? 1.0 : 0.0;
  return out;
}

std::vector<std::string> CovariateSpec::names(
    const std::vector<std::string>& ti_names,
    const std::vector<std::string>& td_names) const {
  std::vector<std::string> out;
  for (int j : ti_indices) out.push_back(ti_names.at(j));
  for (int j : td_indices) out.push_back(td_names.at(j));
  if (days_since_last_visit) out.push_back("days_since_last_visit");
  if (first_visit_flag) out.push_back("first_visit");
  if (second_visit_flag) out.push_back("second_visit");
  return out;
}

void validate_dataset(const std::vector<SubjectRecord>& subjects, double tau) {
  if (subjects.empty()) throw DataError("empty dataset");
  std::set<int> ids;
  for (const auto& s : subjects) {
    if (!ids.insert(s.id).second)
      throw DataError("duplicate subject id " + std::to_string(s.id));
    const auto& t = s.traj;
    if (t.visit_times.empty() || t.visit_times.front() != 0.0)
      throw DataError("subject " + std::to_string(s.id) +
                      ": first visit must be at time 0");
    for (int k = 1; k < t.n_visits(); ++k)
      if (!(t.visit_times[k] > t.visit_times[k - 1]))
        throw DataError("subject " + std::to_string(s.id) +
                        ": visit times not strictly increasing");
    if (t.visit_times.back() > tau)
      throw DataError("subject " + std::to_string(s.id) + ": visit after tau");
    if (t.visit_values.size() != t.visit_times.size())
      throw DataError("subject " + std::to_string(s.id) +
                      ": visit value count mismatch");
    if (s.treated) {
      if (!(s.treatment_time > 0.0) || s.treatment_time > s.followup_end)
        throw DataError("subject " + std::to_string(s.id) +
                        ": initiation time outside (0, followup_end]");
    } else if (std::isfinite(s.treatment_time)) {
      throw DataError("subject " + std::to_string(s.id) +
                      ": untreated subject with finite initiation time");
    }
    double expect_end = s.uncensored ? tau : s.censor_time;
    if (std::abs(s.followup_end - std::min(expect_end, tau)) > 0.0)
      throw DataError("subject " + std::to_string(s.id) +
                      ": followup_end inconsistent with censoring fields");
    if (s.uncensored != !(s.censor_time < tau))
      throw DataError("subject " + std::to_string(s.id) +
                      ": censoring flag inconsistent with censor_time");
    if (s.uncensored && !std::isfinite(s.outcome))
      throw DataError("subject " + std::to_string(s.id) +
                      ": missing outcome for uncensored subject");
    if (!s.uncensored && std::isfinite(s.outcome))
      throw DataError("subject " + std::to_string(s.id) +
                      ": outcome recorded for censored subject");
  }
}

std::vector<RiskRow> to_risk_rows(const std::vector<SubjectRecord>& subjects,
                                  const CovariateSpec& spec, double tau,
                                  Process process) {
  std::vector<RiskRow> rows;
  for (const auto& s : subjects) {
    double end;
    bool event;
    if (process == Process::treatment) {
      end = s.treated ? s.treatment_time : s.followup_end;
      event = s.treated;
    } else {
      end = s.followup_end;
      event = !s.uncensored;
    }
    if (!(end > 0.0))
      throw DataError("subject " + std::to_string(s.id) +
                      ": non-positive at-risk interval");
    (void)tau;
    double prev = 0.0;
    for (int k = 0; k <= s.traj.n_visits(); ++k) {
      double next = k < s.traj.n_visits() ? s.traj.visit_times[k] : end;
      if (k < s.traj.n_visits() && next >= end) next = end;
      if (next > prev) {
        RiskRow r;
        r.subject_id = s.id;
        r.start = prev;
        r.stop = next;
        Eigen::VectorXd x = spec.eval(s.traj, prev);
        r.x.assign(x.data(), x.data() + x.size());
        r.event = false;
        rows.push_back(std::move(r));
        prev = next;
      }
      if (prev >= end) break;
    }
    if (event) rows.back().event = true;
  }
  return rows;
}

// ---- CSV ------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "";
  char buf[40];
  // shortest representation that round-trips a double
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  return buf;
}

namespace {

double parse_double(const std::string& tok, const std::string& what) {
  if (tok.empty()) return kNaN;
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw SchemaError("bad numeric field '" + tok + "' in " + what);
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return f;
}

}  // namespace

void write_subjects_csv(const std::string& path,
                        const std::vector<SubjectRecord>& subjects) {
  auto f = open_out(path);
  f << "id,T,Gamma,C,deltaC,Y\n";
  for (const auto& s : subjects) {
    f << s.id << ',' << format_double(s.treated ? s.treatment_time : kInf)
      << ',' << (s.treated ? 1 : 0) << ','
      << format_double(s.uncensored ? kInf : s.censor_time) << ','
      << (s.uncensored ? 1 : 0) << ',' << format_double(s.outcome) << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
}

std::vector<SubjectRecord> read_subjects_csv(const std::string& path,
                                             double tau) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw SchemaError(path + ": empty file");
  if (split_line(line) != std::vector<std::string>{"id", "T", "Gamma", "C",
                                                   "deltaC", "Y"})
    throw SchemaError(path + ": expected header id,T,Gamma,C,deltaC,Y");
  std::vector<SubjectRecord> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tok = split_line(line);
    if (tok.size() != 6)
      throw SchemaError(path + ":" + std::to_string(lineno) +
                        ": expected 6 fields");
    std::string where = path + ":" + std::to_string(lineno);
    SubjectRecord s;
    s.id = static_cast<int>(parse_double(tok[0], where));
    s.treatment_time = parse_double(tok[1], where);
    s.treated = parse_double(tok[2], where) != 0.0;
    s.censor_time = parse_double(tok[3], where);
    s.uncensored = parse_double(tok[4], where) != 0.0;
    s.outcome = parse_double(tok[5], where);
    s.followup_end = s.uncensored ? tau : std::min(s.censor_time, tau);
    out.push_back(std::move(s));
  }
  return out;
}

void write_trajectories_csv(const std::string& path,
                            const std::vector<SubjectRecord>& subjects,
                            const std::vector<std::string>& ti_names,
                            const std::vector<std::string>& td_names) {
  auto f = open_out(path);
  f << "id,start,stop,event";
  for (const auto& n : ti_names) f << ',' << n;
  for (const auto& n : td_names) f << ',' << n;
  f << '\n';
  for (const auto& s : subjects) {
    // rows cover the whole observation window; the event column marks the
    // row that ends at the initiation time
    double end = s.followup_end;
    const auto& t = s.traj;
    for (int k = 0; k < t.n_visits(); ++k) {
      double start = t.visit_times[k];
      if (start >= end) break;
      double stop = k + 1 < t.n_visits() ? std::min(t.visit_times[k + 1], end)
                                         : end;
      if (stop <= start) continue;
      bool ev = s.treated && stop == s.treatment_time;
      f << s.id << ',' << format_double(start) << ',' << format_double(stop)
        << ',' << (ev ? 1 : 0);
      for (size_t j = 0; j < ti_names.size(); ++j)
        f << ',' << format_double(t.time_independent[j]);
      for (size_t j = 0; j < td_names.size(); ++j)
        f << ',' << format_double(t.visit_values[k][j]);
      f << '\n';
    }
  }
  if (!f) throw IoError("write failed for " + path);
}

void read_trajectories_csv(const std::string& path,
                           const std::vector<std::string>& ti_names,
                           const std::vector<std::string>& td_names,
                           std::vector<SubjectRecord>& subjects) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw SchemaError(path + ": empty file");
  auto header = split_line(line);
  std::vector<std::string> expect = {"id", "start", "stop", "event"};
  expect.insert(expect.end(), ti_names.begin(), ti_names.end());
  expect.insert(expect.end(), td_names.begin(), td_names.end());
  if (header != expect) {
    std::string want;
    for (const auto& h : expect) want += (want.empty() ? "" : ",") + h;
    throw SchemaError(path + ": expected header " + want);
  }
  std::map<int, Trajectory> trajs;
  std::map<int, double> last_stop;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tok = split_line(line);
    std::string where = path + ":" + std::to_string(lineno);
    if (tok.size() != expect.size())
      throw SchemaError(where + ": expected " + std::to_string(expect.size()) +
                        " fields");
    int id = static_cast<int>(parse_double(tok[0], where));
    double start = parse_double(tok[1], where);
    double stop = parse_double(tok[2], where);
    auto& tr = trajs[id];
    if (tr.visit_times.empty()) {
      if (start != 0.0) throw SchemaError(where + ": first interval must start at 0");
      for (size_t j = 0; j < ti_names.size(); ++j)
        tr.time_independent.push_back(parse_double(tok[4 + j], where));
    } else if (start != last_stop[id]) {
      throw SchemaError(where + ": intervals not contiguous");
    }
    if (!(stop > start)) throw SchemaError(where + ": stop must exceed start");
    tr.visit_times.push_back(start);
    std::vector<double> vals;
    for (size_t j = 0; j < td_names.size(); ++j)
      vals.push_back(parse_double(tok[4 + ti_names.size() + j], where));
    tr.visit_values.push_back(std::move(vals));
    last_stop[id] = stop;
  }
  for (auto& s : subjects) {
    auto it = trajs.find(s.id);
    if (it == trajs.end())
      throw SchemaError(path + ": no trajectory rows for subject " +
                        std::to_string(s.id));
    s.traj = std::move(it->second);
    trajs.erase(it);
  }
  if (!trajs.empty())
    throw SchemaError(path + ": trajectory rows for unknown subject " +
                      std::to_string(trajs.begin()->first));
}

void write_risk_rows_csv(const std::string& path,
                         const std::vector<RiskRow>& rows,
                         const std::vector<std::string>& covariate_names) {
  auto f = open_out(path);
  f << "id,start,stop,event";
  for (const auto& n : covariate_names) f << ',' << n;
  f << '\n';
  for (const auto& r : rows) {
    f << r.subject_id << ',' << format_double(r.start) << ','
      << format_double(r.stop) << ',' << (r.event ? 1 : 0);
    for (double v : r.x) f << ',' << format_double(v);
    f << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace ctsnmm
