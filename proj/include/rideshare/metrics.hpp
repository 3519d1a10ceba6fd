#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rideshare/core.hpp"
#include "rideshare/domain.hpp"

namespace rideshare {

using json = nlohmann::json;

/// Named metric values in a fixed report order. Undefined values (empty
/// denominators) are nullopt and serialise as null.
class MetricsReport {
 public:
  void set(const std::string& name, std::optional<double> v) {
    for (auto& [k, x] : values_)
      if (k == name) {
        x = v;
        return;
      }
    values_.emplace_back(name, v);
  }
  std::optional<double> get(const std::string& name) const {
    for (auto& [k, x] : values_)
      if (k == name) return x;
    throw ContractError("unknown metric '" + name + "'");
  }
  const std::vector<std::pair<std::string, std::optional<double>>>& values() const { return values_; }

  json to_json() const {
    json j = json::object();
    for (auto& [k, v] : values_) j[k] = v ? json(*v) : json(nullptr);
    return j;
  }

 private:
  std::vector<std::pair<std::string, std::optional<double>>> values_;
};

/// Everything the metrics need, folded from the event log.
struct RunLog {
  struct Agent {
    AgentRef id;
    bool warmup = false;
    Time st = 0.0;
    double sp_time = 0.0;
    double sp_km = 0.0;
    PassengerStatus status = PassengerStatus::NotMatched;  // passengers
    bool finished = false;                                // drivers
    bool ever_matched = false;
    std::optional<double> wait;    // last notification to pickup
    std::optional<double> ride;    // pickup to drop-off
    std::optional<Time> arrival;   // driver at destination
    double driven_km = 0.0;
    int responses = 0;
    int accepts = 0;
    int assigned = 0;
    int delivered = 0;
  };
  struct Round {
    Time t = 0.0;
    std::vector<AgentRef> pool;
    std::vector<AgentRef> expected;
    std::vector<AgentRef> actual;
    double expected_z = 0.0;
    double actual_z = 0.0;
    int rejections = 0;
  };

  std::map<AgentRef, Agent> agents;
  std::vector<Round> rounds;
  std::vector<std::string> violations;  // illegal transitions found during replay
  std::size_t events = 0;
  Time last_time = 0.0;

  const Agent* find(AgentRef a) const {
    auto it = agents.find(a);
    return it == agents.end() ? nullptr : &it->second;
  }
};

inline std::vector<json> parse_log(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError("event log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Folds the event log. Passenger status changes are replayed through the
/// status machine; illegal ones are collected in `violations`.
inline RunLog fold_log(const std::vector<json>& events) {
  RunLog log;
  auto ref = [](const json& s) { return AgentRef::parse(s.get<std::string>()); };
  for (const auto& e : events) {
    ++log.events;
    const Time t = e.at("t").get<double>();
    log.last_time = std::max(log.last_time, t);
    const std::string kind = e.at("kind").get<std::string>();
    const json& pl = e.at("payload");
    if (kind == "generation") {
      for (auto& a : pl.value("agents", json::array())) {
        RunLog::Agent ag;
        ag.id = ref(a.at("id"));
        ag.warmup = a.at("warmup").get<bool>();
        ag.st = a.at("st").get<double>();
        ag.sp_time = a.at("sp_time").get<double>();
        ag.sp_km = a.at("sp_km").get<double>();
        log.agents[ag.id] = ag;
      }
    }
    if (pl.contains("changes"))
      for (auto& c : pl.at("changes")) {
        const AgentRef a = ref(c.at("agent"));
        auto it = log.agents.find(a);
        if (it == log.agents.end()) {
          log.violations.push_back("change for unknown agent " + a.str());
          continue;
        }
        auto& ag = it->second;
        const std::string ev = c.at("event").get<std::string>();
        if (a.is_driver()) {
          if (ev == "finished") ag.finished = true;
          continue;
        }
        if (ev == "online" || ev == "offline") continue;
        try {
          const auto pe = passenger_event_from_string(ev);
          ag.status = next_status(ag.status, pe);
          if (pe == PassengerEvent::FinalizedMatch) ag.ever_matched = true;
        } catch (const Error& err) {
          log.violations.push_back(a.str() + " at t=" + std::to_string(t) + ": " + err.what());
        }
      }
    if (kind == "pickup" && pl.contains("wait"))
      log.agents[ref(e.at("agents").at(1))].wait = pl.at("wait").get<double>();
    if (kind == "dropoff" && pl.contains("ride")) {
      log.agents[ref(e.at("agents").at(1))].ride = pl.at("ride").get<double>();
      log.agents[ref(e.at("agents").at(0))].delivered += 1;
    }
    if (kind == "termination" && pl.contains("driven_km")) {
      auto& ag = log.agents[ref(e.at("agents").at(0))];
      ag.arrival = t;
      ag.driven_km = pl.at("driven_km").get<double>();
    }
    if (kind == "matching") {
      RunLog::Round r;
      r.t = t;
      for (auto& a : pl.at("pool_drivers")) r.pool.push_back(ref(a));
      for (auto& a : pl.at("pool_passengers")) r.pool.push_back(ref(a));
      for (auto& a : pl.at("expected")) r.expected.push_back(ref(a));
      for (auto& a : pl.at("actual")) r.actual.push_back(ref(a));
      r.expected_z = pl.at("expected_z").get<double>();
      r.actual_z = pl.at("actual_z").get<double>();
      for (auto& opt : pl.at("options")) {
        for (auto& v : opt.at("votes")) {
          auto& ag = log.agents[ref(v.at("agent"))];
          ag.responses += 1;
          if (v.at("accept").get<bool>())
            ag.accepts += 1;
          else
            r.rejections += 1;
        }
        if (opt.at("finalized").get<bool>())
          log.agents[ref(opt.at("driver"))].assigned += static_cast<int>(opt.at("added").size());
      }
      log.rounds.push_back(std::move(r));
    }
  }
  return log;
}

namespace detail {

inline std::optional<double> mean(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

}  // namespace detail

/// Report over non-warmup agents. Rates are fractions in [0, 1]; excess
/// times and VKT saving are percentages; waits are minutes.
inline MetricsReport compute_metrics(const RunLog& log) {
  using detail::mean;
  using detail::ratio;
  std::vector<double> d_excess, p_excess, waits, d_accept, p_accept, exec;
  int drivers = 0, passengers = 0, d_success = 0, p_success = 0;
  int d_finished = 0, p_terminal = 0, p_quit = 0, left_before = 0;
  double base = 0.0, with_rs = 0.0;
  for (const auto& [id, a] : log.agents) {
    if (a.warmup) continue;
    base += a.sp_km;
    if (id.is_driver()) {
      ++drivers;
      if (a.finished) ++d_finished;
      with_rs += a.arrival ? a.driven_km : a.sp_km;
      if (a.delivered > 0) {
        ++d_success;
        if (a.arrival && a.sp_time > 0.0) d_excess.push_back((*a.arrival - a.st - a.sp_time) / a.sp_time * 100.0);
      }
      if (a.responses > 0) d_accept.push_back(static_cast<double>(a.accepts) / a.responses);
      if (a.assigned > 0) exec.push_back(static_cast<double>(a.delivered) / a.assigned);
    } else {
      ++passengers;
      if (is_terminal(a.status)) ++p_terminal;
      if (a.status == PassengerStatus::DroppedOff) {
        ++p_success;
        if (a.ride && a.sp_time > 0.0) p_excess.push_back((*a.ride - a.sp_time) / a.sp_time * 100.0);
        if (a.wait) waits.push_back(*a.wait);
      } else {
        with_rs += a.sp_km;
      }
      if (a.status == PassengerStatus::Quit) {
        ++p_quit;
        if (!a.ever_matched) ++left_before;
      }
      if (a.responses > 0) p_accept.push_back(static_cast<double>(a.accepts) / a.responses);
    }
  }

  std::vector<double> expected_rate, actual_rate;
  for (const auto& r : log.rounds) {
    auto counted = [&](const std::vector<AgentRef>& v) {
      double n = 0;
      for (auto a : v) {
        auto* ag = log.find(a);
        if (ag && !ag->warmup) n += 1;
      }
      return n;
    };
    const double pool = counted(r.pool);
    if (pool == 0) continue;
    expected_rate.push_back(counted(r.expected) / pool);
    actual_rate.push_back(counted(r.actual) / pool);
  }

  MetricsReport m;
  m.set("driver_excess_time_pct", mean(d_excess));
  m.set("passenger_excess_time_pct", mean(p_excess));
  auto p_rate = ratio(p_success, passengers);
  m.set("driver_success_rate", ratio(d_success, drivers));
  m.set("passenger_success_rate", p_rate);
  m.set("overall_success_rate", ratio(d_success + p_success, drivers + passengers));
  auto w = mean(waits);
  m.set("expected_pickup_wait_min", p_rate && w ? std::optional<double>(*p_rate * *w) : std::nullopt);
  m.set("driver_accept_rate", mean(d_accept));
  m.set("passenger_accept_rate", mean(p_accept));
  m.set("expected_matching_rate", mean(expected_rate));
  m.set("actual_matching_rate", mean(actual_rate));
  m.set("execution_rate", mean(exec));
  m.set("vkt_saving_pct", base > 0.0 ? std::optional<double>((base - with_rs) / base * 100.0) : std::nullopt);
  m.set("drivers", drivers);
  m.set("passengers", passengers);
  m.set("drivers_finished", d_finished);
  m.set("passengers_delivered", p_success);
  m.set("passengers_quit", p_quit);
  m.set("passengers_terminal", p_terminal);
  m.set("passengers_left_before_matching", left_before);
  m.set("matching_rounds", static_cast<double>(log.rounds.size()));
  return m;
}

inline MetricsReport compute_metrics(const std::vector<json>& events) {
  return compute_metrics(fold_log(events));
}

/// Every generated agent reached a terminal state and the status replay
/// found no illegal transition.
struct Audit {
  bool ok = true;
  std::vector<std::string> problems;
};

inline Audit audit(const RunLog& log) {
  Audit a;
  int gen_p = 0, gen_d = 0, term_p = 0, term_d = 0;
  for (const auto& [id, ag] : log.agents) {
    if (id.is_driver()) {
      ++gen_d;
      if (ag.finished) ++term_d;
    } else {
      ++gen_p;
      if (is_terminal(ag.status)) ++term_p;
    }
  }
  if (gen_p != term_p)
    a.problems.push_back("passengers generated " + std::to_string(gen_p) + " terminal " + std::to_string(term_p));
  if (gen_d != term_d)
    a.problems.push_back("drivers generated " + std::to_string(gen_d) + " terminal " + std::to_string(term_d));
  for (auto& v : log.violations) a.problems.push_back(v);
  a.ok = a.problems.empty();
  return a;
}

/// Status counts sampled every `step` minutes plus per-round provider
/// series, as `t,series,value` CSV.
inline std::string collect_profiles(const std::vector<json>& events, double step = 1.0) {
  if (!(step > 0.0)) throw ContractError("profile step must be positive");
  std::map<AgentRef, std::string> state;
  std::map<std::string, long> counts;
  std::ostringstream csv;
  csv << "t,series,value\n";
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  auto move = [&](AgentRef a, const std::string& s) {
    auto it = state.find(a);
    if (it != state.end()) --counts[it->second];
    state[a] = s;
    ++counts[s];
  };
  static const std::vector<std::string> series = {
      "passenger.offline", "passenger.waiting", "passenger.matched", "passenger.onboard",
      "passenger.finished", "passenger.quit", "driver.offline", "driver.waiting",
      "driver.matched", "driver.finished"};
  auto emit = [&](double t) {
    for (auto& s : series) csv << num(t) << ',' << s << ',' << counts[s] << '\n';
  };
  double next_sample = 0.0;
  for (const auto& e : events) {
    const double t = e.at("t").get<double>();
    while (next_sample < t) {
      emit(next_sample);
      next_sample += step;
    }
    const json& pl = e.at("payload");
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "generation")
      for (auto& a : pl.value("agents", json::array()))
        move(AgentRef::parse(a.at("id").get<std::string>()),
             a.at("id").get<std::string>()[0] == 'P' ? "passenger.offline" : "driver.offline");
    if (pl.contains("changes"))
      for (auto& c : pl.at("changes")) {
        const AgentRef a = AgentRef::parse(c.at("agent").get<std::string>());
        const std::string ev = c.at("event").get<std::string>();
        if (a.is_passenger()) {
          if (ev == "online" || ev == "unmatch") move(a, "passenger.waiting");
          else if (ev == "finalized") move(a, "passenger.matched");
          else if (ev == "pickup") move(a, "passenger.onboard");
          else if (ev == "dropoff") move(a, "passenger.finished");
          else if (ev == "quit" || ev == "noshow") move(a, "passenger.quit");
        } else {
          if (ev == "online") move(a, "driver.waiting");
          else if (ev == "matched") move(a, "driver.matched");
          else if (ev == "offline" || ev == "left_service") {
            if (state[a] != "driver.matched") move(a, "driver.offline");
          } else if (ev == "finished") move(a, "driver.finished");
        }
      }
    if (kind == "matching") {
      csv << num(t) << ",round.pool_drivers," << pl.at("pool_drivers").size() << '\n';
      csv << num(t) << ",round.pool_passengers," << pl.at("pool_passengers").size() << '\n';
      csv << num(t) << ",round.expected_matched," << pl.at("expected").size() << '\n';
      csv << num(t) << ",round.actual_matched," << pl.at("actual").size() << '\n';
      csv << num(t) << ",round.expected_z," << num(pl.at("expected_z").get<double>()) << '\n';
      csv << num(t) << ",round.actual_z," << num(pl.at("actual_z").get<double>()) << '\n';
    }
  }
  emit(next_sample);
  return csv.str();
}

/// Mean and sample standard deviation per metric over replications,
/// ignoring undefined values.
/// One row per matching round.
inline std::string rounds_csv(const RunLog& log) {
  std::string out = "round,t,pool,expected,actual,expected_z,actual_z,rejections\n";
  char buf[160];
  for (std::size_t i = 0; i < log.rounds.size(); ++i) {
    const auto& r = log.rounds[i];
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%zu,%zu,%zu,%.10g,%.10g,%d\n", i + 1, r.t, r.pool.size(),
                  r.expected.size(), r.actual.size(), r.expected_z, r.actual_z, r.rejections);
    out += buf;
  }
  return out;
}

struct Aggregate {
  struct Stat {
    std::optional<double> mean;
    std::optional<double> stdev;
    int n = 0;
  };
  std::vector<std::pair<std::string, Stat>> stats;

  const Stat& at(const std::string& name) const {
    for (auto& [k, s] : stats)
      if (k == name) return s;
    throw ContractError("unknown metric '" + name + "'");
  }

  json to_json() const {
    json j = json::object();
    for (auto& [k, s] : stats)
      j[k] = {{"mean", s.mean ? json(*s.mean) : json(nullptr)},
              {"stdev", s.stdev ? json(*s.stdev) : json(nullptr)},
              {"n", s.n}};
    return j;
  }
};

inline Aggregate aggregate(const std::vector<MetricsReport>& reports) {
  Aggregate agg;
  if (reports.empty()) return agg;
  for (auto& [name, unused] : reports.front().values()) {
    (void)unused;
    std::vector<double> xs;
    for (auto& r : reports)
      if (auto v = r.get(name)) xs.push_back(*v);
    Aggregate::Stat s;
    s.n = static_cast<int>(xs.size());
    if (!xs.empty()) {
      double sum = 0.0;
      for (double x : xs) sum += x;
      s.mean = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - *s.mean) * (x - *s.mean);
      s.stdev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    }
    agg.stats.emplace_back(name, s);
  }
  return agg;
}

}  // namespace rideshare
