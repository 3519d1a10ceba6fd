#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rideshare/behavior.hpp"
#include "rideshare/config.hpp"
#include "rideshare/core.hpp"
#include "rideshare/engine.hpp"
#include "rideshare/metrics.hpp"
#include "rideshare/network.hpp"

namespace rideshare {

/// Uniform(lo, hi); a constant when lo == hi.
struct Dist {
  double lo = 0.0;
  double hi = 0.0;
  double draw(CounterRng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

struct ScenarioConfig {
  // network: either files or a synthetic grid
  int grid_size = 10;
  double spacing_km = 1.5;
  double minutes_per_km = kDefaultMinutesPerKm;
  double bin_minutes = kDefaultBinMinutes;
  std::filesystem::path nodes_file, links_file, profiles_file;

  // OD source: file `origin,destination,trips`, else gravity over grid nodes
  std::filesystem::path od_file;
  double gravity_scale = 100.0;
  double gravity_lambda = 20.0;  // km

  int passengers = 2000;
  int drivers = 1600;
  double supply_level = -1.0;  // drivers per passenger; overrides `drivers` when >= 0
  double period_minutes = 15.0;
  std::vector<double> shares{0.1, 0.4, 0.4, 0.1};
  int warmup_periods = 2;
  double warmup_share = 0.1;  // of the totals, per warmup period

  Dist vot_passenger{0.5, 1.0};
  Dist vot_driver{3.0, 3.5};
  Dist alone_unit_cost{3.0, 3.5};
  Dist rideshare_unit_cost{1.5, 3.5};
  Dist max_excess{15.0, 45.0};
  Dist match_wait{5.0, 10.0};
  Dist speed_factor{0.9, 1.1};
  int capacity = 4;
  int max_passengers = 4;
  int seats = 1;
  double driver_operating_cost_per_km = 0.0;

  SimConfig sim;

  std::uint64_t seed = 1;
  int replications = 10;
  int workers = 0;  // 0 = hardware concurrency

  int driver_count() const {
    return supply_level >= 0.0 ? static_cast<int>(std::lround(supply_level * passengers)) : drivers;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError(m); };
    if (passengers < 0 || drivers < 0) bad("agent counts must be nonnegative");
    if (shares.empty()) bad("demand.shares must not be empty");
    double sum = 0.0;
    for (double s : shares) {
      if (s < 0.0) bad("demand.shares must be nonnegative");
      sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-9) bad("demand.shares must sum to 1");
    if (!(sim.window > 0.0)) bad("provider.window must be positive");
    if (!(period_minutes > 0.0)) bad("demand.period_minutes must be positive");
    if (warmup_periods < 0 || warmup_share < 0.0) bad("warmup settings must be nonnegative");
    if (sim.p_noshow < 0.0 || sim.p_noshow > 1.0) bad("provider.p_noshow must be in [0, 1]");
    if (capacity < seats || seats < 1) bad("capacity must hold the requested seats");
    if (replications < 1) bad("run.replications must be at least 1");
    if (!(speed_factor.lo > 0.0)) bad("attributes.speed_factor must be positive");
    for (const Dist* d : {&vot_passenger, &vot_driver, &alone_unit_cost, &rideshare_unit_cost,
                          &max_excess, &match_wait, &speed_factor})
      if (d->hi < d->lo) bad("distribution bounds out of order");
    if (nodes_file.empty() != links_file.empty()) bad("network.nodes and network.links go together");
    if (nodes_file.empty() && grid_size < 2) bad("network.grid_size must be at least 2");
  }
};

namespace detail {

inline Dist read_dist(const KeyValueConfig& c, const std::string& key, Dist fallback) {
  if (!c.has(key)) return fallback;
  auto v = c.text(key, "");
  if (!v.empty() && v.front() == '[') {
    auto xs = c.numbers(key, {});
    if (xs.size() != 2) throw ConfigError("'" + key + "' must be [low, high]");
    return {xs[0], xs[1]};
  }
  double x = c.number(key, 0.0);
  return {x, x};
}

inline ChoiceMode read_mode(const KeyValueConfig& c, const std::string& key, ChoiceMode fallback) {
  if (!c.has(key)) return fallback;
  auto v = c.text(key, "");
  if (v == "argmax") return ChoiceMode::Argmax;
  if (v == "sampled") return ChoiceMode::Sampled;
  throw ConfigError("'" + key + "' must be argmax or sampled");
}

}  // namespace detail

/// Builds a validated scenario. Unknown keys are errors.
inline ScenarioConfig scenario_from(const KeyValueConfig& c) {
  ScenarioConfig s;
  s.grid_size = static_cast<int>(c.integer("network.grid_size", s.grid_size));
  s.spacing_km = c.number("network.spacing_km", s.spacing_km);
  s.minutes_per_km = c.number("network.minutes_per_km", s.minutes_per_km);
  s.bin_minutes = c.number("network.bin_minutes", s.bin_minutes);
  s.nodes_file = c.path("network.nodes");
  s.links_file = c.path("network.links");
  s.profiles_file = c.path("network.profiles");
  s.od_file = c.path("od.file");
  s.gravity_scale = c.number("od.gravity_scale", s.gravity_scale);
  s.gravity_lambda = c.number("od.gravity_lambda", s.gravity_lambda);
  s.passengers = static_cast<int>(c.integer("demand.passengers", s.passengers));
  s.drivers = static_cast<int>(c.integer("demand.drivers", s.drivers));
  s.supply_level = c.number("demand.supply_level", s.supply_level);
  s.period_minutes = c.number("demand.period_minutes", s.period_minutes);
  s.shares = c.numbers("demand.shares", s.shares);
  s.warmup_periods = static_cast<int>(c.integer("demand.warmup_periods", s.warmup_periods));
  s.warmup_share = c.number("demand.warmup_share", s.warmup_share);
  using detail::read_dist;
  s.vot_passenger = read_dist(c, "attributes.vot_passenger", s.vot_passenger);
  s.vot_driver = read_dist(c, "attributes.vot_driver", s.vot_driver);
  s.alone_unit_cost = read_dist(c, "attributes.alone_unit_cost", s.alone_unit_cost);
  s.rideshare_unit_cost = read_dist(c, "attributes.rideshare_unit_cost", s.rideshare_unit_cost);
  s.max_excess = read_dist(c, "attributes.max_excess", s.max_excess);
  s.match_wait = read_dist(c, "attributes.match_wait", s.match_wait);
  s.speed_factor = read_dist(c, "attributes.speed_factor", s.speed_factor);
  s.capacity = static_cast<int>(c.integer("attributes.capacity", s.capacity));
  s.max_passengers = static_cast<int>(c.integer("attributes.max_passengers", s.max_passengers));
  s.seats = static_cast<int>(c.integer("attributes.seats", s.seats));
  s.driver_operating_cost_per_km =
      c.number("provider.driver_operating_cost_per_km", s.driver_operating_cost_per_km);
  auto& m = s.sim;
  m.window = c.number("provider.window", m.window);
  m.decision_interval = c.number("provider.decision_interval", m.decision_interval);
  m.unit_price = c.number("provider.unit_price", m.unit_price);
  m.cancellation_fee = c.number("provider.cancellation_fee", m.cancellation_fee);
  m.p_noshow = c.number("provider.p_noshow", m.p_noshow);
  m.reschedule_tolerance = c.number("provider.reschedule_tolerance", m.reschedule_tolerance);
  m.response_mode = detail::read_mode(c, "provider.response_mode", m.response_mode);
  m.decision_mode = detail::read_mode(c, "provider.decision_mode", m.decision_mode);
  m.candidates.max_new_passengers =
      static_cast<int>(c.integer("provider.max_new_passengers", m.candidates.max_new_passengers));
  m.candidates.candidates_per_driver =
      static_cast<int>(c.integer("provider.candidates_per_driver", m.candidates.candidates_per_driver));
  s.seed = static_cast<std::uint64_t>(c.integer("run.seed", static_cast<long>(s.seed)));
  s.replications = static_cast<int>(c.integer("run.replications", s.replications));
  s.workers = static_cast<int>(c.integer("run.workers", s.workers));
  auto unused = c.unused();
  if (!unused.empty()) throw ConfigError("unknown configuration key '" + unused.front() + "'");
  s.validate();
  return s;
}

inline Network build_network(const ScenarioConfig& s) {
  if (!s.nodes_file.empty()) {
    std::optional<std::filesystem::path> prof;
    if (!s.profiles_file.empty()) prof = s.profiles_file;
    return load_network(s.nodes_file, s.links_file, prof, s.bin_minutes, s.minutes_per_km);
  }
  return make_grid_network(s.grid_size, s.spacing_km, s.minutes_per_km);
}

struct OdPair {
  NodeId origin = 0;
  NodeId destination = 0;
  long trips = 0;
};

inline std::vector<OdPair> load_od(const std::filesystem::path& file) {
  std::vector<OdPair> out;
  for (auto& r : io::read_csv(file, 3)) {
    auto w = io::where(file, r.line);
    OdPair p{io::to_int(r.fields[0], w), io::to_int(r.fields[1], w), static_cast<long>(io::to_int(r.fields[2], w))};
    if (p.trips < 0) throw ValidationError(w + ": negative trip count");
    if (p.origin != p.destination && p.trips > 0) out.push_back(p);
  }
  return out;
}

/// Gravity demand between every ordered pair of distinct nodes:
/// trips = floor(scale * exp(-distance / lambda)).
inline std::vector<OdPair> gravity_od(const Network& net, double scale, double lambda) {
  if (!(lambda > 0.0) || scale < 0.0) throw ConfigError("bad gravity parameters");
  std::vector<OdPair> out;
  for (std::size_t a = 0; a < net.node_count(); ++a)
    for (std::size_t b = 0; b < net.node_count(); ++b) {
      if (a == b) continue;
      long trips = static_cast<long>(std::floor(scale * std::exp(-net.distance(a, b) / lambda)));
      if (trips > 0) out.push_back({net.id_of(a), net.id_of(b), trips});
    }
  return out;
}

/// Splits `total` by `shares` with largest-remainder rounding; ties go to
/// the earlier period.
inline std::vector<int> split_counts(int total, const std::vector<double>& shares) {
  std::vector<int> out(shares.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = shares[i] * total;
    out[i] = static_cast<int>(std::floor(exact + 1e-9));
    used += out[i];
    rem.push_back({-(exact - out[i]), i});
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t k = 0; used < total && k < rem.size(); ++k, ++used) ++out[rem[k].second];
  return out;
}

/// Per-period agent counts, warmup periods first.
struct PeriodPlan {
  Time start = 0.0;
  Time end = 0.0;
  bool warmup = false;
  int passengers = 0;
  int drivers = 0;
};

inline std::vector<PeriodPlan> period_plan(const ScenarioConfig& s) {
  std::vector<PeriodPlan> out;
  const int drivers = s.driver_count();
  Time t = 0.0;
  for (int w = 0; w < s.warmup_periods; ++w) {
    out.push_back({t, t + s.period_minutes, true,
                   static_cast<int>(std::lround(s.warmup_share * s.passengers)),
                   static_cast<int>(std::lround(s.warmup_share * drivers))});
    t += s.period_minutes;
  }
  auto pc = split_counts(s.passengers, s.shares);
  auto dc = split_counts(drivers, s.shares);
  for (std::size_t k = 0; k < s.shares.size(); ++k) {
    out.push_back({t, t + s.period_minutes, false, pc[k], dc[k]});
    t += s.period_minutes;
  }
  return out;
}

/// Samples trips without replacement, splits them over the periods and
/// draws every agent attribute from a stream keyed by the agent's index.
inline std::vector<AgentBatch> sample_population(const ScenarioConfig& s, const Network& net,
                                                 const std::vector<OdPair>& od, std::uint64_t seed) {
  auto plan = period_plan(s);
  long need = 0;
  for (auto& p : plan) need += p.passengers + p.drivers;
  long available = 0;
  for (auto& p : od) available += p.trips;
  if (need > available)
    throw ConfigError("sample of " + std::to_string(need) + " trips exceeds the OD population of " +
                      std::to_string(available));

  // Partial Fisher-Yates over the expanded trip list, via cumulative counts.
  std::vector<long> cum;
  long acc = 0;
  for (auto& p : od) cum.push_back(acc += p.trips);
  auto pair_of = [&](long trip) {
    return static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), trip) - cum.begin());
  };
  std::vector<long> perm;
  std::map<long, long> swapped;  // sparse permutation
  CounterRng pick(seed, static_cast<std::uint64_t>(Stream::Population), 0);
  auto at = [&](long i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  for (long i = 0; i < need; ++i) {
    long j = i + static_cast<long>(pick.below(static_cast<std::uint64_t>(available - i)));
    long vi = at(i), vj = at(j);
    swapped[i] = vj;
    swapped[j] = vi;
    perm.push_back(vj);
  }

  Router router(net);
  std::vector<AgentBatch> batches;
  long next_trip = 0;
  std::uint32_t pax_index = 0, drv_index = 0;
  for (const auto& period : plan) {
    AgentBatch b;
    b.time = period.start;
    for (int k = 0; k < period.passengers; ++k) {
      const auto& trip = od[pair_of(perm[next_trip++])];
      CounterRng rng(seed, static_cast<std::uint64_t>(Stream::Population),
                     hash_combine(1, pax_index++));
      Passenger p;
      p.warmup = period.warmup;
      p.origin = trip.origin;
      p.destination = trip.destination;
      p.desired_departure = rng.uniform(period.start, period.end);
      p.online_time = rng.uniform(p.desired_departure, period.end);
      p.seats = s.seats;
      p.coef = {-s.vot_passenger.draw(rng), -1.0};
      p.alone_unit_cost = s.alone_unit_cost.draw(rng);
      p.expected_pay = s.rideshare_unit_cost.draw(rng) / p.alone_unit_cost;
      p.max_excess = s.max_excess.draw(rng);
      Travel tr = router.travel(p.origin, p.destination, p.desired_departure);
      p.sp_time = tr.arrival - p.desired_departure;
      p.sp_km = tr.distance_km;
      p.max_pickup_wait = max_pickup_wait(p);
      p.max_match_wait = std::min(s.match_wait.draw(rng), p.max_pickup_wait);
      p.decision_time = p.online_time + p.max_match_wait;
      b.passengers.push_back(p);
    }
    for (int k = 0; k < period.drivers; ++k) {
      const auto& trip = od[pair_of(perm[next_trip++])];
      CounterRng rng(seed, static_cast<std::uint64_t>(Stream::Population),
                     hash_combine(2, drv_index++));
      Driver d;
      d.warmup = period.warmup;
      d.origin = trip.origin;
      d.destination = trip.destination;
      d.departure = rng.uniform(period.start, period.end);
      d.online_time = rng.uniform(d.departure, period.end);
      d.coef = {-s.vot_driver.draw(rng), -1.0};
      d.max_excess = s.max_excess.draw(rng);
      d.speed_factor = s.speed_factor.draw(rng);
      d.capacity = s.capacity;
      d.max_passengers = s.max_passengers;
      d.operating_cost_per_km = s.driver_operating_cost_per_km;
      Travel tr = router.travel(d.origin, d.destination, d.departure);
      d.sp_time = tr.arrival - d.departure;
      d.sp_km = tr.distance_km;
      d.decision_time = rng.uniform(d.departure, d.departure + d.sp_time);
      b.drivers.push_back(d);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

inline std::vector<OdPair> od_source(const ScenarioConfig& s, const Network& net) {
  if (!s.od_file.empty()) return load_od(s.od_file);
  return gravity_od(net, s.gravity_scale, s.gravity_lambda);
}

inline std::uint64_t replication_seed(std::uint64_t master, int r) {
  return hash_combine(hash_combine(master, static_cast<std::uint64_t>(Stream::Replication)),
                      static_cast<std::uint64_t>(r));
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<std::string> log;
  MetricsReport metrics;
  Audit audit;
  std::vector<json> agents;
  std::vector<std::string> warnings;
  double runtime_s = 0.0;

  std::string log_text() const {
    std::string out;
    for (auto& l : log) {
      out += l;
      out += '\n';
    }
    return out;
  }
  std::vector<json> events() const {
    std::vector<json> out;
    out.reserve(log.size());
    for (auto& l : log) out.push_back(json::parse(l));
    return out;
  }
};

/// One full simulation: population, engine run, metrics and audit.
inline RunResult run_scenario(const ScenarioConfig& s, const Network& net, std::uint64_t seed,
                              DecisionOverride* hooks = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  auto batches = sample_population(s, net, od_source(s, net), seed);
  Simulation sim(net, s.sim, seed, hooks);
  for (auto& b : batches) sim.add_batch(std::move(b));
  sim.run();
  RunResult r;
  r.seed = seed;
  r.log = sim.log();
  auto folded = fold_log(r.events());
  r.metrics = compute_metrics(folded);
  r.audit = audit(folded);
  r.agents = sim.agent_records();
  r.warnings = sim.warnings();
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                    : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::optional<std::pair<std::size_t, std::exception_ptr>> failure;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure || i < failure->first) failure = {i, std::current_exception()};
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure->second);
}

/// Replication summary: metrics and audits only, so large sweeps stay small
/// in memory.
struct ReplicationSet {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> reports;
  std::vector<double> runtimes;
  std::vector<Audit> audits;
  Aggregate summary;
};

inline ReplicationSet run_replications(const ScenarioConfig& s, const Network& net, int workers = 0) {
  ReplicationSet set;
  const auto n = static_cast<std::size_t>(s.replications);
  set.reports.resize(n);
  set.runtimes.resize(n);
  set.audits.resize(n);
  for (int r = 0; r < s.replications; ++r) set.seeds.push_back(replication_seed(s.seed, r));
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      auto res = run_scenario(s, net, set.seeds[i]);
      set.reports[i] = res.metrics;
      set.runtimes[i] = res.runtime_s;
      set.audits[i] = res.audit;
    } catch (const std::exception& e) {
      throw EngineError("replication with seed " + std::to_string(set.seeds[i]) + " failed: " + e.what());
    }
  });
  set.summary = aggregate(set.reports);
  return set;
}

/// Sweep factor names accepted besides plain dotted keys.
inline std::string factor_key(const std::string& factor) {
  if (factor == "supply-level") return "demand.supply_level";
  if (factor == "matching-window") return "provider.window";
  return factor;
}

struct SweepLevel {
  double level = 0.0;
  ReplicationSet runs;
};

/// One replication set per level; every (level, replication) job runs on
/// the shared worker pool and results are ordered by level, then seed.
inline std::vector<SweepLevel> sweep(const KeyValueConfig& base, const std::string& factor,
                                     const std::vector<double>& levels, int workers = 0) {
  if (levels.empty()) throw ConfigError("sweep needs at least one level");
  const std::string key = factor_key(factor);
  std::vector<ScenarioConfig> cfgs;
  std::vector<Network> nets;
  for (double level : levels) {
    KeyValueConfig c = base;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", level);
    c.set(key + "=" + buf);
    cfgs.push_back(scenario_from(c));
    nets.push_back(build_network(cfgs.back()));
  }
  std::vector<SweepLevel> out(levels.size());
  std::vector<std::pair<std::size_t, int>> jobs;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    out[l].level = levels[l];
    auto& set = out[l].runs;
    set.reports.resize(static_cast<std::size_t>(cfgs[l].replications));
    set.runtimes.resize(set.reports.size());
    set.audits.resize(set.reports.size());
    for (int r = 0; r < cfgs[l].replications; ++r) {
      set.seeds.push_back(replication_seed(cfgs[l].seed, r));
      jobs.push_back({l, r});
    }
  }
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    auto [l, r] = jobs[j];
    auto& set = out[l].runs;
    const auto seed = set.seeds[static_cast<std::size_t>(r)];
    try {
      auto res = run_scenario(cfgs[l], nets[l], seed);
      set.reports[static_cast<std::size_t>(r)] = res.metrics;
      set.runtimes[static_cast<std::size_t>(r)] = res.runtime_s;
      set.audits[static_cast<std::size_t>(r)] = res.audit;
    } catch (const std::exception& e) {
      throw EngineError("level " + std::to_string(levels[l]) + " seed " + std::to_string(seed) +
                        " failed: " + e.what());
    }
  });
  for (auto& lv : out) lv.runs.summary = aggregate(lv.runs.reports);
  return out;
}

/// One row per level: `level,n,<metric>_mean,<metric>_stdev,...`, with the
/// mean per-run wall time last.
inline std::string sweep_csv(const std::vector<SweepLevel>& levels) {
  auto num = [](std::optional<double> x) {
    if (!x) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *x);
    return std::string(buf);
  };
  std::string out = "level,n";
  if (!levels.empty())
    for (auto& [name, st] : levels.front().runs.summary.stats) out += "," + name + "_mean," + name + "_stdev";
  out += ",runtime_s_mean\n";
  for (auto& lv : levels) {
    out += num(lv.level) + "," + std::to_string(lv.runs.reports.size());
    for (auto& [name, st] : lv.runs.summary.stats) out += "," + num(st.mean) + "," + num(st.stdev);
    double rt = 0.0;
    for (double x : lv.runs.runtimes) rt += x;
    out += "," + num(rt / static_cast<double>(std::max<std::size_t>(1, lv.runs.runtimes.size()))) + "\n";
  }
  return out;
}

/// Sensitivity levels used when a sweep names none.
inline std::vector<double> default_levels(const std::string& factor) {
  if (factor == "supply-level")
    return {0.01, 0.05, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0, 1.2, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  if (factor == "matching-window") return {0.1, 0.5, 1, 2, 3, 4, 5, 6, 7, 8};
  throw ConfigError("factor '" + factor + "' needs explicit levels");
}

}  // namespace rideshare
