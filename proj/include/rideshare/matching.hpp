#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/domain.hpp"
#include "rideshare/scheduling.hpp"

namespace rideshare {

/// A pooled driver as seen by the provider after position synchronisation.
struct PoolDriver {
  DriverSnapshot snapshot;
  std::vector<RiderRequest> committed;  // on-board and awaiting pickup
  double current_vkt = 0.0;             // VKT of the current plan from the snapshot
};

struct PoolPassenger {
  RiderRequest request;
  double sp_km = 0.0;
};

struct CandidateConfig {
  int max_new_passengers = 2;      // combination size cap per round
  int candidates_per_driver = 8;   // nearest feasible single insertions kept per driver
};

/// Driver-passengers combination. Dummies have an empty schedule: a driver
/// dummy keeps the current plan, a passenger dummy means "not matched".
struct Combination {
  AgentRef driver;  // unset for passenger dummies
  std::vector<AgentRef> passengers;  // new passengers only
  std::optional<Schedule> schedule;
  double vkt = 0.0;
  enum class Kind { Joint, DriverDummy, PassengerDummy } kind = Kind::Joint;

  bool dummy() const { return kind != Kind::Joint; }
};

struct CandidateSet {
  std::vector<Combination> combos;
  std::vector<AgentRef> drivers;
  std::vector<AgentRef> passengers;

  /// omega(j, m): passenger j is covered by combination m.
  bool omega(std::size_t j, std::size_t m) const {
    const auto& c = combos[m];
    return std::find(c.passengers.begin(), c.passengers.end(), passengers[j]) != c.passengers.end();
  }
  /// tau(i, m): driver i is associated with combination m.
  bool tau(std::size_t i, std::size_t m) const {
    const auto& c = combos[m];
    return c.kind != Combination::Kind::PassengerDummy && c.driver == drivers[i];
  }
};

struct MatchingSolution {
  std::vector<char> selected;  // delta(m)
  double z = 0.0;              // km
  std::vector<AgentRef> expected_agents;  // drivers + new passengers in selected joint combos
};

/// Enumerates feasible driver-passengers combinations up to the size cap,
/// plus one dummy per driver and per passenger. Pairs are only tried from
/// passengers that are individually feasible with the driver.
inline CandidateSet build_candidates(const std::vector<PoolDriver>& drivers,
                                     const std::vector<PoolPassenger>& passengers, Router& router,
                                     const CandidateConfig& cfg = {}) {
  CandidateSet cs;
  for (auto& d : drivers) cs.drivers.push_back(d.snapshot.id);
  for (auto& p : passengers) cs.passengers.push_back(p.request.id);
  const Network& net = router.network();

  for (const auto& d : drivers) {
    const int free_slots = d.snapshot.max_passengers - static_cast<int>(d.committed.size());
    if (free_slots <= 0 || cfg.max_new_passengers <= 0) continue;
    const auto at = net.index_of(d.snapshot.position);
    // Quick reachability filter with the admissible travel-time bound, then
    // rank by that bound so the per-driver cap keeps the closest passengers.
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t j = 0; j < passengers.size(); ++j) {
      const auto& r = passengers[j].request;
      if (r.pickup.seats > d.snapshot.capacity) continue;
      double lb = 0.0;
      if (at) lb = net.heuristic(*at, net.require(r.pickup.node));
      if (d.snapshot.available + lb > r.pickup.latest + 1e-9) continue;
      near.push_back({lb, j});
    }
    std::sort(near.begin(), near.end());

    std::vector<std::size_t> singles;
    for (auto [lb, j] : near) {
      if (static_cast<int>(singles.size()) >= cfg.candidates_per_driver) break;
      ScheduleRequest req{d.snapshot, d.committed, {}};
      req.riders.push_back(passengers[j].request);
      auto res = best_schedule(req, router);
      if (!res) continue;
      singles.push_back(j);
      Combination c;
      c.driver = d.snapshot.id;
      c.passengers = {passengers[j].request.id};
      c.vkt = res.schedule->vkt;
      c.schedule = std::move(res.schedule);
      cs.combos.push_back(std::move(c));
    }
    if (cfg.max_new_passengers >= 2 && free_slots >= 2) {
      std::sort(singles.begin(), singles.end());
      for (std::size_t a = 0; a < singles.size(); ++a)
        for (std::size_t b = a + 1; b < singles.size(); ++b) {
          ScheduleRequest req{d.snapshot, d.committed, {}};
          req.riders.push_back(passengers[singles[a]].request);
          req.riders.push_back(passengers[singles[b]].request);
          auto res = best_schedule(req, router);
          if (!res) continue;
          Combination c;
          c.driver = d.snapshot.id;
          c.passengers = {passengers[singles[a]].request.id, passengers[singles[b]].request.id};
          c.vkt = res.schedule->vkt;
          c.schedule = std::move(res.schedule);
          cs.combos.push_back(std::move(c));
        }
    }
  }
  for (const auto& d : drivers) {
    Combination c;
    c.driver = d.snapshot.id;
    c.kind = Combination::Kind::DriverDummy;
    c.vkt = d.current_vkt;
    cs.combos.push_back(std::move(c));
  }
  for (const auto& p : passengers) {
    Combination c;
    c.passengers = {p.request.id};
    c.kind = Combination::Kind::PassengerDummy;
    c.vkt = p.sp_km;
    cs.combos.push_back(std::move(c));
  }
  return cs;
}

namespace detail {

/// LP relaxation of set packing, max c'x s.t. Ax <= 1, x >= 0, with A a
/// 0/1 incidence matrix. Dense tableau simplex from the slack basis;
/// Dantzig pricing, switching to Bland's rule on long degenerate runs.
struct PackingLp {
  double objective = 0.0;
  std::vector<double> x;

  static PackingLp solve(const std::vector<std::vector<int>>& cols, const std::vector<double>& c, int rows) {
    constexpr double eps = 1e-9;
    const std::size_t n = cols.size(), m = static_cast<std::size_t>(rows), w = n + m + 1;
    std::vector<double> t((m + 1) * w, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return t[i * w + j]; };
    for (std::size_t j = 0; j < n; ++j) {
      for (int r : cols[j]) at(static_cast<std::size_t>(r), j) = 1.0;
      at(m, j) = -c[j];
    }
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) {
      at(i, n + i) = 1.0;
      at(i, w - 1) = 1.0;
      basis[i] = n + i;
    }
    int degenerate = 0;
    for (std::size_t iter = 0; iter < 50 * (n + m) + 1000; ++iter) {
      const bool bland = degenerate > 50;
      std::size_t enter = w;
      double most = -eps;
      for (std::size_t j = 0; j + 1 < w; ++j)
        if (at(m, j) < most) {
          enter = j;
          if (bland) break;
          most = at(m, j);
        }
      if (enter == w) break;
      std::size_t leave = m;
      double ratio = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double a = at(i, enter);
        if (a <= eps) continue;
        const double r = at(i, w - 1) / a;
        if (leave == m || r < ratio - eps || (r <= ratio + eps && basis[i] < basis[leave])) {
          leave = i;
          ratio = r;
        }
      }
      if (leave == m) throw ContractError("unbounded packing relaxation");
      degenerate = ratio <= eps ? degenerate + 1 : 0;
      const double piv = at(leave, enter);
      for (std::size_t j = 0; j < w; ++j) at(leave, j) /= piv;
      for (std::size_t i = 0; i <= m; ++i) {
        if (i == leave) continue;
        const double f = at(i, enter);
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < w; ++j) at(i, j) -= f * at(leave, j);
      }
      basis[leave] = enter;
    }
    PackingLp out;
    out.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      if (basis[i] < n) out.x[basis[i]] = at(i, w - 1);
    out.objective = at(m, w - 1);
    return out;
  }
};

/// Exact set packing by depth-first branch-and-bound. Every agent is covered
/// by exactly one combination (its dummy if nothing else), which is the same
/// as choosing disjoint joint combinations that maximise total saving
/// relative to the all-dummy solution.
class PackingSolver {
 public:
  explicit PackingSolver(const CandidateSet& cs) : cs_(cs) {}

  MatchingSolution solve() {
    const std::size_t n = cs_.combos.size();
    MatchingSolution sol;
    sol.selected.assign(n, 0);
    std::map<AgentRef, double> dummy_weight;
    std::map<AgentRef, std::size_t> dummy_index;
    for (std::size_t m = 0; m < n; ++m) {
      const auto& c = cs_.combos[m];
      if (c.kind == Combination::Kind::DriverDummy) {
        dummy_weight[c.driver] = c.vkt;
        dummy_index[c.driver] = m;
      } else if (c.kind == Combination::Kind::PassengerDummy) {
        dummy_weight[c.passengers.front()] = c.vkt;
        dummy_index[c.passengers.front()] = m;
      }
    }
    for (auto d : cs_.drivers)
      if (!dummy_weight.count(d)) throw ContractError("missing dummy for driver " + d.str());
    for (auto p : cs_.passengers)
      if (!dummy_weight.count(p)) throw ContractError("missing dummy for passenger " + p.str());

    // Group joint combinations by driver; keep only strictly improving ones.
    std::map<AgentRef, std::vector<std::size_t>> by_driver;
    for (std::size_t m = 0; m < n; ++m) {
      const auto& c = cs_.combos[m];
      if (c.kind != Combination::Kind::Joint) continue;
      double saving = dummy_weight.at(c.driver) - c.vkt;
      for (auto p : c.passengers) saving += dummy_weight.at(p);
      saving_.resize(n, 0.0);
      saving_[m] = saving;
      if (saving > 0.0) by_driver[c.driver].push_back(m);
    }
    saving_.resize(n, 0.0);

    // Independent components (drivers linked through shared passengers).
    std::map<AgentRef, AgentRef> parent;
    std::function<AgentRef(AgentRef)> find = [&](AgentRef a) {
      auto it = parent.find(a);
      if (it == parent.end() || it->second == a) return a;
      return it->second = find(it->second);
    };
    auto unite = [&](AgentRef a, AgentRef b) {
      a = find(a);
      b = find(b);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };
    for (auto& [d, ms] : by_driver) {
      parent.emplace(d, d);
      for (auto m : ms)
        for (auto p : cs_.combos[m].passengers) {
          parent.emplace(p, p);
          unite(d, p);
        }
    }
    std::map<AgentRef, std::vector<AgentRef>> components;
    for (auto& [d, ms] : by_driver) components[find(d)].push_back(d);

    std::set<std::size_t> chosen;
    for (auto& [root, comp_drivers] : components) {
      // Dense resource indices: drivers first, then passengers.
      std::map<AgentRef, int> res;
      for (auto d : comp_drivers) res.emplace(d, static_cast<int>(res.size()));
      const int n_drivers = static_cast<int>(res.size());
      for (auto d : comp_drivers)
        for (auto m : by_driver[d])
          for (auto p : cs_.combos[m].passengers) res.emplace(p, static_cast<int>(res.size()));
      const int n_res = static_cast<int>(res.size());
      options_.clear();
      for (auto d : comp_drivers)
        for (auto m : by_driver[d]) {
          Option o{m, saving_[m], {res.at(d)}};
          for (auto p : cs_.combos[m].passengers) o.res.push_back(res.at(p));
          options_.push_back(std::move(o));
        }
      // Branch on the smaller side of the market.
      const bool on_drivers = n_drivers <= n_res - n_drivers;
      std::vector<int> entities;
      for (int r = on_drivers ? 0 : n_drivers; r < (on_drivers ? n_drivers : n_res); ++r) entities.push_back(r);
      std::vector<double> top(static_cast<std::size_t>(n_res), 0.0);
      groups_.assign(static_cast<std::size_t>(n_res), {});
      for (std::size_t k = 0; k < options_.size(); ++k)
        for (int r : options_[k].res) {
          groups_[static_cast<std::size_t>(r)].push_back(k);
          top[static_cast<std::size_t>(r)] = std::max(top[static_cast<std::size_t>(r)], options_[k].saving);
        }
      for (auto& g : groups_)
        std::stable_sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
          return options_[a].saving > options_[b].saving;
        });
      // Entities with the largest potential first tighten the bound early.
      std::stable_sort(entities.begin(), entities.end(), [&](int a, int b) {
        return top[static_cast<std::size_t>(a)] > top[static_cast<std::size_t>(b)];
      });
      order_ = std::move(entities);
      n_drivers_ = n_drivers;
      used_.assign(static_cast<std::size_t>(n_res), 0);
      best_by_res_.assign(static_cast<std::size_t>(n_res), 0.0);
      pick_.clear();
      greedy();
      search(0, 0.0);
      chosen.insert(best_pick_.begin(), best_pick_.end());
    }

    std::set<AgentRef> covered;
    for (auto m : chosen) {
      const auto& c = cs_.combos[m];
      sol.selected[m] = 1;
      covered.insert(c.driver);
      sol.expected_agents.push_back(c.driver);
      for (auto p : c.passengers) {
        covered.insert(p);
        sol.expected_agents.push_back(p);
      }
    }
    for (auto& [agent, m] : dummy_index)
      if (!covered.count(agent)) sol.selected[m] = 1;
    for (std::size_t m = 0; m < n; ++m)
      if (sol.selected[m]) sol.z += cs_.combos[m].vkt;
    std::sort(sol.expected_agents.begin(), sol.expected_agents.end());
    return sol;
  }

 private:
  struct Option {
    std::size_t m = 0;
    double saving = 0.0;
    std::vector<int> res;  // driver, then passengers
  };

  bool free(const Option& o) const {
    return std::none_of(o.res.begin(), o.res.end(), [&](int r) { return used_[static_cast<std::size_t>(r)] != 0; });
  }

  void take(const Option& o, char v) {
    for (int r : o.res) used_[static_cast<std::size_t>(r)] = v;
  }

  /// Incumbent: options by decreasing saving, taken while compatible.
  void greedy() {
    std::vector<std::size_t> idx(options_.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return options_[a].saving > options_[b].saving; });
    best_ = 0.0;
    best_pick_.clear();
    for (auto k : idx)
      if (free(options_[k])) {
        take(options_[k], 1);
        best_ += options_[k].saving;
        best_pick_.push_back(options_[k].m);
      }
    std::fill(used_.begin(), used_.end(), 0);
  }

  /// Upper bound on the saving still obtainable from free options: the
  /// smaller of a per-driver and a per-passenger relaxation. Decided
  /// entities are marked used, so only open ones contribute.
  double bound() {
    std::fill(best_by_res_.begin(), best_by_res_.end(), 0.0);
    for (const auto& o : options_) {
      if (!free(o)) continue;
      auto& d = best_by_res_[static_cast<std::size_t>(o.res.front())];
      d = std::max(d, o.saving);
      const double share = o.saving / static_cast<double>(o.res.size() - 1);
      for (std::size_t i = 1; i < o.res.size(); ++i) {
        auto& p = best_by_res_[static_cast<std::size_t>(o.res[i])];
        p = std::max(p, share);
      }
    }
    double by_driver = 0.0, by_passenger = 0.0;
    for (std::size_t r = 0; r < best_by_res_.size(); ++r)
      (static_cast<int>(r) < n_drivers_ ? by_driver : by_passenger) += best_by_res_[r];
    return std::min(by_driver, by_passenger);
  }

  /// Solves the LP over the free options. Returns true when the subtree is
  /// settled: pruned by the bound, or solved by an integral LP optimum.
  bool relax(double value) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < options_.size(); ++i)
      if (free(options_[i])) live.push_back(i);
    if (live.size() < 2) return false;
    std::map<int, int> rows;
    std::vector<std::vector<int>> cols;
    std::vector<double> c;
    for (auto i : live) {
      std::vector<int> col;
      for (int r : options_[i].res) col.push_back(rows.emplace(r, static_cast<int>(rows.size())).first->second);
      cols.push_back(std::move(col));
      c.push_back(options_[i].saving);
    }
    auto lp = PackingLp::solve(cols, c, static_cast<int>(rows.size()));
    if (value + lp.objective <= best_ + 1e-7) return true;
    for (double v : lp.x)
      if (v > 1e-9 && v < 1.0 - 1e-9) return false;
    double total = value;
    std::vector<std::size_t> picks = pick_;
    for (std::size_t j = 0; j < live.size(); ++j)
      if (lp.x[j] > 0.5) {
        total += options_[live[j]].saving;
        picks.push_back(options_[live[j]].m);
      }
    if (total > best_) {
      best_ = total;
      best_pick_ = std::move(picks);
    }
    return true;
  }

  void search(std::size_t k, double value) {
    if (value > best_) {
      best_ = value;
      best_pick_ = pick_;
    }
    if (k == order_.size()) return;
    const auto e = static_cast<std::size_t>(order_[k]);
    if (used_[e]) {
      search(k + 1, value);
      return;
    }
    if (value + bound() <= best_) return;
    if (relax(value)) return;
    for (auto i : groups_[e]) {
      const auto& o = options_[i];
      if (!free(o)) continue;
      take(o, 1);
      pick_.push_back(o.m);
      search(k + 1, value + o.saving);
      pick_.pop_back();
      take(o, 0);
    }
    used_[e] = 1;  // entity stays with its dummy
    search(k + 1, value);
    used_[e] = 0;
  }

  const CandidateSet& cs_;
  std::vector<double> saving_;
  std::vector<Option> options_;
  std::vector<std::vector<std::size_t>> groups_;  // options per resource
  std::vector<int> order_;
  int n_drivers_ = 0;
  std::vector<std::size_t> pick_, best_pick_;
  std::vector<char> used_;
  std::vector<double> best_by_res_;
  double best_ = 0.0;
};

}  // namespace detail

/// Minimum-VKT selection: each pooled agent ends up in exactly one selected
/// combination (possibly its dummy), so no agent is matched twice.
inline MatchingSolution solve_matching(const CandidateSet& cs) {
  return detail::PackingSolver(cs).solve();
}

/// Splits the joint trip's variable cost unit_price * VKT over the driver
/// and passengers in proportion to their shortest-path distances. Passengers
/// pay their share; the driver earns the passengers' total (no commission).
inline Schedule allocate_prices(Schedule s, double unit_price, double operating_cost_per_km = 0.0) {
  s.payments.clear();
  s.earning = 0.0;
  s.operating_cost = operating_cost_per_km * s.vkt;
  if (s.riders.empty()) return s;
  const double total_cost = unit_price * s.vkt;
  double total_sp = s.driver.direct_km;
  for (const auto& r : s.riders) total_sp += r.sp_km;
  const double participants = static_cast<double>(s.riders.size() + 1);
  for (const auto& r : s.riders) {
    double share = total_sp > 0.0 ? total_cost * r.sp_km / total_sp : total_cost / participants;
    s.payments[r.id] = share;
    s.earning += share;
  }
  return s;
}

/// Driver's own (unbilled) share of the joint cost.
inline double driver_share(const Schedule& s, double unit_price) {
  const double total_cost = unit_price * s.vkt;
  double total_sp = s.driver.direct_km;
  for (const auto& r : s.riders) total_sp += r.sp_km;
  if (total_sp > 0.0) return total_cost * s.driver.direct_km / total_sp;
  return total_cost / static_cast<double>(s.riders.size() + 1);
}

struct Vote {
  AgentRef agent;
  bool accept = false;
};

enum class Finalization { Finalized, Rejected };

/// Majority voting. Stage one: the driver and previously matched passengers
/// vote; a strict majority decides and a tie goes to the driver's vote.
/// Stage two: every new passenger must accept.
inline Finalization finalize_matches(const Vote& driver_vote, const std::vector<Vote>& prior_votes,
                                     const std::vector<Vote>& new_votes) {
  int yes = driver_vote.accept ? 1 : 0;
  int no = driver_vote.accept ? 0 : 1;
  for (const auto& v : prior_votes) (v.accept ? yes : no) += 1;
  const bool stage_one = yes != no ? yes > no : driver_vote.accept;
  if (!stage_one) return Finalization::Rejected;
  for (const auto& v : new_votes)
    if (!v.accept) return Finalization::Rejected;
  return Finalization::Finalized;
}

}  // namespace rideshare
