#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/domain.hpp"
#include "rideshare/network.hpp"

namespace rideshare {

/// Input to the single-driver dial-a-ride search. Riders flagged on_board
/// are fixed drop-offs; the others are pickup/drop-off pairs to place.
struct ScheduleRequest {
  DriverSnapshot driver;
  std::vector<RiderRequest> riders;
  FeasibilityPolicy policy;
};

struct ScheduleResult {
  std::optional<Schedule> schedule;
  std::optional<Violation> binding;  // set when infeasible

  explicit operator bool() const { return schedule.has_value(); }
};

inline double schedule_vkt(const Schedule& s) {
  return std::accumulate(s.leg_km.begin(), s.leg_km.end(), 0.0);
}

namespace detail {

struct SearchStop {
  Stop stop;
  std::size_t rider = 0;
  int pair = -1;  // index of the matching pickup for drop-offs
};

inline std::vector<SearchStop> search_stops(const ScheduleRequest& req) {
  std::vector<SearchStop> out;
  for (std::size_t i = 0; i < req.riders.size(); ++i) {
    const auto& r = req.riders[i];
    int p = -1;
    if (!r.on_board) {
      p = static_cast<int>(out.size());
      out.push_back({r.pickup, i, -1});
    }
    out.push_back({r.dropoff, i, p});
  }
  return out;
}

class DarpSearch {
 public:
  DarpSearch(const ScheduleRequest& req, Router& router)
      : req_(req), router_(router), stops_(search_stops(req)) {
    // Explore in lexicographic stop order so the first optimum found is the
    // lexicographically smallest one.
    order_.resize(stops_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = stops_[a].stop;
      const auto& y = stops_[b].stop;
      return std::tie(x.agent, x.kind) < std::tie(y.agent, y.kind);
    });
    pickup_time_.assign(req.riders.size(), 0.0);
    for (std::size_t i = 0; i < req.riders.size(); ++i)
      if (req.riders[i].on_board) pickup_time_[i] = req.riders[i].picked_up_at;
    placed_.assign(stops_.size(), 0);
  }

  ScheduleResult run() {
    if (static_cast<int>(req_.riders.size()) > req_.driver.max_passengers &&
        !req_.policy.relax_driver_limits)
      return {std::nullopt, Violation{"max_passengers", 0}};
    int onboard_seats = 0;
    for (auto& r : req_.riders)
      if (r.on_board) onboard_seats -= r.dropoff.seats;
    if (onboard_seats != req_.driver.occupied)
      throw ContractError("driver occupancy does not match on-board riders");
    dfs(req_.driver.position, req_.driver.available, req_.driver.occupied, 0.0, 0);
    if (!best_seq_) return {std::nullopt, binding_};
    return {build(*best_seq_), std::nullopt};
  }

 private:
  bool relaxed(std::size_t i) const {
    return req_.policy.relax_onboard && req_.riders[stops_[i].rider].on_board;
  }

  void note(const char* what, std::size_t depth) {
    if (!binding_ || depth >= binding_depth_) {
      binding_ = Violation{what, depth};
      binding_depth_ = depth;
    }
  }

  void dfs(NodeId at, Time now, int load, double dist, std::size_t depth) {
    if (best_seq_ && dist >= best_vkt_) return;
    if (depth == stops_.size()) {
      finish(at, now, dist, depth);
      return;
    }
    for (std::size_t i = 0; i < stops_.size(); ++i)
      if (!placed_[i] && !relaxed(i) && now > stops_[i].stop.latest + 1e-9) {
        note("window", depth);
        return;
      }
    for (auto i : order_) {
      if (placed_[i]) continue;
      const auto& ss = stops_[i];
      if (ss.pair >= 0 && !placed_[ss.pair]) continue;
      const int next_load = load + ss.stop.seats;
      if (next_load > req_.driver.capacity) {
        note("capacity", depth);
        continue;
      }
      Travel tr;
      try {
        tr = router_.travel(at, ss.stop.node, now);
      } catch (const NoPathError&) {
        note("no_path", depth);
        continue;
      }
      const bool rel = relaxed(i);
      Time t = tr.arrival;
      if (!rel) {
        t = std::max(t, ss.stop.earliest);
        if (t > ss.stop.latest + 1e-9) {
          note("window", depth);
          continue;
        }
      }
      const auto& rider = req_.riders[ss.rider];
      if (ss.stop.kind == StopKind::DropOff && !rel &&
          t - pickup_time_[ss.rider] > rider.max_ride + 1e-9) {
        note("ride_time", depth);
        continue;
      }
      Time saved = pickup_time_[ss.rider];
      if (ss.stop.kind == StopKind::Pickup) pickup_time_[ss.rider] = t;
      placed_[i] = 1;
      seq_.push_back(i);
      dfs(ss.stop.node, t, next_load, dist + tr.distance_km, depth + 1);
      seq_.pop_back();
      placed_[i] = 0;
      pickup_time_[ss.rider] = saved;
    }
  }

  void finish(NodeId at, Time now, double dist, std::size_t depth) {
    Travel tr;
    try {
      tr = router_.travel(at, req_.driver.destination, now);
    } catch (const NoPathError&) {
      note("no_path", depth);
      return;
    }
    if (!req_.policy.relax_driver_limits) {
      if (tr.arrival > req_.driver.latest_arrival + 1e-9) {
        note("latest_arrival", depth);
        return;
      }
      if (tr.arrival - req_.driver.departure > req_.driver.max_driving + 1e-9) {
        note("max_driving", depth);
        return;
      }
    }
    const double total = dist + tr.distance_km;
    if (!best_seq_ || total < best_vkt_) {
      best_vkt_ = total;
      best_seq_ = seq_;
    }
  }

  Schedule build(const std::vector<std::size_t>& seq) {
    Schedule s;
    s.driver = req_.driver;
    s.riders = req_.riders;
    NodeId at = req_.driver.position;
    Time now = req_.driver.available;
    auto push = [&](const Stop& st, bool rel) {
      Travel tr = router_.travel(at, st.node, now);
      s.stops.push_back(st);
      s.arrival.push_back(tr.arrival);
      Time t = rel ? tr.arrival : std::max(tr.arrival, st.earliest);
      s.service.push_back(t);
      s.leg_km.push_back(tr.distance_km);
      at = st.node;
      now = t;
    };
    for (auto i : seq) push(stops_[i].stop, relaxed(i));
    Stop dest{req_.driver.destination, StopKind::Destination, req_.driver.id, -kInf,
              req_.driver.latest_arrival, 0};
    push(dest, true);
    s.vkt = schedule_vkt(s);
    return s;
  }

  const ScheduleRequest& req_;
  Router& router_;
  std::vector<SearchStop> stops_;
  std::vector<std::size_t> order_;
  std::vector<Time> pickup_time_;
  std::vector<char> placed_;
  std::vector<std::size_t> seq_;
  std::optional<std::vector<std::size_t>> best_seq_;
  double best_vkt_ = kInf;
  std::optional<Violation> binding_;
  std::size_t binding_depth_ = 0;
};

}  // namespace detail

/// Minimum-VKT feasible stop sequence for one driver, found by exhaustive
/// branch-and-bound over stop interleavings. Ties go to the
/// lexicographically smallest (agent, stop kind) sequence.
inline ScheduleResult best_schedule(const ScheduleRequest& req, Router& router) {
  return detail::DarpSearch(req, router).run();
}

inline ScheduleResult best_schedule(const ScheduleRequest& req, const Network& net) {
  Router router(net);
  return best_schedule(req, router);
}

/// Schedule that keeps the given stop order (no search). Used for a
/// driver's current plan re-timed from a new position.
inline Schedule evaluate_order(const DriverSnapshot& driver, const std::vector<RiderRequest>& riders,
                               const std::vector<Stop>& order, Router& router) {
  Schedule s;
  s.driver = driver;
  s.riders = riders;
  NodeId at = driver.position;
  Time now = driver.available;
  for (const auto& st : order) {
    Travel tr = router.travel(at, st.node, now);
    s.stops.push_back(st);
    s.arrival.push_back(tr.arrival);
    Time t = st.kind == StopKind::Destination ? tr.arrival : std::max(tr.arrival, st.earliest);
    s.service.push_back(t);
    s.leg_km.push_back(tr.distance_km);
    at = st.node;
    now = t;
  }
  s.vkt = schedule_vkt(s);
  return s;
}

/// Request for the schedule with `ids` taken out. Only passengers not yet
/// picked up may be removed.
inline ScheduleRequest remove_passengers(const Schedule& s, const std::vector<AgentRef>& ids) {
  ScheduleRequest req;
  req.driver = s.driver;
  std::set<AgentRef> drop(ids.begin(), ids.end());
  for (auto id : drop) {
    const auto* r = s.rider(id);
    if (!r) throw ContractError("passenger " + id.str() + " is not on this schedule");
    if (r->on_board) throw ContractError("cannot remove on-board passenger " + id.str());
  }
  for (const auto& r : s.riders)
    if (!drop.count(r.id)) req.riders.push_back(r);
  return req;
}

}  // namespace rideshare
