#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/network.hpp"

namespace rideshare {

enum class PassengerStatus { NotMatched, MatchedWaitingForPickup, OnBoard, DroppedOff, Quit };

/// Things that move a passenger through its status machine.
enum class PassengerEvent {
  FinalizedMatch,  // provider assigned a finalized schedule
  Unmatch,         // driver cancelled, or passenger cancelled but stays in service
  Pickup,
  DropOff,
  Quit,            // leaves the ridesharing service
  NoShow,          // absent at pickup, discovered by the driver
};

inline const char* to_string(PassengerStatus s) {
  switch (s) {
    case PassengerStatus::NotMatched: return "NotMatched";
    case PassengerStatus::MatchedWaitingForPickup: return "MatchedWaitingForPickup";
    case PassengerStatus::OnBoard: return "OnBoard";
    case PassengerStatus::DroppedOff: return "DroppedOff";
    case PassengerStatus::Quit: return "Quit";
  }
  return "?";
}

inline const char* to_string(PassengerEvent e) {
  switch (e) {
    case PassengerEvent::FinalizedMatch: return "finalized";
    case PassengerEvent::Unmatch: return "unmatch";
    case PassengerEvent::Pickup: return "pickup";
    case PassengerEvent::DropOff: return "dropoff";
    case PassengerEvent::Quit: return "quit";
    case PassengerEvent::NoShow: return "noshow";
  }
  return "?";
}

inline PassengerEvent passenger_event_from_string(const std::string& s) {
  for (auto e : {PassengerEvent::FinalizedMatch, PassengerEvent::Unmatch, PassengerEvent::Pickup,
                 PassengerEvent::DropOff, PassengerEvent::Quit, PassengerEvent::NoShow})
    if (s == to_string(e)) return e;
  throw ParseError("unknown passenger event '" + s + "'");
}

inline bool is_terminal(PassengerStatus s) {
  return s == PassengerStatus::DroppedOff || s == PassengerStatus::Quit;
}

/// Legal transitions:
///   NotMatched -> MatchedWaitingForPickup | Quit
///   MatchedWaitingForPickup -> OnBoard | NotMatched | Quit
///   OnBoard -> DroppedOff
/// Anything else is a simulation bug and throws StateError.
inline PassengerStatus next_status(PassengerStatus s, PassengerEvent e) {
  using S = PassengerStatus;
  using E = PassengerEvent;
  switch (s) {
    case S::NotMatched:
      if (e == E::FinalizedMatch) return S::MatchedWaitingForPickup;
      if (e == E::Quit) return S::Quit;
      break;
    case S::MatchedWaitingForPickup:
      if (e == E::Pickup) return S::OnBoard;
      if (e == E::Unmatch) return S::NotMatched;
      if (e == E::Quit || e == E::NoShow) return S::Quit;
      break;
    case S::OnBoard:
      if (e == E::DropOff) return S::DroppedOff;
      break;
    case S::DroppedOff:
    case S::Quit:
      break;
  }
  throw StateError(std::string("illegal passenger transition: ") + to_string(s) + " + " +
                   to_string(e));
}

struct Coefficients {
  double beta_time = -1.0;  // utility per minute (negative)
  double beta_cost = -1.0;  // utility per cost unit (negative)

  /// Value of time, beta_time / beta_cost.
  double vot() const { return beta_time / beta_cost; }
};

enum class StopKind { Origin, Destination, Pickup, DropOff };

inline const char* to_string(StopKind k) {
  switch (k) {
    case StopKind::Origin: return "origin";
    case StopKind::Destination: return "destination";
    case StopKind::Pickup: return "pickup";
    case StopKind::DropOff: return "dropoff";
  }
  return "?";
}

struct Stop {
  NodeId node = 0;
  StopKind kind = StopKind::Origin;
  AgentRef agent;
  Time earliest = -kInf;
  Time latest = kInf;
  int seats = 0;  // + for pickup, - for drop-off

  friend bool operator==(const Stop&, const Stop&) = default;
};

struct Passenger {
  AgentRef id;
  PassengerStatus status = PassengerStatus::NotMatched;
  bool online = false;
  bool warmup = false;

  NodeId origin = 0;
  NodeId destination = 0;
  Time desired_departure = 0.0;  // st
  Time online_time = 0.0;        // ot
  Time decision_time = 0.0;      // initial stay/leave decision
  int seats = 1;

  Coefficients coef;
  double alone_unit_cost = 3.0;  // perceived travel-alone cost per minute
  double expected_pay = 1.0;     // multiplier on the alone cost
  double max_excess = 30.0;      // minutes
  double max_match_wait = 5.0;   // minutes
  double max_pickup_wait = 0.0;  // minutes, derived

  double sp_time = -1.0;  // shortest-path time at st, minutes
  double sp_km = -1.0;

  // runtime state
  Time first_request = 0.0;
  double coupon = 0.0;
  std::optional<AgentRef> driver;
  bool no_show = false;
  bool ever_matched = false;
  Time notified_at = 0.0;
  Time picked_up_at = 0.0;
  int responses = 0;
  int accepts = 0;
  std::uint64_t decisions = 0;

  Stop origin_stop() const {
    return {origin, StopKind::Origin, id, desired_departure, desired_departure + max_excess, 0};
  }
  Stop destination_stop() const {
    return {destination, StopKind::Destination, id, desired_departure + sp_time,
            desired_departure + sp_time + max_excess, 0};
  }
  /// Alone travel cost cost(p).
  double alone_cost() const { return alone_unit_cost * sp_time; }
};

/// Applies a status event; throws StateError on an illegal transition.
inline Passenger passenger_transition(Passenger p, PassengerEvent e) {
  p.status = next_status(p.status, e);
  return p;
}

enum class DriverType { DriveAlone, Ridesharing };
enum class DriverStatus { Traveling, Finished };

struct Driver {
  AgentRef id;
  DriverType type = DriverType::Ridesharing;
  DriverStatus status = DriverStatus::Traveling;
  bool online = false;
  bool left_service = false;
  bool warmup = false;

  NodeId origin = 0;
  NodeId destination = 0;
  Time departure = 0.0;      // st
  Time online_time = 0.0;    // ot
  Time decision_time = 0.0;  // dt
  int capacity = 4;
  int occupied = 0;
  int max_passengers = 4;
  double max_excess = 30.0;
  Coefficients coef{-3.0, -1.0};
  double operating_cost_per_km = 0.0;
  double speed_factor = 1.0;

  double sp_time = -1.0;
  double sp_km = -1.0;

  Time latest_arrival() const { return departure + sp_time + max_excess; }
  double max_driving() const { return sp_time + max_excess; }

  // runtime state
  double driven_km = 0.0;
  int assigned = 0;
  int delivered = 0;
  int responses = 0;
  int accepts = 0;
  std::uint64_t decisions = 0;
  std::uint64_t token = 0;
  std::uint64_t schedule_version = 0;
};

/// A leg between two stops with its provider estimate and the driver's
/// realisation.
struct Trip {
  Stop start;
  Stop end;
  Itinerary scheduled;
  std::optional<Itinerary> actual;
};

/// Driver state the scheduler needs.
struct DriverSnapshot {
  AgentRef id;
  NodeId position = 0;
  Time available = 0.0;
  NodeId destination = 0;
  int capacity = 4;
  int occupied = 0;  // seats of on-board riders
  int max_passengers = 4;
  Time departure = 0.0;
  Time latest_arrival = kInf;
  double max_driving = kInf;
  double direct_km = 0.0;  // shortest distance position -> destination
};

/// One passenger inside a schedule request. On-board riders contribute only
/// their drop-off.
struct RiderRequest {
  AgentRef id;
  Stop pickup;
  Stop dropoff;
  double max_ride = kInf;  // sp time + max excess
  bool on_board = false;
  Time picked_up_at = 0.0;
  double sp_km = 0.0;
};

inline RiderRequest rider_request(const Passenger& p) {
  RiderRequest r;
  r.id = p.id;
  r.pickup = {p.origin, StopKind::Pickup, p.id, p.desired_departure,
              p.desired_departure + p.max_excess, p.seats};
  r.dropoff = {p.destination, StopKind::DropOff, p.id, p.desired_departure + p.sp_time,
               p.desired_departure + p.sp_time + p.max_excess, -p.seats};
  r.max_ride = p.sp_time + p.max_excess;
  r.on_board = p.status == PassengerStatus::OnBoard;
  r.picked_up_at = p.picked_up_at;
  r.sp_km = p.sp_km;
  return r;
}

/// Which constraints the scheduler may relax. On-board riders are already
/// committed; after delays their windows may be unreachable and the driver
/// still has to drop them off.
struct FeasibilityPolicy {
  bool relax_onboard = false;
  bool relax_driver_limits = false;
};

/// Ordered stop sequence for one driver, ending at the driver's destination.
struct Schedule {
  DriverSnapshot driver;
  std::vector<RiderRequest> riders;
  std::vector<Stop> stops;
  std::vector<Time> arrival;  // when the driver reaches each stop
  std::vector<Time> service;  // max(arrival, earliest)
  std::vector<double> leg_km;
  double vkt = 0.0;
  std::map<AgentRef, double> payments;
  double earning = 0.0;
  double operating_cost = 0.0;
  std::uint64_t version = 0;

  Time end_time() const { return service.empty() ? driver.available : service.back(); }

  std::vector<AgentRef> passengers() const {
    std::vector<AgentRef> out;
    for (auto& r : riders) out.push_back(r.id);
    return out;
  }

  std::optional<Time> service_time(AgentRef agent, StopKind kind) const {
    for (std::size_t i = 0; i < stops.size(); ++i)
      if (stops[i].agent == agent && stops[i].kind == kind) return service[i];
    return std::nullopt;
  }

  const RiderRequest* rider(AgentRef a) const {
    for (auto& r : riders)
      if (r.id == a) return &r;
    return nullptr;
  }
};

struct Violation {
  std::string constraint;  // "precedence", "capacity", "window", "ride_time", ...
  std::size_t stop_index = 0;
};

struct Verdict {
  bool feasible = true;
  std::optional<Violation> violation;

  explicit operator bool() const { return feasible; }
};

/// Checks every schedule invariant against the stored stop times: precedence,
/// running seat occupancy, time windows, ride times, the passenger count
/// limit, and the driver's arrival/driving limits. Reports the first
/// violation in stop order.
inline Verdict schedule_feasible(const Schedule& s, const DriverSnapshot& driver,
                                 const std::vector<RiderRequest>& riders,
                                 FeasibilityPolicy policy = {}) {
  auto fail = [](std::string c, std::size_t i) { return Verdict{false, Violation{std::move(c), i}}; };
  std::map<AgentRef, const RiderRequest*> by_id;
  for (auto& r : riders) by_id[r.id] = &r;
  if (static_cast<int>(riders.size()) > driver.max_passengers && !policy.relax_driver_limits)
    return fail("max_passengers", 0);
  if (s.stops.size() != s.service.size()) return fail("malformed", 0);

  int load = driver.occupied;
  std::map<AgentRef, Time> picked;
  std::set<AgentRef> dropped;
  for (auto& r : riders)
    if (r.on_board) picked[r.id] = r.picked_up_at;
  Time prev = driver.available;
  for (std::size_t i = 0; i < s.stops.size(); ++i) {
    const auto& st = s.stops[i];
    const Time t = s.service[i];
    if (t < prev) return fail("time_order", i);
    prev = t;
    if (st.kind == StopKind::Destination) {
      if (i + 1 != s.stops.size()) return fail("destination_not_last", i);
      if (!policy.relax_driver_limits) {
        if (t > driver.latest_arrival + 1e-9) return fail("latest_arrival", i);
        if (t - driver.departure > driver.max_driving + 1e-9) return fail("max_driving", i);
      }
      continue;
    }
    auto it = by_id.find(st.agent);
    if (it == by_id.end()) return fail("unknown_agent", i);
    const RiderRequest& r = *it->second;
    const bool relaxed = r.on_board && policy.relax_onboard;
    if (st.kind == StopKind::Pickup) {
      if (r.on_board || picked.count(st.agent)) return fail("precedence", i);
      picked[st.agent] = t;
    } else if (st.kind == StopKind::DropOff) {
      if (!picked.count(st.agent) || dropped.count(st.agent)) return fail("precedence", i);
      dropped.insert(st.agent);
      if (!relaxed && t - picked[st.agent] > r.max_ride + 1e-9) return fail("ride_time", i);
    }
    if (!relaxed && (t < st.earliest - 1e-9 || t > st.latest + 1e-9)) return fail("window", i);
    load += st.seats;
    if (load > driver.capacity || load < 0) return fail("capacity", i);
  }
  for (auto& r : riders)
    if (!dropped.count(r.id)) return fail("missing_dropoff", s.stops.size());
  if (s.stops.empty() || s.stops.back().kind != StopKind::Destination)
    return fail("missing_destination", s.stops.size());
  return {};
}

inline Verdict schedule_feasible(const Schedule& s, FeasibilityPolicy policy = {}) {
  return schedule_feasible(s, s.driver, s.riders, policy);
}

/// What the provider shows an agent about a matching option.
struct DisplayedQuantities {
  double travel_time = 0.0;
  double cost = 0.0;
  double earning = 0.0;
  double payment = 0.0;
};

struct MatchingOption {
  std::uint64_t option_id = 0;
  std::uint64_t round = 0;
  AgentRef driver;
  std::vector<AgentRef> added_passengers;
  Schedule schedule;
  std::map<AgentRef, DisplayedQuantities> displayed;
};

}  // namespace rideshare
