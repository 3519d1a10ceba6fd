#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "rideshare/behavior.hpp"
#include "rideshare/core.hpp"
#include "rideshare/domain.hpp"
#include "rideshare/matching.hpp"
#include "rideshare/network.hpp"
#include "rideshare/scheduling.hpp"

namespace rideshare {

using json = nlohmann::json;

enum class EventKind {
  AgentGeneration,
  OnlineOffline,
  RidesharingMatching,
  StayLeaveDecision,
  Reschedule,
  Pickup,
  DropOff,
  AgentTermination,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::AgentGeneration: return "generation";
    case EventKind::OnlineOffline: return "online_offline";
    case EventKind::RidesharingMatching: return "matching";
    case EventKind::StayLeaveDecision: return "stay_leave";
    case EventKind::Reschedule: return "reschedule";
    case EventKind::Pickup: return "pickup";
    case EventKind::DropOff: return "dropoff";
    case EventKind::AgentTermination: return "termination";
  }
  return "?";
}

/// `payload` is kind-specific: batch index (generation), 1/0 for
/// online/offline, or the driver leg token that guards trip events and
/// delay reschedules (0 = unconditional).
struct Event {
  Time t = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::AgentGeneration;
  std::vector<AgentRef> agents;
  std::int64_t payload = 0;
};

/// Pops in (time, sequence) order. Sequence numbers start at 1 and are
/// never reused.
class EventQueue {
 public:
  std::uint64_t push(Time t, EventKind kind, std::vector<AgentRef> agents = {},
                     std::int64_t payload = 0) {
    if (!std::isfinite(t)) throw EngineError("event time is not finite");
    if (t < now_) throw EngineError("event registered in the past");
    Event e{t, next_seq_++, kind, std::move(agents), payload};
    heap_.push(e);
    return e.seq;
  }

  Event pop() {
    if (heap_.empty()) throw EngineError("pop from empty event queue");
    Event e = heap_.top();
    heap_.pop();
    now_ = e.t;
    return e;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  Time now() const { return now_; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  Time now_ = -kInf;
  std::uint64_t next_seq_ = 1;
};

struct SimConfig {
  double window = 2.0;             // minutes between matching rounds
  double decision_interval = 0.0;  // re-registered stay/leave spacing; 0 means one window
  double unit_price = 6.0;         // cost per km
  double cancellation_fee = 5.0;
  double p_noshow = 0.1;
  ChoiceMode response_mode = ChoiceMode::Argmax;
  ChoiceMode decision_mode = ChoiceMode::Sampled;
  double reschedule_tolerance = 1.0;  // minutes of lateness before the provider reacts
  CandidateConfig candidates;

  double interval() const { return decision_interval > 0.0 ? decision_interval : window; }
};

/// Test hook: scripted responses and decisions replace the behavioral
/// models for the agents it answers for.
struct DecisionOverride {
  virtual ~DecisionOverride() = default;
  virtual std::optional<bool> respond(AgentRef /*agent*/, AgentRef /*driver*/,
                                      const std::vector<AgentRef>& /*added*/, Time /*now*/) {
    return std::nullopt;
  }
  virtual std::optional<Outcome> decide(AgentRef /*agent*/, Time /*now*/) { return std::nullopt; }
};

/// Agents generated together at `time`. Ids are assigned by the engine.
struct AgentBatch {
  Time time = 0.0;
  std::vector<Passenger> passengers;
  std::vector<Driver> drivers;
};

/// Driver motion state. The driver is on a leg from (anchor, anchor_time)
/// to plan.stops[next]; without a leg it idles at the anchor.
struct DriverRuntime {
  Schedule plan;
  std::size_t next = 0;
  NodeId anchor = 0;
  Time anchor_time = 0.0;
  std::optional<Itinerary> leg;  // actual itinerary of the current leg
};

struct Projection {
  NodeId node = 0;
  Time time = 0.0;
  double km = 0.0;  // distance from the anchor to `node`
};

class Simulation {
 public:
  Simulation(const Network& net, SimConfig cfg, std::uint64_t seed,
             DecisionOverride* hooks = nullptr)
      : net_(net), router_(net), cfg_(cfg), seed_(seed), hooks_(hooks) {
    if (!(cfg_.window > 0.0)) throw ConfigError("matching window must be positive");
  }

  /// Stores the agents and registers their generation event.
  void add_batch(AgentBatch batch) {
    Range r;
    r.p0 = pax_.size();
    for (auto& p : batch.passengers) {
      p.id = AgentRef::passenger(static_cast<std::uint32_t>(pax_.size()));
      pax_.push_back(std::move(p));
    }
    r.p1 = pax_.size();
    r.d0 = drv_.size();
    for (auto& d : batch.drivers) {
      d.id = AgentRef::driver(static_cast<std::uint32_t>(drv_.size()));
      drv_.push_back(std::move(d));
      rt_.emplace_back();
    }
    r.d1 = drv_.size();
    ranges_.push_back(r);
    q_.push(batch.time, EventKind::AgentGeneration, {}, static_cast<std::int64_t>(ranges_.size() - 1));
    if (!first_batch_ || batch.time < *first_batch_) first_batch_ = batch.time;
  }

  /// Runs until the event queue drains.
  void run() {
    if (first_batch_) q_.push(*first_batch_, EventKind::RidesharingMatching);
    while (!q_.empty()) {
      Event e = q_.pop();
      now_ = e.t;
      json payload = json::object();
      cur_ = &payload;
      dispatch(e);
      cur_ = nullptr;
      json line;
      line["t"] = e.t;
      line["seq"] = e.seq;
      line["kind"] = to_string(e.kind);
      json agents = json::array();
      for (auto a : e.agents) agents.push_back(a.str());
      line["agents"] = agents;
      line["payload"] = std::move(payload);
      log_.push_back(line.dump());
    }
  }

  const std::vector<std::string>& log() const { return log_; }
  std::string log_text() const {
    std::string out;
    for (auto& l : log_) {
      out += l;
      out += '\n';
    }
    return out;
  }
  const std::vector<Passenger>& passengers() const { return pax_; }
  const std::vector<Driver>& drivers() const { return drv_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const SimConfig& config() const { return cfg_; }

  /// Final per-agent records, one JSON object per agent.
  std::vector<json> agent_records() const {
    std::vector<json> out;
    for (auto& p : pax_)
      out.push_back({{"id", p.id.str()}, {"status", to_string(p.status)}, {"warmup", p.warmup},
                     {"st", p.desired_departure}, {"online", p.online_time},
                     {"responses", p.responses}, {"accepts", p.accepts}, {"coupon", p.coupon},
                     {"no_show", p.no_show}});
    for (auto& d : drv_)
      out.push_back({{"id", d.id.str()},
                     {"status", d.status == DriverStatus::Finished ? "Finished" : "Traveling"},
                     {"warmup", d.warmup}, {"st", d.departure}, {"driven_km", d.driven_km},
                     {"assigned", d.assigned}, {"delivered", d.delivered},
                     {"responses", d.responses}, {"accepts", d.accepts},
                     {"left_service", d.left_service}});
    return out;
  }

 private:
  struct Range {
    std::size_t p0 = 0, p1 = 0, d0 = 0, d1 = 0;
  };

  json& out() { return *cur_; }

  void change(AgentRef a, const std::string& what) {
    out()["changes"].push_back({{"agent", a.str()}, {"event", what}});
  }

  void transition(Passenger& p, PassengerEvent e) {
    p.status = next_status(p.status, e);
    change(p.id, to_string(e));
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::AgentGeneration: on_generation(static_cast<std::size_t>(e.payload)); break;
      case EventKind::OnlineOffline: on_online_offline(e.agents.at(0), e.payload != 0); break;
      case EventKind::RidesharingMatching: on_matching(); break;
      case EventKind::StayLeaveDecision: on_stay_leave(e.agents.at(0)); break;
      case EventKind::Reschedule:
        on_reschedule(e.agents.at(0).index, static_cast<std::uint64_t>(e.payload));
        break;
      case EventKind::Pickup:
      case EventKind::DropOff:
        on_trip_event(e);
        break;
      case EventKind::AgentTermination:
        if (e.agents.at(0).is_driver())
          on_trip_event(e);
        else
          out()["terminated"] = e.agents.at(0).str();
        break;
    }
  }

  // ---- generation and pool membership ------------------------------------

  void on_generation(std::size_t batch) {
    const Range r = ranges_.at(batch);
    json agents = json::array();
    for (std::size_t i = r.p0; i < r.p1; ++i) {
      auto& p = pax_[i];
      if (p.sp_time < 0.0 || p.sp_km < 0.0) {
        try {
          Travel tr = router_.travel(p.origin, p.destination, p.desired_departure);
          p.sp_time = tr.arrival - p.desired_departure;
          p.sp_km = tr.distance_km;
        } catch (const NoPathError&) {
          warn("passenger " + p.id.str() + " discarded: destination unreachable");
          p.status = PassengerStatus::Quit;
          out()["discarded"].push_back(p.id.str());
          continue;
        }
      }
      p.online = false;
      p.first_request = p.online_time;
      q_.push(std::max(now_, p.online_time), EventKind::OnlineOffline, {p.id}, 1);
      q_.push(std::max(now_, p.decision_time), EventKind::StayLeaveDecision, {p.id});
      agents.push_back({{"id", p.id.str()}, {"warmup", p.warmup}, {"st", p.desired_departure},
                        {"sp_time", p.sp_time}, {"sp_km", p.sp_km}});
    }
    for (std::size_t i = r.d0; i < r.d1; ++i) {
      auto& d = drv_[i];
      Itinerary direct;
      try {
        direct = router_.itinerary(d.origin, d.destination, d.departure);
      } catch (const NoPathError&) {
        warn("driver " + d.id.str() + " discarded: destination unreachable");
        d.status = DriverStatus::Finished;
        out()["discarded"].push_back(d.id.str());
        continue;
      }
      if (d.sp_time < 0.0 || d.sp_km < 0.0) {
        d.sp_time = direct.arrival() - d.departure;
        d.sp_km = direct.distance_km;
      }
      auto& rt = rt_[i];
      rt.anchor = d.origin;
      rt.anchor_time = d.departure;
      rt.next = 0;
      rt.plan = Schedule{};
      rt.plan.driver = snapshot(d, {d.origin, d.departure, 0.0});
      Stop dest{d.destination, StopKind::Destination, d.id, -kInf, d.latest_arrival(), 0};
      rt.plan.stops = {dest};
      rt.plan.arrival = {direct.arrival()};
      rt.plan.service = {direct.arrival()};
      rt.plan.leg_km = {direct.distance_km};
      rt.plan.vkt = direct.distance_km;
      if (d.type == DriverType::Ridesharing)
        q_.push(std::max(now_, d.online_time), EventKind::OnlineOffline, {d.id}, 1);
      q_.push(std::max(now_, d.decision_time), EventKind::StayLeaveDecision, {d.id});
      start_leg(i, std::max(now_, d.departure));
      agents.push_back({{"id", d.id.str()}, {"warmup", d.warmup}, {"st", d.departure},
                        {"sp_time", d.sp_time}, {"sp_km", d.sp_km},
                        {"type", d.type == DriverType::Ridesharing ? "ridesharing" : "alone"}});
    }
    out()["agents"] = agents;
  }

  void on_online_offline(AgentRef a, bool online) {
    if (a.is_passenger()) {
      auto& p = pax_.at(a.index);
      if (is_terminal(p.status) || p.online == online) {
        out()["noop"] = true;
        return;
      }
      p.online = online;
      change(a, online ? "online" : "offline");
      return;
    }
    auto& d = drv_.at(a.index);
    if (d.status == DriverStatus::Finished || d.online == online ||
        (online && (d.left_service || d.type != DriverType::Ridesharing))) {
      out()["noop"] = true;
      return;
    }
    d.online = online;
    change(a, online ? "online" : "offline");
  }

  bool in_pool(const Driver& d) const {
    return d.online && !d.left_service && d.status == DriverStatus::Traveling &&
           d.type == DriverType::Ridesharing;
  }

  // ---- driver motion ------------------------------------------------------

  double prefix_km(const Itinerary& it, std::size_t upto) const {
    double km = 0.0;
    for (std::size_t i = 1; i <= upto && i < it.nodes.size(); ++i)
      km += net_.link_length(it.nodes[i - 1], it.nodes[i]);
    return km;
  }

  Projection project(std::size_t d, Time now) const {
    const auto& rt = rt_[d];
    if (!rt.leg) return {rt.anchor, std::max(rt.anchor_time, now), 0.0};
    auto pos = advance_position(*rt.leg, now);
    if (!pos) return {rt.leg->nodes.back(), now, rt.leg->distance_km};
    return {pos->node, pos->time, prefix_km(*rt.leg, pos->index)};
  }

  /// Moves the anchor to the projected node and drops the current leg.
  void commit(std::size_t d, const Projection& pr) {
    auto& rt = rt_[d];
    drv_[d].driven_km += pr.km;
    rt.anchor = pr.node;
    rt.anchor_time = pr.time;
    rt.leg.reset();
    ++drv_[d].token;
  }

  DriverSnapshot snapshot(const Driver& d, const Projection& pr) {
    DriverSnapshot s;
    s.id = d.id;
    s.position = pr.node;
    s.available = pr.time;
    s.destination = d.destination;
    s.capacity = d.capacity;
    s.occupied = d.occupied;
    s.max_passengers = d.max_passengers;
    s.departure = d.departure;
    s.latest_arrival = d.latest_arrival();
    s.max_driving = d.max_driving();
    s.direct_km = router_.travel(pr.node, d.destination, pr.time).distance_km;
    return s;
  }

  Schedule price(Schedule s, const Driver& d) const {
    return allocate_prices(std::move(s), cfg_.unit_price, d.operating_cost_per_km);
  }

  /// The driver's remaining plan re-timed from the projection, priced.
  Schedule current_plan(std::size_t d, const Projection& pr) {
    const auto& rt = rt_[d];
    std::vector<Stop> rest(rt.plan.stops.begin() + static_cast<std::ptrdiff_t>(rt.next),
                           rt.plan.stops.end());
    auto s = evaluate_order(snapshot(drv_[d], pr), rt.plan.riders, rest, router_);
    return price(std::move(s), drv_[d]);
  }

  /// Starts the leg to plan.stops[next] from the anchor and registers the
  /// trip event at the actual time. A late leg also gets a reschedule at
  /// the scheduled time, when the provider notices.
  void start_leg(std::size_t d, Time now) {
    auto& rt = rt_[d];
    auto& dr = drv_[d];
    const Stop& st = rt.plan.stops.at(rt.next);
    const Time t0 = std::max(rt.anchor_time, now);
    auto sched = router_.itinerary(rt.anchor, st.node, t0);
    rt.leg = actualize_itinerary(sched, dr.speed_factor);
    rt.anchor_time = t0;
    const std::uint64_t token = ++dr.token;
    Time at = rt.leg->arrival();
    EventKind kind = EventKind::AgentTermination;
    std::vector<AgentRef> agents{dr.id};
    if (st.kind == StopKind::Pickup) {
      kind = EventKind::Pickup;
      at = std::max(at, st.earliest);
      agents.push_back(st.agent);
    } else if (st.kind == StopKind::DropOff) {
      kind = EventKind::DropOff;
      agents.push_back(st.agent);
    }
    q_.push(at, kind, agents, static_cast<std::int64_t>(token));
    const Time planned = rt.plan.service.at(rt.next);
    if (!rt.plan.riders.empty() && at > planned + cfg_.reschedule_tolerance)
      q_.push(std::max(now, planned), EventKind::Reschedule, {dr.id}, static_cast<std::int64_t>(token));
  }

  // ---- choices --------------------------------------------------------------

  bool respond(AgentRef a, AgentRef driver, const std::vector<AgentRef>& added, double u_new,
               double u_current, int& responses, int& accepts, json& votes) {
    std::optional<bool> scripted;
    if (hooks_) scripted = hooks_->respond(a, driver, added, now_);
    bool accept;
    if (scripted) {
      accept = *scripted;
    } else {
      ChoiceContext ctx{a, {{1, u_new}, {0, u_current}}, cfg_.response_mode, 1};
      CounterRng rng(seed_, static_cast<std::uint64_t>(Stream::Response),
                     hash_combine(agent_key(a), static_cast<std::uint64_t>(responses)));
      accept = choose_option(ctx, rng) == 1;
    }
    ++responses;
    if (accept) ++accepts;
    votes.push_back({{"agent", a.str()}, {"accept", accept}});
    return accept;
  }

  Outcome decide(AgentRef a, const StayLeaveUtilities& u, std::uint64_t& counter) {
    json rec{{"agent", a.str()}};
    Outcome o = Outcome::Stay;
    std::optional<Outcome> scripted;
    if (hooks_) scripted = hooks_->decide(a, now_);
    if (scripted) {
      o = *scripted;
      rec["scripted"] = true;
    } else if (cfg_.decision_mode == ChoiceMode::Sampled) {
      CounterRng rng(seed_, static_cast<std::uint64_t>(Stream::Decision),
                     hash_combine(agent_key(a), counter));
      auto draw = decide_stay_leave(u, rng);
      o = draw.outcome;
      rec["p_stay"] = draw.p_stay;
    } else {
      if (u.leave_service > u.stay && u.leave_service >= u.leave_matching)
        o = Outcome::LeaveService;
      else if (u.leave_matching > u.stay)
        o = Outcome::LeaveMatching;
    }
    ++counter;
    rec["outcome"] = to_string(o);
    out()["decisions"].push_back(rec);
    return o;
  }

  // ---- passenger removal helpers -----------------------------------------------

  void remove_rider(std::size_t d, AgentRef p) {
    auto& riders = rt_[d].plan.riders;
    riders.erase(std::remove_if(riders.begin(), riders.end(),
                                [&](const RiderRequest& r) { return r.id == p; }),
                 riders.end());
  }

  std::vector<AgentRef> unpicked(std::size_t d) const {
    std::vector<AgentRef> out;
    for (auto& r : rt_[d].plan.riders)
      if (!r.on_board) out.push_back(r.id);
    return out;
  }

  void terminate_passenger(Passenger& p) {
    p.online = false;
    q_.push(now_, EventKind::AgentTermination, {p.id});
  }

  /// Driver-side cancellation of a not-yet-picked passenger: back to the
  /// pool with a coupon and an immediate stay/leave decision. A silent
  /// no-show has already left, so it just quits.
  void unmatch(Passenger& p, double coupon) {
    remove_rider(p.driver->index, p.id);
    p.driver.reset();
    if (p.no_show) {
      transition(p, PassengerEvent::Quit);
      terminate_passenger(p);
      return;
    }
    transition(p, PassengerEvent::Unmatch);
    p.coupon += coupon;
    q_.push(now_, EventKind::StayLeaveDecision, {p.id});
  }

  /// Driver cancels every unpicked passenger and leaves the service.
  void driver_cancel(std::size_t d) {
    auto& dr = drv_[d];
    auto gone = unpicked(d);
    const double share = gone.empty() ? 0.0 : cfg_.cancellation_fee / static_cast<double>(gone.size());
    for (auto a : gone) unmatch(pax_[a.index], share);
    dr.left_service = true;
    change(dr.id, "left_service");
    q_.push(now_, EventKind::OnlineOffline, {dr.id}, 0);
  }

  /// Matched passenger decided to quit. Returns true when the driver's plan
  /// changed; a silent no-show leaves it untouched.
  bool matched_passenger_quits(Passenger& p) {
    CounterRng rng(seed_, static_cast<std::uint64_t>(Stream::NoShow), agent_key(p.id));
    if (rng.uniform() < cfg_.p_noshow) {
      p.no_show = true;
      out()["no_show"].push_back(p.id.str());
      return false;
    }
    const std::size_t d = p.driver->index;
    remove_rider(d, p.id);
    auto& riders = rt_[d].plan.riders;
    if (!riders.empty()) {
      const double share = cfg_.cancellation_fee / static_cast<double>(riders.size());
      for (auto& r : riders) pax_[r.id.index].coupon += share;
    }
    p.driver.reset();
    transition(p, PassengerEvent::Quit);
    terminate_passenger(p);
    return true;
  }

  StayLeaveUtilities driver_utilities(std::size_t d, const Schedule& current) {
    const auto& dr = drv_[d];
    std::vector<AgentRef> gone;
    for (auto& r : current.riders)
      if (!r.on_board) gone.push_back(r.id);
    auto req = remove_passengers(current, gone);
    req.policy = {true, false};
    auto res = best_schedule(req, router_);
    if (!res) {
      req.policy = {true, true};
      res = best_schedule(req, router_);
    }
    if (!res) throw EngineError("no route for driver " + dr.id.str());
    Schedule reduced = price(*res.schedule, dr);
    DriverView keep{current.end_time() - now_, current.operating_cost, current.earning};
    DriverView cut{reduced.end_time() - now_, reduced.operating_cost, reduced.earning};
    return driver_stay_leave(dr.coef, keep, cut, cfg_.cancellation_fee);
  }

  // ---- events -----------------------------------------------------------------

  void on_stay_leave(AgentRef a) {
    if (a.is_passenger()) {
      auto& p = pax_.at(a.index);
      if (is_terminal(p.status) || p.no_show) {
        out()["noop"] = true;
        return;
      }
      if (p.status == PassengerStatus::OnBoard) {
        out()["forced"] = "a";
        return;
      }
      if (p.status == PassengerStatus::NotMatched) {
        // Past the latest pickup no combination can be feasible again.
        if (now_ > p.desired_departure + p.max_excess) {
          out()["expired"] = true;
          transition(p, PassengerEvent::Quit);
          terminate_passenger(p);
          return;
        }
        auto u = passenger_stay_leave(p, now_, std::nullopt, cfg_.cancellation_fee);
        if (decide(a, u, p.decisions) == Outcome::Stay) {
          q_.push(now_ + cfg_.interval(), EventKind::StayLeaveDecision, {a});
        } else {
          transition(p, PassengerEvent::Quit);
          terminate_passenger(p);
        }
        return;
      }
      const std::size_t d = p.driver->index;
      auto cur = current_plan(d, project(d, now_));
      MatchedView mv{*cur.service_time(a, StopKind::DropOff) - now_, cur.payments.at(a)};
      auto u = passenger_stay_leave(p, now_, mv, cfg_.cancellation_fee);
      if (decide(a, u, p.decisions) == Outcome::Stay) {
        q_.push(now_ + cfg_.interval(), EventKind::StayLeaveDecision, {a});
      } else if (matched_passenger_quits(p)) {
        q_.push(now_, EventKind::Reschedule, {drv_[d].id}, 0);
      }
      return;
    }
    auto& dr = drv_.at(a.index);
    if (dr.status == DriverStatus::Finished || dr.left_service) {
      out()["noop"] = true;
      return;
    }
    const std::size_t d = a.index;
    if (unpicked(d).empty()) {
      out()["forced"] = "a";
      q_.push(now_ + cfg_.interval(), EventKind::StayLeaveDecision, {a});
      return;
    }
    auto cur = current_plan(d, project(d, now_));
    if (decide(a, driver_utilities(d, cur), dr.decisions) == Outcome::Stay) {
      q_.push(now_ + cfg_.interval(), EventKind::StayLeaveDecision, {a});
      return;
    }
    driver_cancel(d);
    q_.push(now_, EventKind::Reschedule, {dr.id}, 0);
  }

  void on_reschedule(std::size_t d, std::uint64_t token) {
    auto& dr = drv_.at(d);
    if (dr.status == DriverStatus::Finished || (token != 0 && token != dr.token)) {
      out()["stale"] = true;
      return;
    }
    auto& rt = rt_[d];
    commit(d, project(d, now_));
    while (true) {
      const Projection here{rt.anchor, rt.anchor_time, 0.0};
      ScheduleRequest req{snapshot(dr, here), rt.plan.riders, {true, false}};
      auto res = best_schedule(req, router_);
      if (!res) {
        out()["infeasible"] = true;
        for (auto a : unpicked(d)) unmatch(pax_[a.index], 0.0);
        req.riders = rt.plan.riders;
        req.policy = {true, true};
        res = best_schedule(req, router_);
        if (!res) throw EngineError("driver " + dr.id.str() + " cannot finish its trip");
      }
      Schedule s = price(*res.schedule, dr);
      s.version = ++dr.schedule_version;
      rt.plan = s;
      rt.next = 0;
      bool changed = false;
      if (!dr.left_service && !unpicked(d).empty() &&
          evaluated_.insert({dr.id, s.version}).second) {
        if (decide(dr.id, driver_utilities(d, s), dr.decisions) != Outcome::Stay) {
          driver_cancel(d);
          changed = true;
        }
      }
      if (!changed)
        for (auto a : unpicked(d)) {
          if (!evaluated_.insert({a, s.version + (std::uint64_t{d} << 40)}).second) continue;
          auto& p = pax_[a.index];
          if (p.no_show) continue;
          MatchedView mv{*s.service_time(a, StopKind::DropOff) - now_, s.payments.at(a)};
          auto u = passenger_stay_leave(p, now_, mv, cfg_.cancellation_fee);
          if (decide(a, u, p.decisions) != Outcome::Stay && matched_passenger_quits(p)) {
            changed = true;
            break;
          }
        }
      if (!changed) break;
    }
    out()["version"] = rt.plan.version;
    json riders = json::array();
    for (auto& r : rt.plan.riders) riders.push_back(r.id.str());
    out()["riders"] = riders;
    start_leg(d, now_);
  }

  void on_trip_event(const Event& e) {
    const std::size_t d = e.agents.at(0).index;
    auto& dr = drv_.at(d);
    auto& rt = rt_[d];
    if (dr.status == DriverStatus::Finished || static_cast<std::uint64_t>(e.payload) != dr.token) {
      out()["stale"] = true;
      return;
    }
    const Stop st = rt.plan.stops.at(rt.next);
    commit(d, {rt.leg->nodes.back(), now_, rt.leg->distance_km});
    if (e.kind == EventKind::AgentTermination) {
      if (st.kind != StopKind::Destination || !rt.plan.riders.empty())
        throw EngineError("driver " + dr.id.str() + " terminated with passengers left");
      dr.status = DriverStatus::Finished;
      dr.online = false;
      change(dr.id, "finished");
      out()["driven_km"] = dr.driven_km;
      out()["assigned"] = dr.assigned;
      out()["delivered"] = dr.delivered;
      return;
    }
    auto& p = pax_.at(e.agents.at(1).index);
    if (st.agent != p.id) throw EngineError("trip event does not match the driver's next stop");
    if (e.kind == EventKind::Pickup) {
      if (p.no_show) {
        remove_rider(d, p.id);
        p.driver.reset();
        transition(p, PassengerEvent::NoShow);
        terminate_passenger(p);
        q_.push(now_, EventKind::Reschedule, {dr.id}, 0);
        return;
      }
      dr.occupied += p.seats;
      if (dr.occupied > dr.capacity) throw EngineError("capacity exceeded");
      transition(p, PassengerEvent::Pickup);
      p.picked_up_at = now_;
      for (auto& r : rt.plan.riders)
        if (r.id == p.id) {
          r.on_board = true;
          r.picked_up_at = now_;
        }
      out()["wait"] = now_ - p.notified_at;
    } else {
      dr.occupied -= p.seats;
      transition(p, PassengerEvent::DropOff);
      ++dr.delivered;
      remove_rider(d, p.id);
      out()["ride"] = now_ - p.picked_up_at;
      auto it = rt.plan.payments.find(p.id);
      if (it != rt.plan.payments.end()) out()["payment"] = it->second;
      terminate_passenger(p);
    }
    ++rt.next;
    start_leg(d, now_);
  }

  void on_matching() {
    auto& pl = out();
    pl["round"] = ++round_;
    std::vector<std::size_t> ids;
    std::vector<Projection> projs;
    std::vector<Schedule> current;
    std::vector<PoolDriver> pool_d;
    json pool_dj = json::array(), pool_pj = json::array();
    for (std::size_t d = 0; d < drv_.size(); ++d) {
      auto& dr = drv_[d];
      if (!in_pool(dr)) continue;
      auto pr = project(d, now_);
      auto cur = current_plan(d, pr);
      if (dr.latest_arrival() - cur.end_time() < cfg_.window) {
        dr.online = false;
        change(dr.id, "offline");
        continue;
      }
      ids.push_back(d);
      projs.push_back(pr);
      pool_d.push_back({cur.driver, rt_[d].plan.riders, cur.vkt});
      current.push_back(std::move(cur));
      pool_dj.push_back(dr.id.str());
    }
    std::vector<PoolPassenger> pool_p;
    for (auto& p : pax_)
      if (p.online && p.status == PassengerStatus::NotMatched) {
        pool_p.push_back({rider_request(p), p.sp_km});
        pool_pj.push_back(p.id.str());
      }
    pl["pool_drivers"] = pool_dj;
    pl["pool_passengers"] = pool_pj;

    auto cs = build_candidates(pool_d, pool_p, router_, cfg_.candidates);
    auto sol = solve_matching(cs);
    pl["combinations"] = cs.combos.size();
    pl["expected_z"] = sol.z;
    json expected = json::array();
    for (auto a : sol.expected_agents) expected.push_back(a.str());
    pl["expected"] = expected;

    std::map<AgentRef, std::size_t> slot;
    for (std::size_t k = 0; k < ids.size(); ++k) slot[drv_[ids[k]].id] = k;
    double actual_z = 0.0;
    std::vector<AgentRef> actual;
    json options = json::array();
    for (std::size_t m = 0; m < cs.combos.size(); ++m) {
      if (!sol.selected[m]) continue;
      const auto& c = cs.combos[m];
      if (c.dummy()) {
        actual_z += c.vkt;
        continue;
      }
      const std::size_t k = slot.at(c.driver);
      const std::size_t d = ids[k];
      auto& dr = drv_[d];
      const Schedule& cur = current[k];
      Schedule s = price(*c.schedule, dr);
      json opt{{"driver", dr.id.str()}, {"vkt", s.vkt}};
      json added = json::array();
      for (auto a : c.passengers) added.push_back(a.str());
      opt["added"] = added;
      json votes = json::array();

      const double u_new_d = driver_option_utility(dr.coef, s.end_time() - now_, s.operating_cost, s.earning);
      const double u_cur_d =
          cur.riders.empty()
              ? driver_alone_utility(dr.coef, cur.end_time() - now_, cur.operating_cost)
              : driver_option_utility(dr.coef, cur.end_time() - now_, cur.operating_cost, cur.earning);
      Vote dv{dr.id, respond(dr.id, dr.id, c.passengers, u_new_d, u_cur_d, dr.responses, dr.accepts, votes)};
      std::vector<Vote> prior;
      for (auto& r : cur.riders) {
        auto& p = pax_[r.id.index];
        const double un = passenger_option_utility(
            p.coef, *s.service_time(r.id, StopKind::DropOff) - now_, s.payments.at(r.id) - p.coupon);
        const double uc = passenger_option_utility(
            p.coef, *cur.service_time(r.id, StopKind::DropOff) - now_, cur.payments.at(r.id) - p.coupon);
        prior.push_back({r.id, respond(r.id, dr.id, c.passengers, un, uc, p.responses, p.accepts, votes)});
      }
      auto verdict = finalize_matches(dv, prior, {});
      if (verdict == Finalization::Finalized) {
        std::vector<Vote> fresh;
        for (auto a : c.passengers) {
          auto& p = pax_[a.index];
          const double un = passenger_option_utility(
              p.coef, *s.service_time(a, StopKind::DropOff) - now_, s.payments.at(a) - p.coupon);
          const double ua = passenger_alone_utility(p.coef, p.sp_time, p.alone_cost());
          fresh.push_back({a, respond(a, dr.id, c.passengers, un, ua, p.responses, p.accepts, votes)});
        }
        verdict = finalize_matches(dv, prior, fresh);
      }
      opt["votes"] = votes;
      opt["finalized"] = verdict == Finalization::Finalized;
      options.push_back(opt);
      if (verdict != Finalization::Finalized) {
        actual_z += cur.vkt;
        for (auto a : c.passengers) actual_z += pax_[a.index].sp_km;
        continue;
      }
      actual_z += s.vkt;
      actual.push_back(dr.id);
      commit(d, projs[k]);
      s.version = ++dr.schedule_version;
      rt_[d].plan = s;
      rt_[d].next = 0;
      dr.assigned += static_cast<int>(c.passengers.size());
      change(dr.id, "matched");
      for (auto a : c.passengers) {
        auto& p = pax_[a.index];
        transition(p, PassengerEvent::FinalizedMatch);
        p.driver = dr.id;
        p.ever_matched = true;
        p.notified_at = now_;
        actual.push_back(a);
      }
      start_leg(d, now_);
    }
    std::sort(actual.begin(), actual.end());
    json actual_j = json::array();
    for (auto a : actual) actual_j.push_back(a.str());
    pl["options"] = options;
    pl["actual"] = actual_j;
    pl["actual_z"] = actual_z;
    if (!q_.empty()) q_.push(now_ + cfg_.window, EventKind::RidesharingMatching);
  }

  void warn(std::string msg) {
    out()["warning"].push_back(msg);
    warnings_.push_back(std::move(msg));
  }

  const Network& net_;
  Router router_;
  SimConfig cfg_;
  std::uint64_t seed_;
  DecisionOverride* hooks_;

  EventQueue q_;
  Time now_ = 0.0;
  std::vector<Passenger> pax_;
  std::vector<Driver> drv_;
  std::vector<DriverRuntime> rt_;
  std::vector<Range> ranges_;
  std::optional<Time> first_batch_;
  std::set<std::pair<AgentRef, std::uint64_t>> evaluated_;
  std::uint64_t round_ = 0;
  std::vector<std::string> log_;
  std::vector<std::string> warnings_;
  json* cur_ = nullptr;
};

}  // namespace rideshare
