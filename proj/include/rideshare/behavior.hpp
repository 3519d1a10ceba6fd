#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/domain.hpp"

namespace rideshare {

// Matching-option utilities. All coefficients are negative: more time or
// more money is worse.

/// Driver following option m: time to destination plus net operating cost.
inline double driver_option_utility(const Coefficients& c, double tt, double cost, double earning) {
  return c.beta_time * tt + c.beta_cost * (cost - earning);
}

/// Driver travelling alone on the shortest path.
inline double driver_alone_utility(const Coefficients& c, double tt, double cost) {
  return c.beta_time * tt + c.beta_cost * cost;
}

inline double passenger_option_utility(const Coefficients& c, double tt, double payment) {
  return c.beta_time * tt + c.beta_cost * payment;
}

inline double passenger_alone_utility(const Coefficients& c, double tt, double cost) {
  return c.beta_time * tt + c.beta_cost * cost;
}

/// Multinomial logit over the whole alternative set. +inf utilities absorb
/// all probability mass (split evenly); -inf alternatives get zero.
inline std::vector<double> logit_probabilities(std::span<const double> utilities) {
  std::vector<double> p(utilities.size(), 0.0);
  if (utilities.empty()) return p;
  const auto infinite = std::count(utilities.begin(), utilities.end(), kInf);
  if (infinite > 0) {
    for (std::size_t i = 0; i < utilities.size(); ++i)
      if (utilities[i] == kInf) p[i] = 1.0 / static_cast<double>(infinite);
    return p;
  }
  const double top = *std::max_element(utilities.begin(), utilities.end());
  if (top == -kInf) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < utilities.size(); ++i) sum += p[i] = std::exp(utilities[i] - top);
  for (auto& v : p) v /= sum;
  return p;
}

enum class ChoiceMode { Argmax, Sampled };

struct Alternative {
  std::uint64_t option_id = 0;
  double utility = 0.0;
};

struct ChoiceContext {
  AgentRef agent;
  std::vector<Alternative> alternatives;
  ChoiceMode mode = ChoiceMode::Argmax;
  std::size_t status_quo = 0;  // index of the keep-current / travel-alone alternative
};

/// Picks one alternative. Argmax ties resolve to the status-quo alternative,
/// then to the lowest index.
inline std::uint64_t choose_option(const ChoiceContext& ctx, CounterRng& rng) {
  if (ctx.alternatives.empty()) throw ContractError("choice with no alternatives");
  std::vector<double> u;
  for (auto& a : ctx.alternatives) {
    if (std::isnan(a.utility)) throw ContractError("non-finite utility");
    u.push_back(a.utility);
  }
  auto p = logit_probabilities(u);
  if (ctx.mode == ChoiceMode::Argmax) {
    std::size_t best = ctx.status_quo;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return ctx.alternatives[best].option_id;
  }
  double r = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (r < acc) return ctx.alternatives[i].option_id;
  }
  return ctx.alternatives.back().option_id;
}

enum class Outcome {
  Stay,           // a) stay with current matching
  LeaveMatching,  // b) leave current matching, keep using the service
  LeaveService,   // c) leave the ridesharing service
};

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Stay: return "a";
    case Outcome::LeaveMatching: return "b";
    case Outcome::LeaveService: return "c";
  }
  return "?";
}

/// Stay/leave utilities. `leave_matching` is -inf when that outcome is not
/// on offer; `stay` is +inf when staying is forced.
struct StayLeaveUtilities {
  double stay = 0.0;
  double leave_matching = -kInf;
  double leave_service = 0.0;
};

struct DecisionDraw {
  Outcome outcome = Outcome::Stay;
  double p_stay = 1.0;
};

/// Logit over the offered outcomes, sampled.
inline DecisionDraw decide_stay_leave(const StayLeaveUtilities& u, CounterRng& rng) {
  const double utilities[] = {u.stay, u.leave_matching, u.leave_service};
  auto p = logit_probabilities(utilities);
  double r = rng.uniform();
  Outcome o = Outcome::LeaveService;
  if (r < p[0])
    o = Outcome::Stay;
  else if (r < p[0] + p[1])
    o = Outcome::LeaveMatching;
  return {o, p[0]};
}

// Stay/leave utilities for passengers. `wt` is the time since the first
// request.

/// Unmatched passenger waiting for a match: direct-ride time plus waiting,
/// and the expected ridesharing cost net of coupons.
inline double passenger_wait_utility(const Passenger& p, double wt) {
  return p.coef.beta_time * (p.sp_time + wt) +
         p.coef.beta_cost * (p.expected_pay * p.alone_cost() - p.coupon);
}

/// Matched passenger waiting for the scheduled pickup.
inline double passenger_matched_utility(const Passenger& p, double scheduled_tt, double payment,
                                        double wt) {
  return p.coef.beta_time * (scheduled_tt + wt) + p.coef.beta_cost * (payment - p.coupon);
}

/// Quitting and travelling alone; a matched passenger also pays the fee.
inline double passenger_quit_utility(const Passenger& p, bool matched, double cancellation_fee) {
  return p.coef.beta_time * p.sp_time +
         p.coef.beta_cost * (p.alone_cost() + (matched ? cancellation_fee : 0.0));
}

/// Driver cancelling the not-yet-picked passengers: the reduced schedule's
/// time, cost and earnings plus the cancellation fee.
inline double driver_cancel_utility(const Coefficients& c, double tt_reduced, double cost_reduced,
                                    double earning_reduced, double cancellation_fee) {
  return c.beta_time * tt_reduced + c.beta_cost * (cost_reduced + cancellation_fee - earning_reduced);
}

/// Waiting time at which waiting for a match and travelling alone are
/// equally attractive:
///   wt* = (beta_cost / beta_time) * (alone_cost * (1 - expected_pay) + coupon),
/// clamped at zero.
inline double max_pickup_wait(const Coefficients& c, double alone_cost, double expected_pay,
                              double coupon = 0.0) {
  const double wt = (c.beta_cost / c.beta_time) * (alone_cost * (1.0 - expected_pay) + coupon);
  return std::max(0.0, wt);
}

inline double max_pickup_wait(const Passenger& p) {
  return max_pickup_wait(p.coef, p.alone_cost(), p.expected_pay, p.coupon);
}

/// Scheduled view of a matched passenger's current option.
struct MatchedView {
  double scheduled_tt = 0.0;  // now until scheduled drop-off
  double payment = 0.0;
};

/// Stay/leave utilities for a passenger at `now`. On-board passengers always
/// stay; otherwise it is waiting (unmatched) or keeping the match versus
/// quitting.
inline StayLeaveUtilities passenger_stay_leave(const Passenger& p, Time now,
                                               const std::optional<MatchedView>& matched,
                                               double cancellation_fee) {
  StayLeaveUtilities u;
  if (p.status == PassengerStatus::OnBoard) {
    u.stay = kInf;
    u.leave_service = -kInf;
    return u;
  }
  const double wt = now - p.first_request;
  if (matched) {
    u.stay = passenger_matched_utility(p, matched->scheduled_tt, matched->payment, wt);
    u.leave_service = passenger_quit_utility(p, true, cancellation_fee);
  } else {
    u.stay = passenger_wait_utility(p, wt);
    u.leave_service = passenger_quit_utility(p, false, cancellation_fee);
  }
  return u;
}

/// Time, operating cost and earnings of one schedule from the driver's view.
struct DriverView {
  double tt = 0.0;
  double cost = 0.0;
  double earning = 0.0;
};

/// Keep the current schedule versus cancel the not-yet-picked passengers
/// (which also means leaving the service).
inline StayLeaveUtilities driver_stay_leave(const Coefficients& c, const DriverView& current,
                                            const DriverView& reduced, double cancellation_fee) {
  StayLeaveUtilities u;
  u.stay = driver_option_utility(c, current.tt, current.cost, current.earning);
  u.leave_service = driver_cancel_utility(c, reduced.tt, reduced.cost, reduced.earning, cancellation_fee);
  return u;
}

}  // namespace rideshare
