#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/io.hpp"

namespace rideshare {

inline constexpr double kDefaultBinMinutes = 15.0;
inline constexpr double kDefaultMinutesPerKm = 1.5;

struct NodeSpec {
  NodeId id = 0;
  double x = 0.0;  // km
  double y = 0.0;  // km
};

/// Directed link with a piecewise-constant travel-time profile. Bin k covers
/// entry times [k*bin, (k+1)*bin); the last bin extends forever and entry
/// times before 0 use bin 0.
struct LinkSpec {
  NodeId from = 0;
  NodeId to = 0;
  double length_km = 0.0;
  std::vector<double> travel_min;  // one value per bin, at least one
};

class Network {
 public:
  struct Link {
    std::size_t from = 0;
    std::size_t to = 0;
    double length_km = 0.0;
    std::vector<double> travel_min;
    // exit_floor[k]: supremum of exit times over all entries before bin k.
    // Exits from bin k are clamped to it, which makes traversal FIFO.
    std::vector<double> exit_floor;
    double min_travel = 0.0;
  };

  Network() = default;

  Network(std::vector<NodeSpec> nodes, std::vector<LinkSpec> links,
          double bin_minutes = kDefaultBinMinutes)
      : bin_minutes_(bin_minutes) {
    if (!(bin_minutes > 0.0)) throw ValidationError("bin length must be positive");
    std::sort(nodes.begin(), nodes.end(), [](auto& a, auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i > 0 && nodes[i].id == nodes[i - 1].id)
        throw ValidationError("duplicate node id " + std::to_string(nodes[i].id));
      index_.emplace(nodes[i].id, i);
    }
    nodes_ = std::move(nodes);
    out_.assign(nodes_.size(), {});
    for (auto& spec : links) {
      auto f = index_of(spec.from);
      auto t = index_of(spec.to);
      if (!f || !t)
        throw ValidationError("link " + std::to_string(spec.from) + "->" + std::to_string(spec.to) +
                              " references unknown node " +
                              std::to_string(!f ? spec.from : spec.to));
      if (!(spec.length_km > 0.0))
        throw ValidationError("link " + std::to_string(spec.from) + "->" + std::to_string(spec.to) +
                              " has nonpositive length");
      if (spec.travel_min.empty())
        throw ValidationError("link " + std::to_string(spec.from) + "->" + std::to_string(spec.to) +
                              " has no travel time");
      for (double v : spec.travel_min)
        if (!(v > 0.0))
          throw ValidationError("link " + std::to_string(spec.from) + "->" +
                                std::to_string(spec.to) + " has nonpositive travel time");
      Link l;
      l.from = *f;
      l.to = *t;
      l.length_km = spec.length_km;
      l.travel_min = std::move(spec.travel_min);
      l.exit_floor.assign(l.travel_min.size(), -kInf);
      for (std::size_t k = 1; k < l.travel_min.size(); ++k)
        l.exit_floor[k] = std::max(l.exit_floor[k - 1],
                                   static_cast<double>(k) * bin_minutes_ + l.travel_min[k - 1]);
      l.min_travel = *std::min_element(l.travel_min.begin(), l.travel_min.end());
      if (l.travel_min.size() > 1) time_independent_ = false;
      links_.push_back(std::move(l));
    }
    for (std::size_t i = 0; i < links_.size(); ++i) out_[links_[i].from].push_back(i);
    for (auto& v : out_)
      std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
        return links_[a].to != links_[b].to ? links_[a].to < links_[b].to
                                            : links_[a].length_km < links_[b].length_km;
      });
    for (auto& l : links_) {
      double euclid = distance(l.from, l.to);
      if (euclid > 0.0) max_speed_ = std::max(max_speed_, euclid / l.min_travel);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }
  const NodeSpec& node(std::size_t i) const { return nodes_[i]; }
  const Link& link(std::size_t i) const { return links_[i]; }
  const std::vector<std::size_t>& out_links(std::size_t node) const { return out_[node]; }
  double bin_minutes() const { return bin_minutes_; }
  bool time_independent() const { return time_independent_; }

  std::optional<std::size_t> index_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t require(NodeId id) const {
    auto i = index_of(id);
    if (!i) throw ValidationError("unknown node " + std::to_string(id));
    return *i;
  }
  NodeId id_of(std::size_t i) const { return nodes_[i].id; }

  double distance(std::size_t a, std::size_t b) const {
    return std::hypot(nodes_[a].x - nodes_[b].x, nodes_[a].y - nodes_[b].y);
  }

  /// Exit time of a link entered at `enter`.
  Time traverse(std::size_t link_index, Time enter) const {
    const auto& l = links_[link_index];
    std::size_t k = 0;
    if (enter > 0.0) {
      double b = std::floor(enter / bin_minutes_);
      k = b >= static_cast<double>(l.travel_min.size() - 1) ? l.travel_min.size() - 1
                                                             : static_cast<std::size_t>(b);
    }
    return std::max(enter + l.travel_min[k], l.exit_floor[k]);
  }

  /// Lower bound on travel time between two nodes (km plane / fastest link).
  double heuristic(std::size_t a, std::size_t b) const {
    return max_speed_ > 0.0 ? distance(a, b) / max_speed_ : 0.0;
  }

  /// Length of the shortest direct link u->v; throws if none.
  double link_length(NodeId u, NodeId v) const {
    auto ui = require(u);
    auto vi = require(v);
    double best = kInf;
    for (auto li : out_[ui])
      if (links_[li].to == vi) best = std::min(best, links_[li].length_km);
    if (best == kInf)
      throw ValidationError("no link " + std::to_string(u) + "->" + std::to_string(v));
    return best;
  }

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> out_;
  std::unordered_map<NodeId, std::size_t> index_;
  double bin_minutes_ = kDefaultBinMinutes;
  double max_speed_ = 0.0;  // km per minute
  bool time_independent_ = true;
};

/// Loads nodes (`node_id,x,y`), links (`from,to,length_km`) and optional
/// profiles (`from,to,bin_start_min,travel_time_min`). Links without any
/// profile rows get a constant free-flow time of length * minutes_per_km.
/// Bins missing inside a profile inherit the previous bin's value.
inline Network load_network(const std::filesystem::path& nodes_file,
                            const std::filesystem::path& links_file,
                            const std::optional<std::filesystem::path>& profiles_file,
                            double bin_minutes = kDefaultBinMinutes,
                            double minutes_per_km = kDefaultMinutesPerKm) {
  std::vector<NodeSpec> nodes;
  for (auto& r : io::read_csv(nodes_file, 3)) {
    auto w = io::where(nodes_file, r.line);
    nodes.push_back({io::to_int(r.fields[0], w), io::to_double(r.fields[1], w),
                     io::to_double(r.fields[2], w)});
  }
  std::vector<LinkSpec> links;
  std::map<std::pair<NodeId, NodeId>, std::size_t> by_pair;
  for (auto& r : io::read_csv(links_file, 3)) {
    auto w = io::where(links_file, r.line);
    LinkSpec l{io::to_int(r.fields[0], w), io::to_int(r.fields[1], w),
               io::to_double(r.fields[2], w), {}};
    if (!(l.length_km > 0.0)) throw ValidationError(w + ": nonpositive link length");
    by_pair[{l.from, l.to}] = links.size();
    links.push_back(std::move(l));
  }
  std::map<std::size_t, std::map<std::size_t, double>> bins;  // link -> bin -> minutes
  if (profiles_file) {
    for (auto& r : io::read_csv(*profiles_file, 4)) {
      auto w = io::where(*profiles_file, r.line);
      NodeId f = io::to_int(r.fields[0], w);
      NodeId t = io::to_int(r.fields[1], w);
      double start = io::to_double(r.fields[2], w);
      double tt = io::to_double(r.fields[3], w);
      auto it = by_pair.find({f, t});
      if (it == by_pair.end()) throw ValidationError(w + ": profile for unknown link");
      if (start < 0.0 || std::fmod(start, bin_minutes) != 0.0)
        throw ValidationError(w + ": bin start must be a nonnegative multiple of the bin length");
      if (!(tt > 0.0)) throw ValidationError(w + ": nonpositive travel time");
      bins[it->second][static_cast<std::size_t>(start / bin_minutes)] = tt;
    }
  }
  for (std::size_t i = 0; i < links.size(); ++i) {
    auto it = bins.find(i);
    if (it == bins.end()) {
      links[i].travel_min = {links[i].length_km * minutes_per_km};
      continue;
    }
    auto& m = it->second;
    std::size_t last = m.rbegin()->first;
    double value = m.begin()->second;  // bins before the first row use it
    for (std::size_t k = 0; k <= last; ++k) {
      if (auto f = m.find(k); f != m.end()) value = f->second;
      links[i].travel_min.push_back(value);
    }
  }
  return Network(std::move(nodes), std::move(links), bin_minutes);
}

/// Bidirectional n x n grid with `spacing_km` between neighbours and a
/// constant travel time of minutes_per_km per km. Node ids are row*n+col.
inline Network make_grid_network(int n, double spacing_km,
                                 double minutes_per_km = kDefaultMinutesPerKm) {
  if (n < 1 || !(spacing_km > 0.0)) throw ValidationError("bad grid parameters");
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) nodes.push_back({r * n + c, c * spacing_km, r * spacing_km});
  auto add = [&](int a, int b) {
    links.push_back({a, b, spacing_km, {spacing_km * minutes_per_km}});
    links.push_back({b, a, spacing_km, {spacing_km * minutes_per_km}});
  };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (c + 1 < n) add(r * n + c, r * n + c + 1);
      if (r + 1 < n) add(r * n + c, (r + 1) * n + c);
    }
  return Network(std::move(nodes), std::move(links));
}

enum class ItineraryKind { Scheduled, Actual };

/// Node sequence with arrival timestamps.
struct Itinerary {
  std::vector<NodeId> nodes;
  std::vector<Time> times;
  double distance_km = 0.0;
  ItineraryKind kind = ItineraryKind::Scheduled;

  bool empty() const { return nodes.empty(); }
  Time departure() const { return times.front(); }
  Time arrival() const { return times.back(); }
};

namespace detail {

struct SearchResult {
  std::vector<Time> arrival;
  std::vector<std::size_t> pred_link;  // SIZE_MAX at the origin / unreached
};

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

inline std::vector<std::size_t> path_nodes(const Network& net, const SearchResult& s,
                                           std::size_t v) {
  std::vector<std::size_t> p{v};
  while (s.pred_link[v] != kNone) {
    v = net.link(s.pred_link[v]).from;
    p.push_back(v);
  }
  std::reverse(p.begin(), p.end());
  return p;
}

/// Time-dependent A* from `origin` to `dest`. Among paths with equal arrival
/// the node sequence with the smallest ids (lexicographically) wins.
inline SearchResult astar(const Network& net, std::size_t origin, std::size_t dest, Time depart) {
  const std::size_t n = net.node_count();
  SearchResult s{std::vector<Time>(n, kInf), std::vector<std::size_t>(n, kNone)};
  std::vector<char> settled(n, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  s.arrival[origin] = depart;
  open.push({depart + net.heuristic(origin, dest), origin});
  while (!open.empty()) {
    auto [key, u] = open.top();
    open.pop();
    if (settled[u]) continue;
    settled[u] = 1;
    if (u == dest) break;
    for (auto li : net.out_links(u)) {
      const auto& l = net.link(li);
      if (settled[l.to]) continue;
      Time t = net.traverse(li, s.arrival[u]);
      if (t < s.arrival[l.to]) {
        s.arrival[l.to] = t;
        s.pred_link[l.to] = li;
        open.push({t + net.heuristic(l.to, dest), l.to});
      } else if (t == s.arrival[l.to] && s.pred_link[l.to] != kNone &&
                 net.link(s.pred_link[l.to]).from != u) {
        auto current = path_nodes(net, s, net.link(s.pred_link[l.to]).from);
        auto candidate = path_nodes(net, s, u);
        auto ids = [&](const std::vector<std::size_t>& p) {
          std::vector<NodeId> out;
          for (auto x : p) out.push_back(net.id_of(x));
          return out;
        };
        if (ids(candidate) < ids(current)) s.pred_link[l.to] = li;
      }
    }
  }
  return s;
}

}  // namespace detail

/// Earliest-arrival itinerary from `origin` to `dest` leaving at `depart`.
/// Throws NoPathError when `dest` is unreachable.
inline Itinerary shortest_itinerary(const Network& net, NodeId origin, NodeId dest, Time depart) {
  auto o = net.require(origin);
  auto d = net.require(dest);
  Itinerary it;
  it.kind = ItineraryKind::Scheduled;
  if (o == d) {
    it.nodes = {origin};
    it.times = {depart};
    return it;
  }
  auto s = detail::astar(net, o, d, depart);
  if (s.arrival[d] == kInf)
    throw NoPathError("no path " + std::to_string(origin) + "->" + std::to_string(dest));
  std::vector<std::size_t> links;
  for (auto v = d; s.pred_link[v] != detail::kNone; v = net.link(s.pred_link[v]).from)
    links.push_back(s.pred_link[v]);
  std::reverse(links.begin(), links.end());
  it.nodes.push_back(origin);
  it.times.push_back(depart);
  for (auto li : links) {
    it.nodes.push_back(net.id_of(net.link(li).to));
    it.times.push_back(s.arrival[net.link(li).to]);
    it.distance_km += net.link(li).length_km;
  }
  return it;
}

/// Same node sequence with every segment duration divided by `speed_factor`.
inline Itinerary actualize_itinerary(const Itinerary& scheduled, double speed_factor) {
  if (!(speed_factor > 0.0)) throw ContractError("speed factor must be positive");
  Itinerary a = scheduled;
  a.kind = ItineraryKind::Actual;
  for (std::size_t i = 1; i < a.times.size(); ++i)
    a.times[i] = a.times[i - 1] + (scheduled.times[i] - scheduled.times[i - 1]) / speed_factor;
  return a;
}

struct Position {
  NodeId node = 0;
  Time time = 0.0;
  std::size_t index = 0;  // position within the itinerary
};

/// First itinerary node reachable at or after `now`. Positions are never
/// interpolated inside a link. Returns nullopt once `now` is past the last
/// timestamp (the driver has arrived).
inline std::optional<Position> advance_position(const Itinerary& it, Time now) {
  if (it.empty()) throw ContractError("advance_position on empty itinerary");
  for (std::size_t i = 0; i < it.times.size(); ++i)
    if (it.times[i] >= now) return Position{it.nodes[i], it.times[i], i};
  return std::nullopt;
}

/// Travel summary between two nodes.
struct Travel {
  Time arrival = 0.0;
  double distance_km = 0.0;
};

/// Memoizing wrapper around shortest_itinerary. On time-independent networks
/// results are cached per node pair; otherwise per (pair, departure time).
/// Not thread-safe: each simulation owns one.
class Router {
 public:
  explicit Router(const Network& net) : net_(&net) {}

  const Network& network() const { return *net_; }

  /// Throws NoPathError if unreachable.
  Travel travel(NodeId o, NodeId d, Time depart) {
    if (o == d) return {depart, 0.0};
    if (net_->time_independent()) {
      auto key = std::make_pair(o, d);
      auto it = static_cache_.find(key);
      if (it == static_cache_.end()) {
        std::optional<Travel> v;
        try {
          auto itin = shortest_itinerary(*net_, o, d, 0.0);
          v = Travel{itin.arrival(), itin.distance_km};
        } catch (const NoPathError&) {
        }
        it = static_cache_.emplace(key, v).first;
      }
      if (!it->second) throw NoPathError("no path " + std::to_string(o) + "->" + std::to_string(d));
      return {depart + it->second->arrival, it->second->distance_km};
    }
    auto key = std::make_tuple(o, d, depart);
    auto it = timed_cache_.find(key);
    if (it != timed_cache_.end()) return it->second;
    auto itin = shortest_itinerary(*net_, o, d, depart);
    Travel t{itin.arrival(), itin.distance_km};
    if (timed_cache_.size() > 2'000'000) timed_cache_.clear();
    timed_cache_.emplace(key, t);
    return t;
  }

  Itinerary itinerary(NodeId o, NodeId d, Time depart) const {
    return shortest_itinerary(*net_, o, d, depart);
  }

 private:
  const Network* net_;
  std::map<std::pair<NodeId, NodeId>, std::optional<Travel>> static_cache_;
  std::map<std::tuple<NodeId, NodeId, Time>, Travel> timed_cache_;
};

}  // namespace rideshare
