#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rideshare {

/// Simulation time in minutes since simulation start.
using Time = double;
using NodeId = std::int64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class AgentClass : std::uint8_t { Passenger, Driver };

/// Agent handle. Passengers and drivers are numbered independently and print
/// as "P<n>" / "D<n>".
struct AgentRef {
  AgentClass cls = AgentClass::Passenger;
  std::uint32_t index = 0;

  static AgentRef passenger(std::uint32_t i) { return {AgentClass::Passenger, i}; }
  static AgentRef driver(std::uint32_t i) { return {AgentClass::Driver, i}; }

  bool is_driver() const { return cls == AgentClass::Driver; }
  bool is_passenger() const { return cls == AgentClass::Passenger; }

  std::string str() const {
    return (is_driver() ? "D" : "P") + std::to_string(index);
  }

  static AgentRef parse(std::string_view s);

  friend auto operator<=>(const AgentRef&, const AgentRef&) = default;
};

// Errors. Everything derives from Error so callers can catch broadly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct NoPathError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct EngineError : Error {
  using Error::Error;
};

inline AgentRef AgentRef::parse(std::string_view s) {
  if (s.size() < 2 || (s[0] != 'P' && s[0] != 'D'))
    throw ParseError("bad agent id '" + std::string(s) + "'");
  std::uint32_t v = 0;
  for (char c : s.substr(1)) {
    if (c < '0' || c > '9') throw ParseError("bad agent id '" + std::string(s) + "'");
    v = v * 10 + static_cast<std::uint32_t>(c - '0');
  }
  return {s[0] == 'D' ? AgentClass::Driver : AgentClass::Passenger, v};
}

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

/// Counter-based random stream: the i-th draw is a pure function of
/// (key, i), so results do not depend on the order in which agents are
/// evaluated or on which thread runs a replication.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0)
      : key_(hash_combine(hash_combine(seed, stream), sub)) {}

  std::uint64_t next() { return mix64(hash_combine(key_, counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    // Rejection sampling keeps it unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stable stream tags for the different random consumers.
enum class Stream : std::uint64_t {
  Population = 1,
  Decision = 2,
  Response = 3,
  NoShow = 4,
  Replication = 5,
};

inline std::uint64_t agent_key(AgentRef a) {
  return (static_cast<std::uint64_t>(a.cls) << 32) | a.index;
}

}  // namespace rideshare
