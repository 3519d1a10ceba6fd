// rideshare: command-line front end for the ridesharing simulator.
//
//   rideshare run      --config c.toml --out dir [--seed N] [--set k=v]...
//   rideshare sweep    --config c.toml --factor supply-level [--levels 0.1,0.5]
//   rideshare report   --log dir/events.jsonl [--out dir]
//   rideshare validate --config c.toml
//
// Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rideshare/config.hpp"
#include "rideshare/io.hpp"
#include "rideshare/metrics.hpp"
#include "rideshare/scenario.hpp"

namespace fs = std::filesystem;
using namespace rideshare;

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  int workers = 0;
  bool quiet = false;
  std::string factor;
  std::vector<double> levels;
  std::string log;
};

KeyValueConfig load_config(const Options& o) {
  KeyValueConfig c = o.config.empty() ? KeyValueConfig::parse("") : KeyValueConfig::load(o.config);
  for (auto& s : o.overrides) c.set(s);
  if (o.seed) c.set("run.seed=" + std::to_string(*o.seed));
  if (o.replications) c.set("run.replications=" + std::to_string(*o.replications));
  return c;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write(const fs::path& dir, const std::string& name, const std::string& text) {
  io::write_atomic(dir / name, text);
}

int cmd_run(const Options& o) {
  auto cfg = load_config(o);
  auto s = scenario_from(cfg);
  auto net = build_network(s);
  auto r = run_scenario(s, net, s.seed);
  fs::create_directories(o.out);
  auto events = r.events();
  auto folded = fold_log(events);
  write(o.out, "events.jsonl", r.log_text());
  write(o.out, "metrics.json", dump(r.metrics.to_json()));
  write(o.out, "profiles.csv", collect_profiles(events));
  write(o.out, "rounds.csv", rounds_csv(folded));
  std::string agents;
  for (auto& a : r.agents) agents += a.dump() + "\n";
  write(o.out, "agents.jsonl", agents);
  json info = {{"seed", r.seed},
               {"runtime_s", r.runtime_s},
               {"events", r.log.size()},
               {"warnings", r.warnings},
               {"audit_ok", r.audit.ok},
               {"audit_problems", r.audit.problems}};
  if (s.replications > 1 && o.replications) {
    auto set = run_replications(s, net, o.workers > 0 ? o.workers : s.workers);
    write(o.out, "replications.json", dump(set.summary.to_json()));
    double total = 0.0;
    for (double x : set.runtimes) total += x;
    info["replication_runtime_s_mean"] = total / static_cast<double>(set.runtimes.size());
  }
  write(o.out, "run_info.json", dump(info));
  if (!o.quiet) {
    std::cout << "run: " << r.log.size() << " events in " << r.runtime_s << " s -> " << o.out << "\n"
              << dump(r.metrics.to_json());
    for (auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  }
  if (!r.audit.ok) {
    for (auto& p : r.audit.problems) std::cerr << "audit: " << p << "\n";
    return 2;
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  auto cfg = load_config(o);
  scenario_from(cfg);  // validate the base before launching work
  auto levels = o.levels.empty() ? default_levels(o.factor) : o.levels;
  auto result = sweep(cfg, o.factor, levels, o.workers);
  fs::create_directories(o.out);
  std::string name = o.factor;
  for (auto& ch : name)
    if (ch == '.' || ch == '-') ch = '_';
  write(o.out, "sweep_" + name + ".csv", sweep_csv(result));
  if (!o.quiet)
    std::cout << "sweep: " << levels.size() << " levels -> " << (fs::path(o.out) / ("sweep_" + name + ".csv")).string()
              << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  auto events = parse_log(io::read_file(o.log));
  auto text = dump(compute_metrics(events).to_json());
  if (o.out.empty() || o.out == "-") {
    std::cout << text;
  } else {
    fs::create_directories(o.out);
    write(o.out, "metrics.json", text);
    if (!o.quiet) std::cout << "report -> " << (fs::path(o.out) / "metrics.json").string() << "\n";
  }
  return 0;
}

int cmd_validate(const Options& o) {
  auto cfg = load_config(o);
  auto s = scenario_from(cfg);
  auto net = build_network(s);
  auto od = od_source(s, net);
  auto batches = sample_population(s, net, od, s.seed);
  std::size_t pax = 0, drv = 0;
  for (auto& b : batches) {
    pax += b.passengers.size();
    drv += b.drivers.size();
  }
  if (!o.quiet)
    std::cout << "ok: " << net.node_count() << " nodes, " << od.size() << " OD pairs, " << batches.size()
              << " periods, " << pax << " passengers, " << drv << " drivers\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event peer-to-peer ridesharing simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Scenario configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "Override a configuration key (section.key=value)");
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };

  auto* run = app.add_subcommand("run", "Run one simulation and write its outputs");
  add_common(run);
  run->add_option("--out", o.out, "Output directory");
  run->add_option("--replications", o.replications, "Also aggregate this many replications");
  run->add_option("--workers", o.workers, "Worker threads (0 = all cores)");

  auto* sw = app.add_subcommand("sweep", "Replications over the levels of one factor");
  add_common(sw);
  sw->add_option("--out", o.out, "Output directory");
  sw->add_option("--factor", o.factor, "supply-level, matching-window or a dotted key")->required();
  sw->add_option("--levels", o.levels, "Comma-separated factor levels")->delimiter(',');
  sw->add_option("--replications", o.replications, "Replications per level");
  sw->add_option("--workers", o.workers, "Worker threads (0 = all cores)");

  auto* rep = app.add_subcommand("report", "Recompute metrics from an event log");
  rep->add_option("--log", o.log, "events.jsonl from a previous run")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", o.out, "Output directory ('-' for stdout)");
  rep->add_flag("--quiet", o.quiet, "Suppress progress output");

  auto* val = app.add_subcommand("validate", "Check configuration and inputs without simulating");
  add_common(val);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(o);
    if (*sw) return cmd_sweep(o);
    if (*rep) {
      if (rep->count("--out") == 0) o.out = "-";
      return cmd_report(o);
    }
    if (*val) return cmd_validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
