// Command-line front end: scenario runs, batches, snapshot optimization,
// and generators for feeders and daily profiles.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voltcoal/netfile.hpp"
#include "voltcoal/netgen.hpp"
#include "voltcoal/oracle.hpp"
#include "voltcoal/profiles.hpp"
#include "voltcoal/scenario.hpp"
#include "voltcoal/sim.hpp"

namespace {

using namespace voltcoal;

void write_file(const std::string& path, auto&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(strfmt("cannot write '%s'", path.c_str()));
  writer(out);
}

void write_run_outputs(const TimeSeriesResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/voltages.csv", [&](std::ostream& o) { write_voltages_csv(r, o); });
  write_file(dir + "/ratios.csv", [&](std::ostream& o) { write_ratios_csv(r, o); });
  write_file(dir + "/events.csv", [&](std::ostream& o) { write_events_csv(r, o); });
  write_file(dir + "/metrics.txt", [&](std::ostream& o) { write_metrics_txt(r.metrics, o); });
}

int cmd_run(const std::string& scenario_file, const std::string& strategy,
            std::uint64_t seed, bool seed_set, const std::string& out_dir) {
  ScenarioConfig cfg = load_scenario_file(scenario_file);
  if (!strategy.empty()) cfg.strategy = strategy_from_string(strategy);
  if (seed_set) cfg.seed = seed;
  TimeSeriesResult r = run_scenario(cfg);
  write_run_outputs(r, out_dir);
  std::printf("strategy=%s seed=%llu ticks=%lld\n", to_string(cfg.strategy),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<long long>(cfg.total_ticks()));
  std::printf("lower_violation_min=%.3f upper_violation_min=%.3f max_u_spread=%.4f "
              "saturation_min=%.3f\n",
              r.metrics.lower_violation_min, r.metrics.upper_violation_min,
              r.metrics.max_u_spread, r.metrics.saturation_min);
  std::printf("outputs in %s\n", out_dir.c_str());
  return 0;
}

int cmd_batch(const std::string& scenario_file, int n, std::uint64_t seed,
              const std::string& out_dir) {
  ScenarioConfig tmpl = load_scenario_file(scenario_file);
  BatchResult br = run_batch(tmpl, n, seed);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/batch.csv", [&](std::ostream& o) {
    o << "seed,strategy,lower_violation_min,upper_violation_min,max_u_spread,saturation_min\n";
    auto row = [&](std::uint64_t s, const char* name, const Metrics& m) {
      std::string line = std::to_string(s);
      line += ',';
      line += name;
      line += ',';
      append_csv_double(line, m.lower_violation_min, 6);
      line += ',';
      append_csv_double(line, m.upper_violation_min, 6);
      line += ',';
      append_csv_double(line, m.max_u_spread, 6);
      line += ',';
      append_csv_double(line, m.saturation_min, 6);
      o << line << '\n';
    };
    for (const BatchEntry& e : br.scenarios) {
      row(e.seed, "proposed", e.proposed);
      row(e.seed, "local", e.local);
      row(e.seed, "centralized", e.centralized);
    }
  });
  auto report = [&](const char* name, const Metrics& m) {
    std::printf("%-12s mean lower=%.3f min  upper=%.3f min  spread=%.4f  saturation=%.3f min\n",
                name, m.lower_violation_min, m.upper_violation_min, m.max_u_spread,
                m.saturation_min);
    write_file(out_dir + "/metrics_" + name + ".txt",
               [&](std::ostream& o) { write_metrics_txt(m, o); });
  };
  std::printf("batch of %d scenarios (seed %llu)\n", n, static_cast<unsigned long long>(seed));
  report("proposed", br.mean_proposed);
  report("local", br.mean_local);
  report("centralized", br.mean_centralized);
  return 0;
}

int cmd_oracle(const std::string& scenario_file, const std::string& at_hhmm) {
  ScenarioConfig cfg = load_scenario_file(scenario_file);
  const double at_s = parse_hhmm(at_hhmm, "--at");
  if (at_s < cfg.start_time_s || at_s >= cfg.start_time_s + cfg.duration_s)
    throw Error("--at lies outside the scenario's simulated span");
  cfg.record_every_s = 0;

  Simulation sim(cfg);
  const auto stop = static_cast<std::int64_t>(std::llround((at_s - cfg.start_time_s) / cfg.tick_s));
  while (sim.tick() <= stop) sim.step();

  // Fixed non-member reactive output becomes part of the base injections.
  std::vector<cplx> base = base_injections_at(sim.setup(), at_s);
  const double s_base = sim.setup().net.s_base_kva;
  std::map<int, size_t> index;
  for (size_t i = 0; i < sim.setup().net.buses.size(); ++i)
    index[sim.setup().net.buses[i].id] = i;

  std::printf("snapshot at %s (%.0f s), slack %.4f p.u.\n", at_hhmm.c_str(), at_s,
              cfg.slack.at(at_s));
  for (const auto& coalition : sim.coalitions()) {
    int leader = coalition.front();
    for (int id : coalition)
      if (sim.agents().at(id).role == Role::leader) leader = id;

    std::vector<cplx> inj = base;
    for (const auto& [id, st] : sim.agents()) {
      bool member = std::find(coalition.begin(), coalition.end(), id) != coalition.end();
      if (!member) inj[index.at(id)] += cplx(0.0, st.q_out_kvar / s_base);
    }
    std::vector<double> q_max;
    for (int id : coalition) q_max.push_back(sim.agents().at(id).q_max_kvar);

    SnapshotOptimum opt = snapshot_optimum(sim.setup().net, inj, cfg.slack.at(at_s), leader,
                                           coalition, q_max, cfg.params);
    std::printf("coalition %d (%zu members, leader bus %d): u*=%.6f v_leader=%.6f%s%s\n",
                coalition.front(), coalition.size(), leader, opt.u_star, opt.v_leader,
                opt.saturated ? " [saturated]" : "",
                opt.violated_limit ? " [limit violated at optimum]" : "");
  }
  return 0;
}

int cmd_gen_network(const NetGenSpec& spec, std::uint64_t seed, const std::string& out_file) {
  GeneratedFeeder gen = generate_network(spec, seed);
  save_network_file(gen.net, out_file);
  std::printf("wrote %s: %zu buses, %zu lines, %zu inverters, %zu houses, %zu commercial\n",
              out_file.c_str(), gen.net.buses.size(), gen.net.lines.size(),
              gen.inverter_buses.size(), gen.residential_buses.size(),
              gen.commercial_buses.size());
  return 0;
}

int cmd_gen_profiles(const std::string& kind, double resolution_s, std::uint64_t seed,
                     const std::string& out_file) {
  Profile p = generate_profile(profile_kind_from_string(kind), resolution_s, seed);
  save_profile_csv_file(p, out_file);
  std::printf("wrote %s: %zu samples at %.0f s resolution\n", out_file.c_str(), p.values.size(),
              p.resolution_s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltage-regulation coalition simulator"};
  app.require_subcommand(1);

  std::string scenario_file, strategy, out_dir = "out", at_hhmm, out_file;
  std::uint64_t seed = 1;
  int batch_n = 50;

  auto* run = app.add_subcommand("run", "run one scenario and write CSV outputs");
  run->add_option("--scenario", scenario_file, "scenario file")->required();
  run->add_option("--strategy", strategy, "proposed | local | centralized (overrides file)");
  auto* run_seed = run->add_option("--seed", seed, "RNG seed (overrides file)");
  run->add_option("--out", out_dir, "output directory (default: out)");

  auto* batch = app.add_subcommand("batch", "run a seeded batch, all three strategies");
  batch->add_option("--scenario", scenario_file, "scenario template file")->required();
  batch->add_option("--n", batch_n, "number of scenarios (default: 50)");
  batch->add_option("--seed", seed, "batch seed");
  batch->add_option("--out", out_dir, "output directory (default: out)");

  auto* oracle = app.add_subcommand("oracle", "per-coalition snapshot optimum at a time of day");
  oracle->add_option("--scenario", scenario_file, "scenario file")->required();
  oracle->add_option("--at", at_hhmm, "snapshot time, HH:MM")->required();

  NetGenSpec spec;
  auto* gen_net = app.add_subcommand("gen-network", "generate a synthetic feeder file");
  gen_net->add_option("--seed", seed, "RNG seed");
  gen_net->add_option("--out", out_file, "output network file")->required();
  gen_net->add_option("--laterals", spec.laterals, "lateral count");
  gen_net->add_option("--nodes-per-lateral", spec.nodes_per_lateral, "nodes per lateral");
  gen_net->add_option("--trunk-nodes", spec.trunk_nodes, "trunk junction count");
  gen_net->add_option("--houses", spec.houses, "house count");
  gen_net->add_option("--inverters", spec.inverters, "smart-inverter count");

  std::string kind = "pv";
  double resolution_s = 60.0;
  auto* gen_prof = app.add_subcommand("gen-profiles", "generate a daily profile CSV");
  gen_prof->add_option("--kind", kind, "residential_load | commercial_load | pv");
  gen_prof->add_option("--resolution", resolution_s, "sample spacing in seconds (default 60)");
  gen_prof->add_option("--seed", seed, "RNG seed");
  gen_prof->add_option("--out", out_file, "output CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(scenario_file, strategy, seed, run_seed->count() > 0, out_dir);
    if (batch->parsed()) return cmd_batch(scenario_file, batch_n, seed, out_dir);
    if (oracle->parsed()) return cmd_oracle(scenario_file, at_hhmm);
    if (gen_net->parsed()) return cmd_gen_network(spec, seed, out_file);
    if (gen_prof->parsed()) return cmd_gen_profiles(kind, resolution_s, seed, out_file);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
