#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "voltcoal/agents.hpp"
#include "voltcoal/netgen.hpp"
#include "voltcoal/util.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Scenario description: everything a run needs, resolvable from a text file.
//
// File format: INI-style sections of `key = value` lines, `#` comments,
// unknown sections or keys rejected.  See data/bundled.scn for a complete
// example.
// ---------------------------------------------------------------------------

enum class Strategy { proposed, local, centralized };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::proposed: return "proposed";
    case Strategy::local: return "local";
    case Strategy::centralized: return "centralized";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "proposed") return Strategy::proposed;
  if (s == "local") return Strategy::local;
  if (s == "centralized") return Strategy::centralized;
  throw Error(strfmt("unknown strategy '%s' (expected proposed|local|centralized)", s.c_str()));
}

// Piecewise-constant substation setpoint over a day, wrapping every 24 h.
// Default emulates an on-load tap changer: boosted evenings, depressed during
// the high-PV midday window.
struct SlackSchedule {
  std::vector<std::pair<double, double>> points{
      {0.0, 1.01}, {36000.0, 0.99}, {59400.0, 1.01}, {64800.0, 1.03}, {79200.0, 1.01}};

  double at(double t_s) const {
    double day_t = std::fmod(t_s, 86400.0);
    if (day_t < 0) day_t += 86400.0;
    double v = points.front().second;
    for (const auto& [start, setpoint] : points) {
      if (start > day_t) break;
      v = setpoint;
    }
    return v;
  }

  void validate() const {
    if (points.empty()) throw Error("slack schedule must have at least one point");
    if (points.front().first != 0.0) throw Error("slack schedule must start at 00:00");
    for (size_t i = 0; i < points.size(); ++i) {
      if (i > 0 && points[i].first <= points[i - 1].first)
        throw Error("slack schedule times must be strictly increasing");
      if (points[i].first >= 86400.0) throw Error("slack schedule times must be within one day");
      if (!(points[i].second > 0.8 && points[i].second < 1.2))
        throw Error(strfmt("slack setpoint %.4f outside (0.8, 1.2)", points[i].second));
    }
  }
};

// Parse "00:00=1.01,10:00=0.99,..." into a schedule.
inline SlackSchedule parse_slack_schedule(const std::string& text) {
  SlackSchedule sched;
  sched.points.clear();
  for (std::string_view item : split(text, ',')) {
    auto kv = split(trim(item), '=');
    if (kv.size() != 2)
      throw Error(strfmt("slack schedule entry '%.*s' is not HH:MM=value",
                         static_cast<int>(item.size()), item.data()));
    sched.points.emplace_back(parse_hhmm(trim(kv[0]), "slack schedule time"),
                              parse_double(trim(kv[1]), "slack setpoint"));
  }
  sched.validate();
  return sched;
}

struct ScenarioConfig {
  // [run]
  Strategy strategy = Strategy::proposed;
  std::uint64_t seed = 1;
  double duration_s = 86400.0;
  double start_time_s = 0.0;  // wall-clock offset of tick 0 within the day

  // [network]
  bool generate_network_flag = true;
  std::string network_file;
  NetGenSpec netgen;
  std::vector<int> commercial_buses;  // only used with network files

  // [profiles]
  bool profiles_generated = true;
  std::string profiles_dir;
  double profile_resolution_s = 60.0;

  // [timing]
  double tick_s = 0.2;
  double coalition_period_s = 300.0;
  double avg_window_s = 900.0;
  int latency_ticks = 1;
  double record_every_s = 60.0;  // <= 0 disables series recording
  double freeze_at_s = -1.0;     // wall-clock freeze start; < 0 disables
  double freeze_for_s = 0.0;     // 0 = frozen through the end of the run

  // [slack]
  SlackSchedule slack;

  // [faults]
  bool faults_enabled = false;
  double fault_fraction = 0.10;
  double fault_duration_s = 900.0;
  std::string fault_file;

  // [control]
  ControlParams params;

  std::int64_t total_ticks() const {
    return static_cast<std::int64_t>(std::llround(duration_s / tick_s));
  }
  std::int64_t period_ticks() const {
    return static_cast<std::int64_t>(std::llround(coalition_period_s / tick_s));
  }

  void validate() const {
    params.validate();
    slack.validate();
    if (!(tick_s > 0)) throw Error("tick_s must be positive");
    if (duration_s < 0) throw Error("duration_s must be non-negative");
    if (start_time_s < 0) throw Error("start_time_s must be non-negative");
    if (latency_ticks < 1) throw Error("latency_ticks must be >= 1");
    if (period_ticks() < 4 * (latency_ticks + 1))
      throw Error("coalition_period_s too short for the latency: the assessment and election "
                  "windows would not fit");
    if (!(avg_window_s > 0)) throw Error("avg_window_s must be positive");
    if (record_every_s > 0 && record_every_s + 1e-12 < tick_s)
      throw Error("record_every_s must be >= tick_s");
    if (freeze_at_s >= 0 && freeze_at_s < start_time_s)
      throw Error("freeze_at_s lies before the start of the run");
    if (fault_fraction < 0 || fault_fraction > 1)
      throw Error("fault fraction must lie in [0, 1]");
    if (fault_duration_s <= 0) throw Error("fault duration must be positive");
    if (!generate_network_flag && network_file.empty())
      throw Error("network source=file requires a file path");
    if (!profiles_generated && profiles_dir.empty())
      throw Error("profiles source=csv requires a directory");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw Error(strfmt("%s: expected a boolean, got '%s'", what.c_str(), v.c_str()));
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& what) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (std::string_view item : split(v, ',')) out.push_back(parse_double(item, what.c_str()));
  return out;
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& what) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (std::string_view item : split(v, ','))
    out.push_back(static_cast<int>(parse_long(item, what.c_str())));
  return out;
}

}  // namespace detail

inline ScenarioConfig load_scenario(std::istream& in, const std::string& origin = "scenario") {
  ScenarioConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& msg) -> Error {
    return Error(strfmt("%s:%d: %s", origin.c_str(), lineno, msg.c_str()));
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::string s(trim(line));
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw fail("malformed section header");
      section = s.substr(1, s.size() - 2);
      if (section != "run" && section != "network" && section != "profiles" &&
          section != "timing" && section != "slack" && section != "faults" &&
          section != "control")
        throw fail("unknown section [" + section + "]");
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    std::string key(trim(s.substr(0, eq)));
    std::string val(trim(s.substr(eq + 1)));
    if (section.empty()) throw fail("key outside any section");

    auto d = [&] { return parse_double(val, key.c_str()); };
    auto i = [&] { return static_cast<int>(parse_long(val, key.c_str())); };
    auto b = [&] { return detail::parse_bool(val, key); };

    if (section == "run") {
      if (key == "strategy") cfg.strategy = strategy_from_string(val);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(val, "seed"));
      else if (key == "duration_s") cfg.duration_s = d();
      else if (key == "start_time_s") cfg.start_time_s = d();
      else if (key == "start_time") cfg.start_time_s = parse_hhmm(val, "start_time");
      else throw fail("unknown key '" + key + "' in [run]");
    } else if (section == "network") {
      NetGenSpec& g = cfg.netgen;
      if (key == "source") {
        if (val == "generate") cfg.generate_network_flag = true;
        else if (val == "file") cfg.generate_network_flag = false;
        else throw fail("network source must be generate|file");
      } else if (key == "file") cfg.network_file = val;
      else if (key == "commercial_buses")
        cfg.commercial_buses = detail::parse_int_list(val, "commercial_buses");
      else if (key == "laterals") g.laterals = i();
      else if (key == "nodes_per_lateral") g.nodes_per_lateral = i();
      else if (key == "trunk_nodes") g.trunk_nodes = i();
      else if (key == "trunk_r_ohm") g.trunk_r_ohm = d();
      else if (key == "trunk_x_ohm") g.trunk_x_ohm = d();
      else if (key == "lateral_r_min_ohm") g.lateral_r_min_ohm = d();
      else if (key == "lateral_r_max_ohm") g.lateral_r_max_ohm = d();
      else if (key == "lateral_x_over_r") g.lateral_x_over_r = d();
      else if (key == "houses") g.houses = i();
      else if (key == "inverters") g.inverters = i();
      else if (key == "house_kw_min") g.house_kw_min = d();
      else if (key == "house_kw_max") g.house_kw_max = d();
      else if (key == "rooftop_pv_heavy_min_kw") g.rooftop_pv_heavy_min_kw = d();
      else if (key == "rooftop_pv_heavy_max_kw") g.rooftop_pv_heavy_max_kw = d();
      else if (key == "rooftop_pv_gen_min_kw") g.rooftop_pv_gen_min_kw = d();
      else if (key == "rooftop_pv_gen_max_kw") g.rooftop_pv_gen_max_kw = d();
      else if (key == "commercial_kw") g.commercial_kw = detail::parse_double_list(val, key);
      else if (key == "farm_kw") g.farm_kw = detail::parse_double_list(val, key);
      else if (key == "load_q_per_p") g.load_q_per_p = d();
      else if (key == "v_base_volts") g.v_base_volts = d();
      else if (key == "s_base_kva") g.s_base_kva = d();
      else throw fail("unknown key '" + key + "' in [network]");
    } else if (section == "profiles") {
      if (key == "source") {
        if (val == "generated") cfg.profiles_generated = true;
        else if (val == "csv") cfg.profiles_generated = false;
        else throw fail("profiles source must be generated|csv");
      } else if (key == "dir") cfg.profiles_dir = val;
      else if (key == "resolution_s") cfg.profile_resolution_s = d();
      else throw fail("unknown key '" + key + "' in [profiles]");
    } else if (section == "timing") {
      if (key == "tick_s") cfg.tick_s = d();
      else if (key == "coalition_period_s") cfg.coalition_period_s = d();
      else if (key == "avg_window_s") cfg.avg_window_s = d();
      else if (key == "latency_ticks") cfg.latency_ticks = i();
      else if (key == "record_every_s") cfg.record_every_s = d();
      else if (key == "freeze_at_s") cfg.freeze_at_s = d();
      else if (key == "freeze_at") cfg.freeze_at_s = parse_hhmm(val, "freeze_at");
      else if (key == "freeze_for_s") cfg.freeze_for_s = d();
      else throw fail("unknown key '" + key + "' in [timing]");
    } else if (section == "slack") {
      if (key == "schedule") cfg.slack = parse_slack_schedule(val);
      else throw fail("unknown key '" + key + "' in [slack]");
    } else if (section == "faults") {
      if (key == "enabled") cfg.faults_enabled = b();
      else if (key == "fraction") cfg.fault_fraction = d();
      else if (key == "duration_s") cfg.fault_duration_s = d();
      else if (key == "file") cfg.fault_file = val;
      else throw fail("unknown key '" + key + "' in [faults]");
    } else if (section == "control") {
      ControlParams& p = cfg.params;
      if (key == "v_upper_lim") p.v_hi = d();
      else if (key == "v_lower_lim") p.v_lo = d();
      else if (key == "v_upper_th") p.v_hi_th = d();
      else if (key == "v_lower_th") p.v_lo_th = d();
      else if (key == "v_ref") p.v_ref = d();
      else if (key == "eps_u") p.eps_u = d();
      else if (key == "u_high_th") p.u_hi_th = d();
      else if (key == "u_low_th") p.u_lo_th = d();
      else if (key == "alpha") p.alpha = d();
      else if (key == "beta") p.beta = d();
      else if (key == "merge_requires_both_ok") p.merge_requires_both_ok = b();
      else throw fail("unknown key '" + key + "' in [control]");
    }
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file '" + path + "'");
  return load_scenario(in, path);
}

}  // namespace voltcoal
