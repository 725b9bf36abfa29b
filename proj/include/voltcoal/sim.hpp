#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "voltcoal/agents.hpp"
#include "voltcoal/baselines.hpp"
#include "voltcoal/comms.hpp"
#include "voltcoal/grid.hpp"
#include "voltcoal/netfile.hpp"
#include "voltcoal/profiles.hpp"
#include "voltcoal/scenario.hpp"
#include "voltcoal/util.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Run results and metrics.
// ---------------------------------------------------------------------------

struct Metrics {
  double lower_violation_min = 0.0;  // minutes any bus sits below the lower limit
  double upper_violation_min = 0.0;  // minutes any bus sits above the upper limit
  double max_u_spread = 0.0;         // peak within-coalition max-min ratio gap
  double saturation_min = 0.0;       // minutes any inverter is pinned while a violation is active
};

struct EventRecord {
  double time_s = 0.0;
  std::string kind;  // divide | merge | switch | silence | election | zone_update | overgen
  int a = -1;
  int b = -1;
};

struct TimeSeriesResult {
  double tick_s = 0.2;
  double record_every_s = 0.0;
  ControlParams params;
  std::vector<int> bus_ids;
  std::vector<int> inverter_ids;
  std::vector<double> times;                    // wall-clock seconds per sample
  std::vector<std::vector<double>> voltages;    // [sample][bus] p.u.
  std::vector<std::vector<double>> ratios;      // [sample][inverter] utilization
  std::vector<std::vector<int>> roles;          // [sample][inverter] 0 follower, 1 leader
  std::vector<std::vector<int>> coalition_ids;  // [sample][inverter] smallest member id
  std::vector<EventRecord> events;
  Metrics metrics;  // accumulated every tick during the run
};

// Recompute metrics from the recorded samples (each sample weighted by the
// recording cadence).  Equals the run-accumulated metrics exactly when
// record_every_s == tick_s; at coarser cadences it is the sampled estimate.
inline Metrics compute_metrics(const TimeSeriesResult& r) {
  Metrics m;
  if (r.times.empty()) return m;
  const double w_min = (r.record_every_s > 0 ? r.record_every_s : r.tick_s) / 60.0;
  for (size_t s = 0; s < r.times.size(); ++s) {
    bool lower = false, upper = false;
    for (double v : r.voltages[s]) {
      lower = lower || v < r.params.v_lo;
      upper = upper || v > r.params.v_hi;
    }
    if (lower) m.lower_violation_min += w_min;
    if (upper) m.upper_violation_min += w_min;

    bool pinned = false;
    std::map<int, std::pair<double, double>> range;  // coalition -> (min u, max u)
    for (size_t k = 0; k < r.inverter_ids.size(); ++k) {
      const double u = r.ratios[s][k];
      pinned = pinned || std::fabs(u) >= 1.0;
      auto [it, fresh] = range.try_emplace(r.coalition_ids[s][k], u, u);
      if (!fresh) {
        it->second.first = std::min(it->second.first, u);
        it->second.second = std::max(it->second.second, u);
      }
    }
    if (pinned && (lower || upper)) m.saturation_min += w_min;
    for (const auto& [cid, mm] : range)
      m.max_u_spread = std::max(m.max_u_spread, mm.second - mm.first);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scenario setup: the config resolved into concrete model objects.
// ---------------------------------------------------------------------------

struct ScenarioSetup {
  NetworkModel net;
  std::vector<int> inverter_buses;
  std::vector<Profile> load_profiles;  // by bus index; empty => no load
  std::vector<Profile> pv_profiles;    // by bus index; empty => no PV
  std::vector<double> load_p_scale;    // kW multiplier applied to the load profile
  std::vector<double> load_q_scale;    // kvar multiplier (same shape as the load)
  std::vector<double> pv_scale;        // kW multiplier applied to the PV profile
  CommGraph graph;
  std::vector<LinkFault> faults;
};

namespace detail {

constexpr std::uint64_t kNetStream = 0x6e6574ULL;
constexpr std::uint64_t kFaultStream = 0x66617573ULL;
constexpr std::uint64_t kLoadProfileStream = 0x10000ULL;
constexpr std::uint64_t kPvProfileStream = 0x20000ULL;
constexpr double kDefaultQPerP = 0.33;

}  // namespace detail

inline ScenarioSetup build_setup(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioSetup s;

  std::set<int> commercial;
  if (cfg.generate_network_flag) {
    GeneratedFeeder gen = generate_network(cfg.netgen, derive_seed(cfg.seed, detail::kNetStream));
    s.net = std::move(gen.net);
    s.inverter_buses = std::move(gen.inverter_buses);
    commercial.insert(gen.commercial_buses.begin(), gen.commercial_buses.end());
  } else {
    s.net = load_network_file(cfg.network_file);
    s.inverter_buses = pv_bus_ids(s.net);
    commercial.insert(cfg.commercial_buses.begin(), cfg.commercial_buses.end());
  }
  if (s.inverter_buses.empty() && cfg.strategy != Strategy::local)
    throw Error("scenario has no inverters to coordinate");

  const size_t n = s.net.buses.size();
  s.load_profiles.resize(n);
  s.pv_profiles.resize(n);
  s.load_p_scale.assign(n, 0.0);
  s.load_q_scale.assign(n, 0.0);
  s.pv_scale.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const Bus& b = s.net.buses[i];
    if (b.load_p_kw > 0) {
      if (cfg.profiles_generated) {
        ProfileKind kind = commercial.count(b.id) ? ProfileKind::commercial_load
                                                  : ProfileKind::residential_load;
        s.load_profiles[i] = generate_profile(
            kind, cfg.profile_resolution_s,
            derive_seed(cfg.seed, detail::kLoadProfileStream + static_cast<std::uint64_t>(b.id)));
        s.load_p_scale[i] = b.load_p_kw;
        s.load_q_scale[i] = b.load_q_kvar;
      } else {
        s.load_profiles[i] =
            load_profile_csv_file(cfg.profiles_dir + "/load_" + std::to_string(b.id) + ".csv");
        s.load_p_scale[i] = 1.0;
        s.load_q_scale[i] =
            b.load_p_kw > 0 ? b.load_q_kvar / b.load_p_kw : detail::kDefaultQPerP;
      }
    }
    if (b.pv_p_kw > 0) {
      if (cfg.profiles_generated) {
        s.pv_profiles[i] = generate_profile(
            ProfileKind::pv, cfg.profile_resolution_s,
            derive_seed(cfg.seed, detail::kPvProfileStream + static_cast<std::uint64_t>(b.id)));
        s.pv_scale[i] = b.pv_p_kw;
      } else {
        s.pv_profiles[i] =
            load_profile_csv_file(cfg.profiles_dir + "/pv_" + std::to_string(b.id) + ".csv");
        s.pv_scale[i] = 1.0;
      }
    }
  }

  if (!s.inverter_buses.empty()) s.graph = comm_graph_from_network(s.net, s.inverter_buses);

  if (cfg.faults_enabled && !s.inverter_buses.empty()) {
    if (!cfg.fault_file.empty()) {
      s.faults = load_fault_schedule_file(cfg.fault_file, cfg.tick_s);
    } else {
      Rng rng(derive_seed(cfg.seed, detail::kFaultStream));
      const auto ticks_per_hour = static_cast<std::int64_t>(std::llround(3600.0 / cfg.tick_s));
      const auto fault_ticks =
          static_cast<std::int64_t>(std::llround(cfg.fault_duration_s / cfg.tick_s));
      s.faults = generate_fault_schedule(s.graph, cfg.total_ticks(), ticks_per_hour,
                                         cfg.fault_fraction, fault_ticks, rng);
    }
  }
  return s;
}

// Base complex injections (loads and PV active power, no inverter reactive
// output) at a wall-clock time, p.u., indexed like net.buses.
inline std::vector<cplx> base_injections_at(const ScenarioSetup& s, double wall_s) {
  std::vector<cplx> inj(s.net.buses.size(), cplx(0.0, 0.0));
  for (size_t i = 0; i < inj.size(); ++i) {
    double p = 0.0, q = 0.0;
    if (!s.load_profiles[i].values.empty()) {
      const double shape = s.load_profiles[i].at(wall_s);
      p -= s.load_p_scale[i] * shape;
      q -= s.load_q_scale[i] * shape;
    }
    if (!s.pv_profiles[i].values.empty()) p += s.pv_scale[i] * s.pv_profiles[i].at(wall_s);
    inj[i] = cplx(p / s.net.s_base_kva, q / s.net.s_base_kva);
  }
  return inj;
}

// ---------------------------------------------------------------------------
// Simulation: the per-tick loop.
//
// Tick order: evaluate demand -> solve power flow with the reactive outputs
// chosen last tick -> update measurements and moving averages -> deliver
// messages -> run the strategy's control step -> accumulate metrics/record ->
// send this tick's messages.  Control computed at tick k therefore actuates
// at tick k+1, a plain sampled feedback loop.
// ---------------------------------------------------------------------------

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg)
      : cfg_(cfg), setup_(build_setup(cfg)), engine_(setup_.net) {
    total_ticks_ = cfg_.total_ticks();
    period_ticks_ = cfg_.period_ticks();
    assess_ticks_ = std::min<std::int64_t>(300, period_ticks_ / 2);
    elect_ticks_ = std::min<std::int64_t>(
        300, std::max<std::int64_t>(2, period_ticks_ / 2 - cfg_.latency_ticks - 1));
    if (elect_ticks_ <= cfg_.latency_ticks)
      throw Error("election window shorter than the message latency");
    avg_ticks_ = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(cfg_.avg_window_s / cfg_.tick_s)));
    record_ticks_ = cfg_.record_every_s > 0
                        ? std::max<std::int64_t>(
                              1, static_cast<std::int64_t>(
                                     std::llround(cfg_.record_every_s / cfg_.tick_s)))
                        : 0;
    if (cfg_.freeze_at_s >= 0) {
      freeze_from_tick_ = static_cast<std::int64_t>(
          std::llround((cfg_.freeze_at_s - cfg_.start_time_s) / cfg_.tick_s));
      freeze_until_tick_ = cfg_.freeze_for_s > 0
                               ? freeze_from_tick_ + static_cast<std::int64_t>(std::llround(
                                                         cfg_.freeze_for_s / cfg_.tick_s))
                               : std::numeric_limits<std::int64_t>::max();
    }

    for (size_t i = 0; i < setup_.net.buses.size(); ++i) bus_index_[setup_.net.buses[i].id] = i;

    for (int id : setup_.inverter_buses) {
      InverterState st;
      st.id = id;
      st.p_rated_kw = setup_.net.buses[static_cast<size_t>(setup_.net.index_of(id))].pv_p_kw;
      st.neighbors = setup_.graph.neighbors(id);
      st.active.insert(st.neighbors.begin(), st.neighbors.end());
      if (cfg_.strategy == Strategy::local) st.role = Role::leader;
      agents_.emplace(id, std::move(st));
      views_.emplace(id, CoalitionView{});
      MovingAverage ma;
      ma.buf.assign(static_cast<size_t>(avg_ticks_), 0.0);
      averages_.emplace(id, std::move(ma));
    }

    result_.tick_s = cfg_.tick_s;
    result_.record_every_s = cfg_.record_every_s;
    result_.params = cfg_.params;
    for (const Bus& b : setup_.net.buses) result_.bus_ids.push_back(b.id);
    result_.inverter_ids = setup_.inverter_buses;

    if (cfg_.strategy == Strategy::centralized) central_reset_single_zone();
  }

  std::int64_t tick() const { return tick_; }
  std::int64_t total_ticks() const { return total_ticks_; }
  double time_s() const { return cfg_.start_time_s + static_cast<double>(tick_) * cfg_.tick_s; }
  bool frozen() const { return frozen_at(tick_); }
  const ScenarioConfig& config() const { return cfg_; }
  const ScenarioSetup& setup() const { return setup_; }
  const AgentMap& agents() const { return agents_; }
  const CommGraph& graph() const { return setup_.graph; }
  const PowerFlowSolution& solution() const { return sol_; }
  const TimeSeriesResult& result() const { return result_; }
  std::vector<std::vector<int>> coalitions() const { return partition(); }

  void step() {
    const std::int64_t t = tick_;
    const double wall = time_s();
    const bool frz = frozen_at(t);
    const double eff = frz ? cfg_.freeze_at_s : wall;

    // Demand, generation and capacity at this instant.
    std::vector<cplx> inj = base_injections_at(setup_, eff);
    for (auto& [id, st] : agents_) {
      const size_t bi = bus_index_.at(id);
      st.p_out_kw = setup_.pv_profiles[bi].values.empty()
                        ? 0.0
                        : setup_.pv_scale[bi] * setup_.pv_profiles[bi].at(eff);
      const bool ok = q_capacity(st, cfg_.params);
      if (!ok && !overgen_.count(id)) {
        overgen_.insert(id);
        result_.events.push_back({wall, "overgen", id, -1});
      } else if (ok) {
        overgen_.erase(id);
      }
      inj[bi] += cplx(0.0, reactive_output(st) / setup_.net.s_base_kva);
    }

    sol_ = engine_.solve(inj, cfg_.slack.at(eff), /*warm=*/t > 0);
    if (!sol_.converged)
      throw Error(strfmt("power flow failed to converge at tick %lld (t=%.1f s): mismatch %.3e",
                         static_cast<long long>(t), wall, sol_.mismatch));

    for (auto& [id, st] : agents_) {
      st.v_now = sol_.v_mag[bus_index_.at(id)];
      MovingAverage& ma = averages_.at(id);
      if (ma.count == static_cast<std::int64_t>(ma.buf.size())) {
        ma.sum -= ma.buf[ma.head];
      } else {
        ++ma.count;
      }
      ma.buf[ma.head] = st.v_now;
      ma.sum += st.v_now;
      ma.head = (ma.head + 1) % ma.buf.size();
      st.v_avg = ma.sum / static_cast<double>(ma.count);
    }

    switch (cfg_.strategy) {
      case Strategy::proposed: proposed_step(t, wall, frz); break;
      case Strategy::local:
        for (auto& [id, st] : agents_) local_control_step(st, cfg_.params);
        break;
      case Strategy::centralized: central_step(t, wall, frz); break;
    }

    accumulate_metrics();
    if (record_ticks_ > 0 && t % record_ticks_ == 0) record_sample(wall);

    send_phase(t);
    ++tick_;
  }

  TimeSeriesResult run() {
    while (tick_ < total_ticks_) step();
    return std::move(result_);
  }

 private:
  struct MovingAverage {
    std::vector<double> buf;
    size_t head = 0;
    std::int64_t count = 0;
    double sum = 0.0;
  };

  bool frozen_at(std::int64_t t) const {
    return freeze_from_tick_ >= 0 && t >= freeze_from_tick_ && t < freeze_until_tick_;
  }

  const std::vector<LinkFault>& active_faults() const {
    static const std::vector<LinkFault> none;
    return cfg_.strategy == Strategy::proposed ? setup_.faults : none;
  }

  std::vector<std::vector<int>> partition() const {
    if (cfg_.strategy == Strategy::local) {
      std::vector<std::vector<int>> out;
      for (const auto& [id, _] : agents_) out.push_back({id});
      return out;
    }
    if (cfg_.strategy == Strategy::centralized) return zones_;
    return coalition_components(agents_);
  }

  // ---- proposed-protocol machinery -------------------------------------

  void proposed_step(std::int64_t t, double wall, bool frz) {
    // Bucket this tick's deliveries.
    std::vector<Envelope> delivered =
        deliver_round(setup_.graph, active_faults(), pending_, t, cfg_.latency_ticks);
    std::map<int, std::vector<const Envelope*>> inbox;
    for (const Envelope& e : delivered) {
      inbox[e.to].push_back(&e);
      last_rx_[e.to][e.from] = t;
    }

    // Consensus on the utilization ratio, every tick.
    for (auto& [id, st] : agents_) {
      if (st.role == Role::leader) {
        leader_step(st, cfg_.params, st.v_now);
        continue;
      }
      std::vector<double> us;
      auto it = inbox.find(id);
      if (it != inbox.end())
        for (const Envelope* e : it->second)
          if (st.active.count(e->from)) us.push_back(e->payload.u);
      follower_step(st, us);
    }

    if (frz || period_ticks_ <= 0) return;

    const std::int64_t pos = t % period_ticks_;

    // Assessment window: the last assess_ticks_ of each cycle.
    if (t > 0 && pos == period_ticks_ - assess_ticks_) {
      assess_window_start_ = t;
      for (auto& [id, st] : agents_) start_assessment(views_.at(id), st);
    }
    if (t > 0 && pos >= period_ticks_ - assess_ticks_) {
      for (auto& [id, st] : agents_) {
        std::vector<std::pair<double, double>> received;
        auto it = inbox.find(id);
        if (it != inbox.end())
          for (const Envelope* e : it->second)
            if (st.active.count(e->from) && e->sent_tick >= assess_window_start_)
              received.emplace_back(e->payload.v_max_est, e->payload.v_min_est);
        assess_step(views_.at(id), st, received);
      }
    }

    if (t > 0 && pos == 0) {
      for (auto& [id, view] : views_) finalize_assessment(view, cfg_.params);
      boundary_tick_ = t;
      decision_tick_ = t + cfg_.latency_ticks;
    }

    if (t == decision_tick_) {
      run_decisions(t, wall, inbox);
      start_elections(t);
    }

    if (election_end_tick_ >= 0 && t > election_start_tick_ && t <= election_end_tick_) {
      for (auto& [id, st] : agents_) {
        std::vector<std::pair<double, int>> received;
        auto it = inbox.find(id);
        if (it != inbox.end())
          for (const Envelope* e : it->second)
            if (st.active.count(e->from) && e->sent_tick >= election_start_tick_)
              received.emplace_back(e->payload.dv_est, e->payload.dv_arg_id);
        election_step(views_.at(id), received);
      }
      if (t == election_end_tick_) conclude_elections(wall);
    }

    if (t == 0) start_elections(0);
  }

  void run_decisions(std::int64_t t, double wall,
                     const std::map<int, std::vector<const Envelope*>>& inbox) {
    // Silence handling first: an active edge with no delivery during the
    // whole assessment window (plus the decision latency) is treated as dead
    // and severed, so a faulted coalition cannot linger half-partitioned.
    const std::int64_t silence_before = boundary_tick_ - assess_ticks_;
    std::set<std::pair<int, int>> dead;
    for (auto& [id, st] : agents_)
      for (int nb : st.active) {
        auto jt = last_rx_[id].find(nb);
        const std::int64_t last = jt == last_rx_[id].end() ? -1 : jt->second;
        if (last < silence_before) dead.insert({std::min(id, nb), std::max(id, nb)});
      }
    for (auto [a, b] : dead) {
      sever_edge(agents_, a, b);
      result_.events.push_back({wall, "silence", a, b});
    }

    // Coalition decisions from the freshest neighbor data (sent at the cycle
    // boundary, arriving exactly now).
    std::map<int, Action> actions;
    for (auto& [id, st] : agents_) {
      std::map<int, NeighborInfo> info;
      auto it = inbox.find(id);
      if (it != inbox.end())
        for (const Envelope* e : it->second) {
          NeighborInfo ni;
          ni.fresh = e->sent_tick == boundary_tick_;
          ni.v_avg = e->payload.v_avg;
          ni.u = e->payload.u;
          ni.coalition_ok = e->payload.coalition_ok;
          info[e->from] = ni;
        }
      Action act = decide_coalition_action(st, views_.at(id), info, cfg_.params);
      if (act.kind != ActionKind::none) actions.emplace(id, std::move(act));
    }
    for (const TopologyEvent& ev : apply_actions(agents_, actions)) {
      const char* kind = ev.kind == TopologyEvent::divide   ? "divide"
                         : ev.kind == TopologyEvent::merge  ? "merge"
                         : ev.kind == TopologyEvent::silence ? "silence"
                                                              : "switch";
      result_.events.push_back({wall, kind, ev.a, ev.b});
    }
    validate_topology(agents_);
  }

  void start_elections(std::int64_t t) {
    for (auto& [id, st] : agents_) start_election(views_.at(id), st, cfg_.params);
    election_start_tick_ = t;
    election_end_tick_ = t + elect_ticks_;
  }

  void conclude_elections(double wall) {
    for (auto& [id, st] : agents_) elect_leader(st, views_.at(id));
    for (const auto& comp : coalition_components(agents_))
      for (int id : comp)
        if (agents_.at(id).role == Role::leader)
          result_.events.push_back({wall, "election", id, comp.front()});
    election_end_tick_ = -1;
  }

  // ---- centralized baseline machinery -----------------------------------

  void central_reset_single_zone() {
    zones_.clear();
    std::vector<int> all;
    for (const auto& [id, _] : agents_) all.push_back(id);
    if (all.empty()) return;
    zones_.push_back(all);
    zone_edges_.clear();
    for (auto [a, b] : setup_.graph.edges()) zone_edges_.insert({std::min(a, b), std::max(a, b)});
    rebuild_zone_index();
  }

  void rebuild_zone_index() {
    zone_of_.clear();
    for (size_t z = 0; z < zones_.size(); ++z)
      for (int id : zones_[z]) zone_of_[id] = z;
    zone_adj_.clear();
    for (auto [a, b] : zone_edges_) {
      zone_adj_[a].push_back(b);
      zone_adj_[b].push_back(a);
    }
  }

  void central_step(std::int64_t t, double wall, bool frz) {
    // Deliveries over the current zone graph.
    std::vector<Envelope> delivered;
    {
      std::vector<Envelope> keep;
      keep.reserve(pending_.size());
      for (Envelope& e : pending_) {
        const std::int64_t due = e.sent_tick + cfg_.latency_ticks;
        if (due > t) {
          keep.push_back(e);
        } else if (due == t &&
                   zone_edges_.count({std::min(e.from, e.to), std::max(e.from, e.to)})) {
          delivered.push_back(e);
        }
      }
      pending_.swap(keep);
    }

    if (!frz && period_ticks_ > 0 && t % period_ticks_ == 0) central_update_zones(wall);

    std::map<int, std::vector<double>> heard;
    for (const Envelope& e : delivered)
      if (zone_of_.count(e.from) && zone_of_.count(e.to) &&
          zone_of_.at(e.from) == zone_of_.at(e.to))
        heard[e.to].push_back(e.payload.u);
    for (auto& [id, st] : agents_) {
      if (st.role == Role::leader) {
        leader_step(st, cfg_.params, st.v_now);
      } else {
        auto it = heard.find(id);
        follower_step(st, it == heard.end() ? std::vector<double>{} : it->second);
      }
    }
  }

  void central_update_zones(double wall) {
    std::vector<int> over, under;
    for (const auto& [id, st] : agents_) {
      if (st.v_avg > cfg_.params.v_hi_th) over.push_back(id);
      if (st.v_avg < cfg_.params.v_lo_th) under.push_back(id);
    }

    if (!over.empty() && !under.empty()) {
      bool rebuilt = false;
      try {
        Matrix a = full_vq_sensitivity(setup_.net, sol_, setup_.inverter_buses);
        Matrix norm = normalize_coupling(a);
        double eps;
        try {
          eps = select_epsilon(norm, setup_.inverter_buses, over, under);
        } catch (const Error&) {
          eps = 1.0;  // no separating threshold: keep only the strongest couplings
        }
        zones_ = epsilon_decompose(norm, setup_.inverter_buses, eps);
        zone_edges_.clear();
        for (size_t i = 0; i < setup_.inverter_buses.size(); ++i)
          for (size_t j = i + 1; j < setup_.inverter_buses.size(); ++j) {
            if (std::max(std::fabs(norm.at(i, j)), std::fabs(norm.at(j, i))) < eps) continue;
            zone_edges_.insert({std::min(setup_.inverter_buses[i], setup_.inverter_buses[j]),
                                std::max(setup_.inverter_buses[i], setup_.inverter_buses[j])});
          }
        rebuild_zone_index();
        rebuilt = true;
      } catch (const Error&) {
        central_reset_single_zone();  // degenerate sensitivities: one global zone
        rebuilt = true;
      }
      if (rebuilt) result_.events.push_back({wall, "zone_update", static_cast<int>(zones_.size()), -1});
    }
    // A one-sided excursion (or none at all) does not initiate a partition:
    // the zones from the last straddle stay in force until the next one.

    for (const auto& zone : zones_) {
      int best = -1;
      double best_dv = -1.0;
      for (int id : zone) {
        const double dv = std::fabs(agents_.at(id).v_avg - cfg_.params.v_ref);
        if (dv > best_dv || (dv == best_dv && id < best)) {
          best = id;
          best_dv = dv;
        }
      }
      for (int id : zone) {
        InverterState& st = agents_.at(id);
        const Role role = id == best ? Role::leader : Role::follower;
        if (role == Role::leader && st.role != Role::leader) {
          st.lambda_lo = std::max(0.0, st.u);
          st.lambda_hi = std::max(0.0, -st.u);
        }
        st.role = role;
      }
      result_.events.push_back({wall, "election", best, zone.front()});
    }
  }

  // ---- shared tail of the tick ------------------------------------------

  void send_phase(std::int64_t t) {
    if (cfg_.strategy == Strategy::local) return;
    if (cfg_.strategy == Strategy::proposed) {
      for (auto& [id, st] : agents_) {
        const CoalitionView& view = views_.at(id);
        Payload pl;
        pl.v_avg = st.v_avg;
        pl.u = st.u;
        pl.coalition_ok = view.coalition_ok;
        pl.v_max_est = view.v_max_est;
        pl.v_min_est = view.v_min_est;
        pl.dv_est = view.dv_est;
        pl.dv_arg_id = view.dv_arg_id;
        for (int nb : st.neighbors) pending_.push_back({id, nb, t, pl});
      }
      return;
    }
    for (auto& [id, st] : agents_) {
      auto it = zone_adj_.find(id);
      if (it == zone_adj_.end()) continue;
      Payload pl;
      pl.u = st.u;
      for (int nb : it->second) pending_.push_back({id, nb, t, pl});
    }
  }

  void accumulate_metrics() {
    bool lower = false, upper = false;
    for (double v : sol_.v_mag) {
      lower = lower || v < cfg_.params.v_lo;
      upper = upper || v > cfg_.params.v_hi;
    }
    const double w_min = cfg_.tick_s / 60.0;
    if (lower) result_.metrics.lower_violation_min += w_min;
    if (upper) result_.metrics.upper_violation_min += w_min;

    bool pinned = false;
    for (const auto& [id, st] : agents_) pinned = pinned || std::fabs(st.u) >= 1.0;
    if (pinned && (lower || upper)) result_.metrics.saturation_min += w_min;

    last_partition_ = partition();
    coalition_of_.clear();
    for (const auto& comp : last_partition_) {
      double lo = 0.0, hi = 0.0;
      bool first = true;
      for (int id : comp) {
        coalition_of_[id] = comp.front();
        const double u = agents_.at(id).u;
        if (first) {
          lo = hi = u;
          first = false;
        } else {
          lo = std::min(lo, u);
          hi = std::max(hi, u);
        }
      }
      result_.metrics.max_u_spread = std::max(result_.metrics.max_u_spread, hi - lo);
    }
  }

  void record_sample(double wall) {
    result_.times.push_back(wall);
    result_.voltages.push_back(sol_.v_mag);
    std::vector<double> us;
    std::vector<int> roles, cids;
    us.reserve(agents_.size());
    for (const auto& [id, st] : agents_) {
      us.push_back(st.u);
      roles.push_back(st.role == Role::leader ? 1 : 0);
      cids.push_back(coalition_of_.count(id) ? coalition_of_.at(id) : id);
    }
    result_.ratios.push_back(std::move(us));
    result_.roles.push_back(std::move(roles));
    result_.coalition_ids.push_back(std::move(cids));
  }

  ScenarioConfig cfg_;
  ScenarioSetup setup_;
  PowerFlowEngine engine_;
  std::map<int, size_t> bus_index_;

  AgentMap agents_;
  std::map<int, CoalitionView> views_;
  std::map<int, MovingAverage> averages_;
  std::map<int, std::map<int, std::int64_t>> last_rx_;
  std::set<int> overgen_;
  std::vector<Envelope> pending_;
  PowerFlowSolution sol_;

  // proposed-protocol window state
  std::int64_t assess_window_start_ = -1;
  std::int64_t boundary_tick_ = -1;
  std::int64_t decision_tick_ = -1;
  std::int64_t election_start_tick_ = -1;
  std::int64_t election_end_tick_ = -1;

  // centralized-baseline state
  std::vector<std::vector<int>> zones_;
  std::set<std::pair<int, int>> zone_edges_;
  std::map<int, size_t> zone_of_;
  std::map<int, std::vector<int>> zone_adj_;

  // per-tick caches
  std::vector<std::vector<int>> last_partition_;
  std::map<int, int> coalition_of_;

  std::int64_t tick_ = 0;
  std::int64_t total_ticks_ = 0;
  std::int64_t period_ticks_ = 0;
  std::int64_t assess_ticks_ = 0;
  std::int64_t elect_ticks_ = 0;
  std::int64_t avg_ticks_ = 1;
  std::int64_t record_ticks_ = 0;
  std::int64_t freeze_from_tick_ = -1;
  std::int64_t freeze_until_tick_ = -1;

  TimeSeriesResult result_;
};

inline TimeSeriesResult run_scenario(const ScenarioConfig& cfg) { return Simulation(cfg).run(); }

// ---------------------------------------------------------------------------
// Batch runs: n scenarios with seed-randomized feeders (20-40 inverters,
// fresh placements, capacities and profiles), all three strategies on each.
// ---------------------------------------------------------------------------

struct BatchEntry {
  std::uint64_t seed = 0;
  Metrics proposed, local, centralized;
};

struct BatchResult {
  std::vector<BatchEntry> scenarios;  // sorted by scenario seed
  Metrics mean_proposed, mean_local, mean_centralized;
};

inline ScenarioConfig batch_scenario_config(const ScenarioConfig& tmpl, std::uint64_t batch_seed,
                                            int index) {
  ScenarioConfig cfg = tmpl;
  cfg.seed = derive_seed(batch_seed, 0x6261746300ULL + static_cast<std::uint64_t>(index));
  cfg.record_every_s = 0.0;  // batches aggregate metrics; skip series recording
  if (cfg.generate_network_flag) {
    cfg.netgen.inverters = 20 + static_cast<int>(derive_seed(cfg.seed, 0x696e76ULL) % 21);
    cfg.netgen.houses = std::max(cfg.netgen.houses, cfg.netgen.inverters);
  }
  return cfg;
}

inline BatchResult run_batch(const ScenarioConfig& tmpl, int n_scenarios, std::uint64_t seed) {
  if (n_scenarios < 1) throw Error("run_batch: need at least one scenario");
  BatchResult out;
  for (int i = 0; i < n_scenarios; ++i) {
    ScenarioConfig cfg = batch_scenario_config(tmpl, seed, i);
    BatchEntry entry;
    entry.seed = cfg.seed;
    cfg.strategy = Strategy::proposed;
    entry.proposed = run_scenario(cfg).metrics;
    cfg.strategy = Strategy::local;
    entry.local = run_scenario(cfg).metrics;
    cfg.strategy = Strategy::centralized;
    entry.centralized = run_scenario(cfg).metrics;
    out.scenarios.push_back(entry);
  }
  std::sort(out.scenarios.begin(), out.scenarios.end(),
            [](const BatchEntry& a, const BatchEntry& b) { return a.seed < b.seed; });
  auto add = [](Metrics& acc, const Metrics& m, double scale) {
    acc.lower_violation_min += m.lower_violation_min * scale;
    acc.upper_violation_min += m.upper_violation_min * scale;
    acc.max_u_spread += m.max_u_spread * scale;
    acc.saturation_min += m.saturation_min * scale;
  };
  const double inv_n = 1.0 / static_cast<double>(n_scenarios);
  for (const BatchEntry& e : out.scenarios) {
    add(out.mean_proposed, e.proposed, inv_n);
    add(out.mean_local, e.local, inv_n);
    add(out.mean_centralized, e.centralized, inv_n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV / metrics writers (byte-stable for reproducibility checks).
// ---------------------------------------------------------------------------

inline void write_voltages_csv(const TimeSeriesResult& r, std::ostream& out) {
  out << "time_s,bus_id,v_pu\n";
  for (size_t s = 0; s < r.times.size(); ++s)
    for (size_t b = 0; b < r.bus_ids.size(); ++b) {
      std::string row;
      append_csv_double(row, r.times[s], 1);
      row += ',';
      row += std::to_string(r.bus_ids[b]);
      row += ',';
      append_csv_double(row, r.voltages[s][b], 9);
      out << row << '\n';
    }
}

inline void write_ratios_csv(const TimeSeriesResult& r, std::ostream& out) {
  out << "time_s,inv_id,u,role,coalition_id\n";
  for (size_t s = 0; s < r.times.size(); ++s)
    for (size_t k = 0; k < r.inverter_ids.size(); ++k) {
      std::string row;
      append_csv_double(row, r.times[s], 1);
      row += ',';
      row += std::to_string(r.inverter_ids[k]);
      row += ',';
      append_csv_double(row, r.ratios[s][k], 9);
      row += ',';
      row += std::to_string(r.roles[s][k]);
      row += ',';
      row += std::to_string(r.coalition_ids[s][k]);
      out << row << '\n';
    }
}

inline void write_events_csv(const TimeSeriesResult& r, std::ostream& out) {
  out << "time_s,kind,a,b\n";
  for (const EventRecord& e : r.events) {
    std::string row;
    append_csv_double(row, e.time_s, 1);
    row += ',';
    row += e.kind;
    row += ',';
    row += std::to_string(e.a);
    row += ',';
    row += std::to_string(e.b);
    out << row << '\n';
  }
}

inline void write_metrics_txt(const Metrics& m, std::ostream& out) {
  std::string text;
  text += "lower_violation_min=";
  append_csv_double(text, m.lower_violation_min, 6);
  text += "\nupper_violation_min=";
  append_csv_double(text, m.upper_violation_min, 6);
  text += "\nmax_u_spread=";
  append_csv_double(text, m.max_u_spread, 6);
  text += "\nsaturation_min=";
  append_csv_double(text, m.saturation_min, 6);
  text += '\n';
  out << text;
}

}  // namespace voltcoal
