#pragma once

#include <map>
#include <set>

#include "voltcoal/util.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Control parameters shared by every strategy.
// ---------------------------------------------------------------------------

struct ControlParams {
  double v_hi = 1.09;      // upper regulation limit, p.u.
  double v_lo = 0.91;      // lower regulation limit, p.u.
  double v_hi_th = 1.05;   // upper formation threshold, p.u.
  double v_lo_th = 0.95;   // lower formation threshold, p.u.
  double v_ref = 1.00;     // reference voltage, p.u.
  double eps_u = 0.02;     // ratio gap tolerated when re-joining coalitions
  double u_hi_th = 0.90;   // neighbor ratio that invites a switch
  double u_lo_th = 0.70;   // own ratio that permits a switch
  double alpha = 20.0;     // dual ascent gain
  double beta = 0.10;      // apparent-power margin over rated active power
  bool merge_requires_both_ok = true;  // false: one-sided health check only

  void validate() const {
    if (!(v_lo < v_lo_th && v_lo_th < v_ref && v_ref < v_hi_th && v_hi_th < v_hi))
      throw Error("voltage parameters must satisfy v_lo < v_lo_th < v_ref < v_hi_th < v_hi");
    if (!(eps_u > 0.0) || !(alpha > 0.0) || !(beta >= 0.0))
      throw Error("eps_u and alpha must be positive, beta non-negative");
    if (!(u_lo_th > 0.0 && u_lo_th < u_hi_th && u_hi_th <= 1.0))
      throw Error("ratio gates must satisfy 0 < u_lo_th < u_hi_th <= 1");
  }
};

enum class Role { follower, leader };

// ---------------------------------------------------------------------------
// Per-inverter state.  Power quantities are physical (kW / kvar); voltages
// are p.u.  `active` holds the coalition edges this agent currently honors;
// the severed set is its complement within the comm-tree neighbor list.
// ---------------------------------------------------------------------------

struct InverterState {
  int id = -1;                  // bus id the inverter sits on
  double p_rated_kw = 0.0;
  double s_rated_kva = 0.0;     // derived: (1 + beta) * p_rated_kw
  double p_out_kw = 0.0;
  double q_max_kvar = 0.0;      // reactive headroom at current p_out
  double q_out_kvar = 0.0;
  double u = 0.0;               // utilization ratio (may exceed [-1,1]; output clips)
  double lambda_hi = 0.0;       // dual for the upper limit
  double lambda_lo = 0.0;       // dual for the lower limit
  Role role = Role::follower;
  double v_now = 1.0;           // instantaneous local voltage, p.u.
  double v_avg = 1.0;           // moving-average local voltage, p.u.
  std::vector<int> neighbors;   // comm-tree neighbors, ascending
  std::set<int> active;         // currently active coalition edges

  std::vector<int> severed_edges() const {
    std::vector<int> out;
    for (int n : neighbors)
      if (!active.count(n)) out.push_back(n);
    return out;
  }
};

// Consensus scratch state for the two windows around a coalition update.
struct CoalitionView {
  double v_max_est = 0.0;
  double v_min_est = 0.0;
  bool coalition_ok = false;
  double dv_est = 0.0;     // |v_avg - v_ref| max-consensus iterate
  int dv_arg_id = -1;      // node attaining dv_est (ties -> smallest id)
};

// ---------------------------------------------------------------------------
// Capacity and output (inverter ratings).
// ---------------------------------------------------------------------------

// Update s_rated and the reactive headroom for the current active output.
// Returns false when p_out exceeds the apparent rating (headroom clamps to
// zero); callers should log that as an over-generation warning.
inline bool q_capacity(InverterState& st, const ControlParams& p) {
  st.s_rated_kva = (1.0 + p.beta) * st.p_rated_kw;
  const bool over = st.p_out_kw > st.s_rated_kva;
  const double pe = over ? st.s_rated_kva : st.p_out_kw;
  st.q_max_kvar = std::sqrt(std::max(0.0, st.s_rated_kva * st.s_rated_kva - pe * pe));
  return !over;
}

inline double clip_unit(double u) { return std::clamp(u, -1.0, 1.0); }

inline double reactive_output(InverterState& st) {
  st.q_out_kvar = clip_unit(st.u) * st.q_max_kvar;
  return st.q_out_kvar;
}

// ---------------------------------------------------------------------------
// Leader feedback (one inverter per coalition drives the worst voltage back
// inside [v_lo, v_hi]).  The ratio update uses the iteration-k duals first;
// both duals then integrate the instantaneous local voltage and project onto
// the non-negative orthant.  Inside the dead band both duals drain to exact
// zero, taking the ratio with them.
// ---------------------------------------------------------------------------

inline void leader_step(InverterState& st, const ControlParams& p, double v_now) {
  const double u_next = st.lambda_lo - st.lambda_hi;
  st.lambda_hi = std::max(0.0, st.lambda_hi + p.alpha * (v_now - p.v_hi));
  st.lambda_lo = std::max(0.0, st.lambda_lo + p.alpha * (p.v_lo - v_now));
  st.u = u_next;
}

// Followers average their ratio with every ratio heard over active edges
// this tick; hearing nothing leaves the ratio unchanged.
inline void follower_step(InverterState& st, const std::vector<double>& received_us) {
  if (received_us.empty()) return;
  double sum = st.u;
  for (double v : received_us) sum += v;
  st.u = sum / (1.0 + static_cast<double>(received_us.size()));
}

// ---------------------------------------------------------------------------
// Assessment window: max/min consensus over moving-average voltages.  Each
// step folds in the agent's own current average (so the sandwich property
// v_min_est <= v_avg <= v_max_est holds even while v_avg drifts) plus any
// estimates received over active edges.
// ---------------------------------------------------------------------------

inline void start_assessment(CoalitionView& view, const InverterState& st) {
  view.v_max_est = st.v_avg;
  view.v_min_est = st.v_avg;
}

inline void assess_step(CoalitionView& view, const InverterState& st,
                        const std::vector<std::pair<double, double>>& received_max_min) {
  view.v_max_est = std::max(view.v_max_est, st.v_avg);
  view.v_min_est = std::min(view.v_min_est, st.v_avg);
  for (auto [mx, mn] : received_max_min) {
    view.v_max_est = std::max(view.v_max_est, mx);
    view.v_min_est = std::min(view.v_min_est, mn);
  }
}

inline void finalize_assessment(CoalitionView& view, const ControlParams& p) {
  view.coalition_ok = view.v_max_est <= p.v_hi_th && view.v_min_est >= p.v_lo_th;
}

// ---------------------------------------------------------------------------
// Election window: max-consensus on the deviation |v_avg - v_ref| with ties
// broken toward the smallest id.  The own deviation is sampled once at window
// start so every member converges to the same (deviation, id) pair.
// ---------------------------------------------------------------------------

inline bool deviation_wins(double dv_a, int id_a, double dv_b, int id_b) {
  return dv_a > dv_b || (dv_a == dv_b && id_a < id_b);
}

inline void start_election(CoalitionView& view, const InverterState& st,
                           const ControlParams& p) {
  view.dv_est = std::fabs(st.v_avg - p.v_ref);
  view.dv_arg_id = st.id;
}

inline void election_step(CoalitionView& view,
                          const std::vector<std::pair<double, int>>& received_dv) {
  for (auto [dv, id] : received_dv)
    if (deviation_wins(dv, id, view.dv_est, view.dv_arg_id)) {
      view.dv_est = dv;
      view.dv_arg_id = id;
    }
}

// Finalize the election: the agent leads iff the converged argmax is itself.
// A newly promoted leader re-seeds its duals from the current ratio so its
// first update is bumpless; a demoted leader's duals are simply unused.
inline Role elect_leader(InverterState& st, const CoalitionView& view) {
  const Role new_role = view.dv_arg_id == st.id ? Role::leader : Role::follower;
  if (new_role == Role::leader && st.role != Role::leader) {
    st.lambda_lo = std::max(0.0, st.u);
    st.lambda_hi = std::max(0.0, -st.u);
  }
  st.role = new_role;
  return new_role;
}

// ---------------------------------------------------------------------------
// Coalition update decision.  Evaluated once per coalition cycle by every
// agent from its own converged view plus the freshest data heard from each
// comm neighbor.  Precedence: divide > merge > switch > none, one decision
// kind per agent per cycle.  A divide names every active neighbor on the
// other side of v_ref; the far endpoints reach the same conclusion from the
// same exchanged data, and the topology applies severances bilaterally.
// ---------------------------------------------------------------------------

struct NeighborInfo {
  bool fresh = false;       // heard from this cycle
  double v_avg = 0.0;
  double u = 0.0;
  bool coalition_ok = false;
};

enum class ActionKind { none, divide, merge, switch_coalition };

struct Action {
  ActionKind kind = ActionKind::none;
  std::vector<int> divide_edges;  // far endpoints to sever (divide)
  int join = -1;                  // far endpoint to activate (merge / switch)
  int detach = -1;                // active neighbor to leave (switch)
};

inline Action decide_coalition_action(const InverterState& st, const CoalitionView& view,
                                      const std::map<int, NeighborInfo>& info,
                                      const ControlParams& p) {
  Action act;

  // Divide: the coalition straddles both thresholds and an active neighbor
  // sits strictly on the other side of the reference.
  if (view.v_max_est > p.v_hi_th && view.v_min_est < p.v_lo_th) {
    for (int j : st.neighbors) {
      if (!st.active.count(j)) continue;
      auto it = info.find(j);
      if (it == info.end() || !it->second.fresh) continue;
      if ((st.v_avg - p.v_ref) * (it->second.v_avg - p.v_ref) < 0.0)
        act.divide_edges.push_back(j);
    }
    if (!act.divide_edges.empty()) {
      act.kind = ActionKind::divide;
      return act;
    }
  }

  // Merge: both sides healthy and already running at matching ratios.
  if (view.coalition_ok) {
    for (int j : st.neighbors) {
      if (st.active.count(j)) continue;
      auto it = info.find(j);
      if (it == info.end() || !it->second.fresh) continue;
      if (p.merge_requires_both_ok && !it->second.coalition_ok) continue;
      if (std::fabs(st.u - it->second.u) < p.eps_u) {
        act.kind = ActionKind::merge;
        act.join = j;
        return act;
      }
    }
  }

  // Switch: a lightly used inverter with healthy local voltage moves next to
  // a saturated neighbor coalition.  Limited to comm degree <= 2, which
  // leaves exactly one active neighbor to detach from.
  if (st.neighbors.size() <= 2 && std::fabs(st.u) < p.u_lo_th &&
      st.v_avg >= p.v_lo_th && st.v_avg <= p.v_hi_th) {
    int attach = -1;
    for (int j : st.neighbors) {
      if (st.active.count(j)) continue;
      auto it = info.find(j);
      if (it == info.end() || !it->second.fresh) continue;
      if (std::fabs(it->second.u) > p.u_hi_th) { attach = j; break; }
    }
    if (attach >= 0 && st.active.size() == 1) {
      act.kind = ActionKind::switch_coalition;
      act.join = attach;
      act.detach = *st.active.begin();
      return act;
    }
  }

  return act;
}

// ---------------------------------------------------------------------------
// Topology bookkeeping shared by the engine and the tests: bilateral action
// application and partition queries over a set of agents.
// ---------------------------------------------------------------------------

struct TopologyEvent {
  enum Kind { divide, merge, switch_from, silence } kind;
  int a = -1, b = -1;
};

namespace detail {
class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n), rank_(n, 0) {
    for (size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  size_t find(size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<size_t> parent_;
  std::vector<size_t> rank_;
};
}  // namespace detail

using AgentMap = std::map<int, InverterState>;

inline void sever_edge(AgentMap& agents, int a, int b) {
  agents.at(a).active.erase(b);
  agents.at(b).active.erase(a);
}

inline void activate_edge(AgentMap& agents, int a, int b) {
  agents.at(a).active.insert(b);
  agents.at(b).active.insert(a);
}

// Apply one cycle's worth of decisions: all divides, then merges, then
// switches, each bilateral, in ascending proposer order.  Merges that would
// close a cycle (cannot happen when the comm graph is a tree; guarded anyway)
// are skipped.  Returns the applied topology events.
inline std::vector<TopologyEvent> apply_actions(AgentMap& agents,
                                                const std::map<int, Action>& actions) {
  std::vector<TopologyEvent> events;
  std::set<std::pair<int, int>> severed;
  for (const auto& [id, act] : actions) {
    if (act.kind != ActionKind::divide) continue;
    for (int j : act.divide_edges) {
      auto key = std::minmax(id, j);
      if (!severed.insert({key.first, key.second}).second) continue;
      sever_edge(agents, id, j);
      events.push_back({TopologyEvent::divide, key.first, key.second});
    }
  }

  // Component structure for the cycle guard on merges.
  std::map<int, size_t> slot;
  for (const auto& [id, _] : agents) slot.emplace(id, slot.size());
  detail::UnionFind uf(slot.size());
  for (const auto& [id, st] : agents)
    for (int j : st.active)
      if (id < j) uf.unite(slot.at(id), slot.at(j));

  for (const auto& [id, act] : actions) {
    if (act.kind != ActionKind::merge) continue;
    if (agents.at(id).active.count(act.join)) continue;  // already applied
    if (!uf.unite(slot.at(id), slot.at(act.join)))
      continue;  // would close a cycle
    activate_edge(agents, id, act.join);
    auto key = std::minmax(id, act.join);
    events.push_back({TopologyEvent::merge, key.first, key.second});
  }

  for (const auto& [id, act] : actions) {
    if (act.kind != ActionKind::switch_coalition) continue;
    InverterState& st = agents.at(id);
    if (!st.active.count(act.detach) || st.active.count(act.join)) continue;
    sever_edge(agents, id, act.detach);
    activate_edge(agents, id, act.join);
    events.push_back({TopologyEvent::switch_from, id, act.join});
  }
  return events;
}

// Connected components of the active-edge subgraph, each sorted ascending;
// components ordered by smallest member.  The smallest member doubles as the
// coalition id in every output.
inline std::vector<std::vector<int>> coalition_components(const AgentMap& agents) {
  std::map<int, size_t> slot;
  for (const auto& [id, _] : agents) slot.emplace(id, slot.size());
  detail::UnionFind uf(slot.size());
  for (const auto& [id, st] : agents)
    for (int j : st.active)
      if (id < j) uf.unite(slot.at(id), slot.at(j));
  std::map<size_t, std::vector<int>> groups;
  for (const auto& [id, _] : agents) groups[uf.find(slot.at(id))].push_back(id);
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (auto& [_, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

// Structural invariants: the active relation is symmetric, every active edge
// is a comm edge, and each component induces a tree.
inline void validate_topology(const AgentMap& agents) {
  size_t active_edges = 0;
  for (const auto& [id, st] : agents) {
    for (int j : st.active) {
      const InverterState& other = agents.at(j);
      if (!other.active.count(id))
        throw Error(strfmt("active edge %d-%d is not symmetric", id, j));
      if (!std::binary_search(st.neighbors.begin(), st.neighbors.end(), j))
        throw Error(strfmt("active edge %d-%d is not a comm edge", id, j));
      if (id < j) ++active_edges;
    }
  }
  const size_t components = coalition_components(agents).size();
  if (active_edges + components != agents.size())
    throw Error("active subgraph contains a cycle");
}

}  // namespace voltcoal
