#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>

#include "voltcoal/grid.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Communication layer: a static tree of inverter nodes exchanging one state
// payload per neighbor per tick, with uniform delivery latency and silent
// message loss while a link fault is active.
// ---------------------------------------------------------------------------

// Everything an agent broadcasts each tick.  Receivers filter by edge state:
// consensus fields (extreme estimates, deviation pair, ratio averaging) are
// honored only across active coalition edges, while ratio / average-voltage /
// health fields may be read from any neighbor (merge and switch rules need
// them across severed edges).
struct Payload {
  double v_avg = 0.0;        // sender's moving-average voltage, p.u.
  double u = 0.0;            // sender's utilization ratio
  bool coalition_ok = false; // sender's last coalition health flag
  double v_max_est = 0.0;    // assessment max-consensus iterate
  double v_min_est = 0.0;    // assessment min-consensus iterate
  double dv_est = 0.0;       // election max-consensus iterate (deviation)
  int dv_arg_id = -1;        // id attaining dv_est (ties resolved to smallest)
};

struct Envelope {
  int from = -1;
  int to = -1;
  std::int64_t sent_tick = 0;
  Payload payload;
};

struct LinkFault {
  int a = -1, b = -1;             // unordered edge
  std::int64_t start_tick = 0;    // inclusive
  std::int64_t end_tick = 0;      // exclusive

  bool covers(std::int64_t tick) const { return tick >= start_tick && tick < end_tick; }
  bool matches(int x, int y) const {
    return (a == x && b == y) || (a == y && b == x);
  }
};

class CommGraph {
 public:
  CommGraph() = default;
  CommGraph(std::vector<int> nodes, const std::vector<std::pair<int, int>>& edges) {
    std::sort(nodes.begin(), nodes.end());
    for (size_t i = 1; i < nodes.size(); ++i)
      if (nodes[i] == nodes[i - 1]) throw Error(strfmt("duplicate comm node %d", nodes[i]));
    for (int n : nodes) adj_[n] = {};
    for (auto [a, b] : edges) add_edge(a, b);
    validate_tree();
  }

  const std::vector<int>& neighbors(int id) const {
    auto it = adj_.find(id);
    if (it == adj_.end()) throw Error(strfmt("unknown comm node %d", id));
    return it->second;
  }

  bool has_node(int id) const { return adj_.count(id) != 0; }

  bool has_edge(int a, int b) const {
    auto it = adj_.find(a);
    if (it == adj_.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), b);
  }

  std::vector<int> nodes() const {
    std::vector<int> out;
    out.reserve(adj_.size());
    for (const auto& [id, _] : adj_) out.push_back(id);
    return out;
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& [id, nbrs] : adj_)
      for (int n : nbrs)
        if (id < n) out.emplace_back(id, n);
    return out;
  }

  size_t node_count() const { return adj_.size(); }

 private:
  void add_edge(int a, int b) {
    if (a == b) throw Error(strfmt("self edge at comm node %d", a));
    if (!adj_.count(a) || !adj_.count(b))
      throw Error(strfmt("comm edge %d-%d references unknown node", a, b));
    if (has_edge(a, b)) throw Error(strfmt("duplicate comm edge %d-%d", a, b));
    adj_[a].insert(std::lower_bound(adj_[a].begin(), adj_[a].end(), b), b);
    adj_[b].insert(std::lower_bound(adj_[b].begin(), adj_[b].end(), a), a);
  }

  void validate_tree() {
    if (adj_.empty()) return;
    size_t edge_count = 0;
    for (const auto& [_, nbrs] : adj_) edge_count += nbrs.size();
    edge_count /= 2;
    if (edge_count != adj_.size() - 1)
      throw Error(strfmt("comm graph is not a tree: %zu nodes, %zu edges", adj_.size(), edge_count));
    // connectivity by BFS from the smallest node
    std::set<int> seen;
    std::vector<int> queue{adj_.begin()->first};
    seen.insert(queue[0]);
    for (size_t h = 0; h < queue.size(); ++h)
      for (int n : adj_.at(queue[h]))
        if (seen.insert(n).second) queue.push_back(n);
    if (seen.size() != adj_.size()) throw Error("comm graph is not connected");
  }

  std::map<int, std::vector<int>> adj_;  // node -> sorted neighbor ids
};

inline const std::vector<int>& neighbors(const CommGraph& g, int id) { return g.neighbors(id); }

// ---------------------------------------------------------------------------
// Delivery: an envelope sent at tick t over edge e arrives at t + latency
// iff e exists and no fault covers the delivery tick.  Missed envelopes are
// dropped silently; nothing is ever delivered across a non-edge.
// ---------------------------------------------------------------------------

inline bool edge_faulted(const std::vector<LinkFault>& faults, int a, int b, std::int64_t tick) {
  for (const LinkFault& f : faults)
    if (f.matches(a, b) && f.covers(tick)) return true;
  return false;
}

inline std::vector<Envelope> deliver_round(const CommGraph& g,
                                           const std::vector<LinkFault>& faults,
                                           std::vector<Envelope>& pending,
                                           std::int64_t now, int latency_ticks) {
  if (latency_ticks < 1) throw Error("latency_ticks must be >= 1");
  std::vector<Envelope> delivered;
  std::vector<Envelope> keep;
  keep.reserve(pending.size());
  for (Envelope& e : pending) {
    const std::int64_t due = e.sent_tick + latency_ticks;
    if (due > now) {
      keep.push_back(e);
      continue;
    }
    if (due == now && g.has_edge(e.from, e.to) && !edge_faulted(faults, e.from, e.to, now))
      delivered.push_back(e);
    // due < now, faulted, or non-edge: dropped
  }
  pending.swap(keep);
  return delivered;
}

// ---------------------------------------------------------------------------
// Fault schedule: at every simulated hour boundary, ceil(fraction * |edges|)
// distinct edges go dark for `fault_ticks` (total loss both directions).
// ---------------------------------------------------------------------------

inline std::vector<LinkFault> generate_fault_schedule(const CommGraph& g,
                                                      std::int64_t duration_ticks,
                                                      std::int64_t ticks_per_hour,
                                                      double fraction,
                                                      std::int64_t fault_ticks, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw Error("fault fraction outside [0,1]");
  auto edges = g.edges();
  std::vector<LinkFault> out;
  if (edges.empty() || fraction == 0.0) return out;
  const int k = static_cast<int>(std::ceil(fraction * static_cast<double>(edges.size())));
  for (std::int64_t t0 = 0; t0 < duration_ticks; t0 += ticks_per_hour) {
    for (int idx : rng.sample_without_replacement(static_cast<int>(edges.size()), k)) {
      LinkFault f;
      f.a = edges[static_cast<size_t>(idx)].first;
      f.b = edges[static_cast<size_t>(idx)].second;
      f.start_tick = t0;
      f.end_tick = std::min(t0 + fault_ticks, duration_ticks);
      out.push_back(f);
    }
  }
  return out;
}

// Fault file: CSV rows "edge_from,edge_to,start_s,end_s" (header optional).
inline std::vector<LinkFault> load_fault_schedule(std::istream& in, double tick_s,
                                                  const char* origin = "faults") {
  std::vector<LinkFault> out;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.find("edge_from") != std::string_view::npos) continue;
    auto f = split(line, ',');
    if (f.size() != 4)
      throw Error(strfmt("%s line %d: expected edge_from,edge_to,start_s,end_s", origin, lineno));
    LinkFault lf;
    lf.a = static_cast<int>(parse_long(f[0], "edge_from"));
    lf.b = static_cast<int>(parse_long(f[1], "edge_to"));
    double s0 = parse_double(f[2], "start_s");
    double s1 = parse_double(f[3], "end_s");
    if (!(s1 > s0)) throw Error(strfmt("%s line %d: end_s must exceed start_s", origin, lineno));
    lf.start_tick = static_cast<std::int64_t>(std::llround(s0 / tick_s));
    lf.end_tick = static_cast<std::int64_t>(std::llround(s1 / tick_s));
    out.push_back(lf);
  }
  return out;
}

inline std::vector<LinkFault> load_fault_schedule_file(const std::string& path, double tick_s) {
  std::ifstream in(path);
  if (!in) throw Error(strfmt("cannot open fault file '%s'", path.c_str()));
  return load_fault_schedule(in, tick_s, path.c_str());
}

inline void save_fault_schedule(const std::vector<LinkFault>& faults, double tick_s,
                                std::ostream& out) {
  out << "edge_from,edge_to,start_s,end_s\n";
  for (const LinkFault& f : faults)
    out << strfmt("%d,%d,%.1f,%.1f\n", f.a, f.b,
                  static_cast<double>(f.start_tick) * tick_s,
                  static_cast<double>(f.end_tick) * tick_s);
}

inline void save_fault_schedule_file(const std::vector<LinkFault>& faults, double tick_s,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(strfmt("cannot write fault file '%s'", path.c_str()));
  save_fault_schedule(faults, tick_s, out);
}

// ---------------------------------------------------------------------------
// Comm tree construction from the feeder: two inverters are neighbors when
// the feeder path between them passes no other inverter.  Ancestor linking
// gives each inverter at most one upstream neighbor; inverters with no
// inverter ancestor (heads of separate laterals) are chained in ascending id
// order so the result is always a tree spanning all inverters.
// ---------------------------------------------------------------------------

inline CommGraph comm_graph_from_network(const NetworkModel& net,
                                         const std::vector<int>& inverter_bus_ids) {
  FeederTree tree(net);
  std::vector<bool> is_inv(net.buses.size(), false);
  for (int id : inverter_bus_ids) is_inv[static_cast<size_t>(net.index_of(id))] = true;

  const size_t n = tree.size();
  std::vector<int> anc(n, -1);  // nearest strict inverter ancestor, by sweep order
  for (size_t ord = 1; ord < n; ++ord) {
    int p = tree.parent(static_cast<int>(ord));
    anc[ord] = is_inv[static_cast<size_t>(tree.raw_of(p))] ? p : anc[static_cast<size_t>(p)];
  }

  std::vector<std::pair<int, int>> edges;
  std::vector<int> heads;  // inverters with no inverter ancestor
  for (size_t ord = 0; ord < n; ++ord) {
    int raw = tree.raw_of(static_cast<int>(ord));
    if (!is_inv[static_cast<size_t>(raw)]) continue;
    if (anc[ord] >= 0)
      edges.emplace_back(net.buses[static_cast<size_t>(raw)].id,
                         net.buses[static_cast<size_t>(tree.raw_of(anc[ord]))].id);
    else
      heads.push_back(net.buses[static_cast<size_t>(raw)].id);
  }
  std::sort(heads.begin(), heads.end());
  for (size_t i = 1; i < heads.size(); ++i) edges.emplace_back(heads[i - 1], heads[i]);

  std::vector<int> nodes = inverter_bus_ids;
  return CommGraph(std::move(nodes), edges);
}

}  // namespace voltcoal
