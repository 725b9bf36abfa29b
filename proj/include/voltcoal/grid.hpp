#pragma once

#include <algorithm>
#include <complex>
#include <map>
#include <vector>

#include "voltcoal/util.hpp"

namespace voltcoal {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Network model: a balanced radial feeder described as a tree of buses.
//
// Quantities are stored in physical units (kW / kvar / ohm / volt) and
// converted once to per-unit on the feeder bases:
//   v_base      line-to-neutral voltage base [V]
//   s_base_kva  three-phase power base [kVA]
//   z_base      = 3 * v_base^2 / (s_base_kva * 1000)   [ohm]
// ---------------------------------------------------------------------------

enum class BusKind { slack, load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::load;
  double load_p_kw = 0.0;
  double load_q_kvar = 0.0;
  double pv_p_kw = 0.0;
  double inv_q_kvar = 0.0;
};

struct Line {
  int from = 0;
  int to = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

struct NetworkModel {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  double v_base = 230.0;
  double s_base_kva = 1000.0;

  double z_base() const { return 3.0 * v_base * v_base / (s_base_kva * 1000.0); }

  int index_of(int bus_id) const {
    for (size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == bus_id) return static_cast<int>(i);
    throw Error(strfmt("unknown bus id %d", bus_id));
  }

  int slack_index() const {
    for (size_t i = 0; i < buses.size(); ++i)
      if (buses[i].kind == BusKind::slack) return static_cast<int>(i);
    throw Error("network has no slack bus");
  }
};

// Net complex power injection per bus (p.u., generation positive), taken
// from the static bus fields.  The scenario engine builds its own injection
// vectors per tick instead of mutating the model.
inline std::vector<cplx> net_injections(const NetworkModel& net) {
  std::vector<cplx> s(net.buses.size());
  for (size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    s[i] = cplx((b.pv_p_kw - b.load_p_kw) / net.s_base_kva,
                (b.inv_q_kvar - b.load_q_kvar) / net.s_base_kva);
  }
  return s;
}

// ---------------------------------------------------------------------------
// FeederTree: validated rooted representation of the network.
//
// Buses are re-ordered breadth-first from the slack so that parent[i] < i
// for every non-root node; both sweep directions are then simple linear
// passes.  Construction performs full structural validation.
// ---------------------------------------------------------------------------

class FeederTree {
 public:
  explicit FeederTree(const NetworkModel& net) {
    const size_t n = net.buses.size();
    if (n == 0) throw Error("network has no buses");

    std::map<int, int> id_to_raw;
    int slack_raw = -1;
    for (size_t i = 0; i < n; ++i) {
      const Bus& b = net.buses[i];
      if (!id_to_raw.emplace(b.id, static_cast<int>(i)).second)
        throw Error(strfmt("duplicate bus id %d", b.id));
      if (b.kind == BusKind::slack) {
        if (slack_raw >= 0) throw Error("more than one slack bus");
        slack_raw = static_cast<int>(i);
      }
    }
    if (slack_raw < 0) throw Error("network has no slack bus");
    if (net.lines.size() != n - 1)
      throw Error(strfmt("radial network needs %zu lines, found %zu", n - 1, net.lines.size()));

    const double zb = net.z_base();
    std::vector<std::vector<std::pair<int, cplx>>> adj(n);  // raw index -> (raw nbr, z pu)
    for (const Line& ln : net.lines) {
      auto a = id_to_raw.find(ln.from);
      auto b = id_to_raw.find(ln.to);
      if (a == id_to_raw.end() || b == id_to_raw.end())
        throw Error(strfmt("line %d-%d references unknown bus", ln.from, ln.to));
      if (ln.r_ohm < 0.0 || ln.x_ohm < 0.0 || (ln.r_ohm == 0.0 && ln.x_ohm == 0.0))
        throw Error(strfmt("line %d-%d has invalid impedance", ln.from, ln.to));
      cplx z(ln.r_ohm / zb, ln.x_ohm / zb);
      adj[static_cast<size_t>(a->second)].push_back({b->second, z});
      adj[static_cast<size_t>(b->second)].push_back({a->second, z});
    }
    for (auto& row : adj)
      std::sort(row.begin(), row.end(),
                [](const auto& l, const auto& r) { return l.first < r.first; });

    order_to_raw_.reserve(n);
    parent_.assign(n, -1);
    z_pu_.assign(n, cplx(0.0, 0.0));
    std::vector<int> raw_to_order(n, -1);
    std::vector<int> queue;
    queue.push_back(slack_raw);
    raw_to_order[static_cast<size_t>(slack_raw)] = 0;
    order_to_raw_.push_back(slack_raw);
    for (size_t head = 0; head < queue.size(); ++head) {
      int raw = queue[head];
      int ord = raw_to_order[static_cast<size_t>(raw)];
      for (const auto& [nbr, z] : adj[static_cast<size_t>(raw)]) {
        if (raw_to_order[static_cast<size_t>(nbr)] >= 0) continue;
        int nord = static_cast<int>(order_to_raw_.size());
        raw_to_order[static_cast<size_t>(nbr)] = nord;
        order_to_raw_.push_back(nbr);
        parent_.resize(order_to_raw_.size());
        z_pu_.resize(order_to_raw_.size());
        parent_[static_cast<size_t>(nord)] = ord;
        z_pu_[static_cast<size_t>(nord)] = z;
        queue.push_back(nbr);
      }
    }
    if (order_to_raw_.size() != n)
      throw Error("network is not connected (or contains a cycle)");
    raw_to_order_ = std::move(raw_to_order);
  }

  size_t size() const { return order_to_raw_.size(); }
  int parent(int ord) const { return parent_[static_cast<size_t>(ord)]; }
  cplx z_pu(int ord) const { return z_pu_[static_cast<size_t>(ord)]; }
  int raw_of(int ord) const { return order_to_raw_[static_cast<size_t>(ord)]; }
  int order_of_raw(int raw) const { return raw_to_order_[static_cast<size_t>(raw)]; }

 private:
  std::vector<int> order_to_raw_;   // sweep order -> model bus index
  std::vector<int> raw_to_order_;   // model bus index -> sweep order
  std::vector<int> parent_;         // by sweep order; -1 for root
  std::vector<cplx> z_pu_;          // branch impedance from parent, by sweep order
};

// ---------------------------------------------------------------------------
// Power flow solution (indexed like NetworkModel::buses).
// ---------------------------------------------------------------------------

struct PowerFlowSolution {
  std::vector<double> v_mag;       // p.u.
  std::vector<double> v_ang;       // radians
  bool converged = false;
  int iterations = 0;
  double mismatch = 0.0;           // max per-bus power residual, p.u.
  cplx slack_power;                // complex power leaving the slack, p.u.
  std::vector<cplx> injections;    // the injections this solution was computed for
  double slack_v = 1.0;            // slack setpoint used

  cplx v(int i) const {
    return std::polar(v_mag[static_cast<size_t>(i)], v_ang[static_cast<size_t>(i)]);
  }
};

// ---------------------------------------------------------------------------
// Backward/forward sweep solver.
//
// The engine owns reusable workspace and an optional warm start so that the
// scenario loop can run hundreds of thousands of solves cheaply.  The free
// function solve_power_flow() below always starts flat, which makes it a
// pure function of (net, injections, slack setpoint).
// ---------------------------------------------------------------------------

class PowerFlowEngine {
 public:
  static constexpr double kTol = 1e-8;
  static constexpr int kMaxSweeps = 200;

  explicit PowerFlowEngine(const NetworkModel& net) : net_(&net), tree_(net) {
    const size_t n = tree_.size();
    v_.assign(n, cplx(1.0, 0.0));
    flow_.assign(n, cplx(0.0, 0.0));
    s_.assign(n, cplx(0.0, 0.0));
  }

  const FeederTree& tree() const { return tree_; }

  // Solve with explicit starting voltages (kept from the previous call when
  // warm == true).  Tolerance may be tightened for sensitivity work.
  PowerFlowSolution solve(const std::vector<cplx>& injections, double slack_v,
                          bool warm = false, double tol = kTol) {
    const size_t n = tree_.size();
    if (injections.size() != n)
      throw Error(strfmt("injection vector size %zu != bus count %zu", injections.size(), n));
    if (!(slack_v > 0.8 && slack_v < 1.2))
      throw Error(strfmt("slack setpoint %.4f outside (0.8, 1.2)", slack_v));

    for (size_t ord = 0; ord < n; ++ord)
      s_[ord] = injections[static_cast<size_t>(tree_.raw_of(static_cast<int>(ord)))];
    if (!warm)
      for (size_t i = 0; i < n; ++i) v_[i] = cplx(1.0, 0.0);
    v_[0] = cplx(slack_v, 0.0);

    PowerFlowSolution sol;
    sol.injections = injections;
    sol.slack_v = slack_v;

    int sweep = 0;
    double maxdv = 0.0;
    bool degenerate = false;
    for (sweep = 1; sweep <= kMaxSweeps; ++sweep) {
      // Backward: accumulate branch currents from the leaves toward the root.
      flow_[0] = cplx(0.0, 0.0);
      for (size_t i = 1; i < n; ++i) {
        if (std::abs(v_[i]) < 1e-3) { degenerate = true; break; }
        flow_[i] = -std::conj(s_[i] / v_[i]);
      }
      if (degenerate) break;
      for (size_t i = n; i-- > 1;)
        flow_[static_cast<size_t>(tree_.parent(static_cast<int>(i)))] += flow_[i];
      // Forward: update voltages from the root toward the leaves.
      maxdv = 0.0;
      for (size_t i = 1; i < n; ++i) {
        cplx nv = v_[static_cast<size_t>(tree_.parent(static_cast<int>(i)))] -
                  tree_.z_pu(static_cast<int>(i)) * flow_[i];
        maxdv = std::max(maxdv, std::abs(nv - v_[i]));
        v_[i] = nv;
      }
      if (maxdv < tol) break;
    }

    sol.iterations = std::min(sweep, kMaxSweeps);
    sol.v_mag.resize(n);
    sol.v_ang.resize(n);
    for (size_t ord = 0; ord < n; ++ord) {
      int raw = tree_.raw_of(static_cast<int>(ord));
      sol.v_mag[static_cast<size_t>(raw)] = std::abs(v_[ord]);
      sol.v_ang[static_cast<size_t>(raw)] = std::arg(v_[ord]);
    }

    // Independent residual: branch currents recomputed from final voltages
    // via Ohm's law, then per-bus power balance against the injections.
    double mism = 0.0;
    cplx slack_out(0.0, 0.0);
    if (!degenerate) {
      std::vector<cplx> ohm(n, cplx(0.0, 0.0));
      for (size_t i = 1; i < n; ++i)
        ohm[i] = (v_[static_cast<size_t>(tree_.parent(static_cast<int>(i)))] - v_[i]) /
                 tree_.z_pu(static_cast<int>(i));
      std::vector<cplx> child_sum(n, cplx(0.0, 0.0));
      for (size_t i = n; i-- > 1;)
        child_sum[static_cast<size_t>(tree_.parent(static_cast<int>(i)))] += ohm[i];
      for (size_t i = 1; i < n; ++i) {
        cplx absorbed = v_[i] * std::conj(ohm[i] - child_sum[i]);
        mism = std::max(mism, std::abs(s_[i] + absorbed));
      }
      slack_out = v_[0] * std::conj(child_sum[0]);
    }
    sol.mismatch = degenerate ? 1.0 : mism;
    sol.slack_power = slack_out;
    sol.converged = !degenerate && maxdv < tol && sol.mismatch <= std::max(tol, 10.0 * tol);
    return sol;
  }

 private:
  const NetworkModel* net_;
  FeederTree tree_;
  std::vector<cplx> v_, flow_, s_;
};

// Pure solve: flat start at 1.0 p.u., identical inputs give bit-identical
// solutions.  `injections` is indexed like net.buses (p.u., generation > 0).
inline PowerFlowSolution solve_power_flow(const NetworkModel& net,
                                          const std::vector<cplx>& injections,
                                          double slack_v = 1.0) {
  PowerFlowEngine engine(net);
  return engine.solve(injections, slack_v, /*warm=*/false);
}

// ---------------------------------------------------------------------------
// Voltage / reactive-power sensitivities by central finite differences.
//
// The perturbation is 1 kvar by default; solves run at a tightened tolerance
// so the difference quotient is not polluted by solver residual.
// ---------------------------------------------------------------------------

inline std::vector<double> voltage_sensitivity(const NetworkModel& net,
                                               const PowerFlowSolution& sol,
                                               int target_bus,
                                               const std::vector<int>& source_buses,
                                               double delta_kvar = 1.0) {
  if (!sol.converged) throw Error("voltage_sensitivity: base solution not converged");
  const int target = net.index_of(target_bus);
  const double dq = delta_kvar / net.s_base_kva;
  PowerFlowEngine engine(net);
  std::vector<double> out;
  out.reserve(source_buses.size());
  if (net.buses[static_cast<size_t>(target)].kind == BusKind::slack) {
    out.assign(source_buses.size(), 0.0);  // slack voltage is pinned
    return out;
  }
  std::vector<cplx> inj = sol.injections;
  for (int src_id : source_buses) {
    const size_t src = static_cast<size_t>(net.index_of(src_id));
    cplx base = inj[src];
    inj[src] = base + cplx(0.0, dq);
    PowerFlowSolution up = engine.solve(inj, sol.slack_v, false, 1e-12);
    inj[src] = base - cplx(0.0, dq);
    PowerFlowSolution dn = engine.solve(inj, sol.slack_v, false, 1e-12);
    inj[src] = base;
    if (!up.converged || !dn.converged)
      throw Error(strfmt("voltage_sensitivity: perturbed solve failed at bus %d", src_id));
    out.push_back((up.v_mag[static_cast<size_t>(target)] - dn.v_mag[static_cast<size_t>(target)]) /
                  (2.0 * dq));
  }
  return out;
}

// Full V-Q coupling matrix over the given buses: entry (i, j) is the change
// of |V| at bus_ids[i] per unit reactive injection at bus_ids[j] (p.u./p.u.).
inline Matrix full_vq_sensitivity(const NetworkModel& net, const PowerFlowSolution& sol,
                                  const std::vector<int>& bus_ids,
                                  double delta_kvar = 1.0) {
  if (!sol.converged) throw Error("full_vq_sensitivity: base solution not converged");
  const size_t m = bus_ids.size();
  Matrix a(m, m);
  const double dq = delta_kvar / net.s_base_kva;
  PowerFlowEngine engine(net);
  std::vector<cplx> inj = sol.injections;
  std::vector<int> targets(m);
  for (size_t i = 0; i < m; ++i) targets[i] = net.index_of(bus_ids[i]);
  for (size_t j = 0; j < m; ++j) {
    const size_t src = static_cast<size_t>(targets[j]);
    cplx base = inj[src];
    inj[src] = base + cplx(0.0, dq);
    PowerFlowSolution up = engine.solve(inj, sol.slack_v, false, 1e-12);
    inj[src] = base - cplx(0.0, dq);
    PowerFlowSolution dn = engine.solve(inj, sol.slack_v, false, 1e-12);
    inj[src] = base;
    if (!up.converged || !dn.converged)
      throw Error(strfmt("full_vq_sensitivity: perturbed solve failed at bus %d", bus_ids[j]));
    for (size_t i = 0; i < m; ++i) {
      const size_t t = static_cast<size_t>(targets[i]);
      a.at(i, j) = (up.v_mag[t] - dn.v_mag[t]) / (2.0 * dq);
    }
  }
  return a;
}

// Buses that host PV generation (default actuator set for the coupling matrix).
inline std::vector<int> pv_bus_ids(const NetworkModel& net) {
  std::vector<int> ids;
  for (const Bus& b : net.buses)
    if (b.pv_p_kw > 0.0) ids.push_back(b.id);
  return ids;
}

inline Matrix full_vq_sensitivity(const NetworkModel& net, const PowerFlowSolution& sol) {
  return full_vq_sensitivity(net, sol, pv_bus_ids(net));
}

}  // namespace voltcoal
