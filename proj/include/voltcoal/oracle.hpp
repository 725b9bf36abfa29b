#pragma once

#include "voltcoal/agents.hpp"
#include "voltcoal/grid.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Optimization oracle for frozen snapshots.
//
// With every coalition member held at a common utilization ratio u, the
// minimum-effort reactive dispatch that returns the leader voltage to the
// violated limit is the smallest |u| for which the limit is met (or a
// saturated u = +/-1 when the coalition lacks capacity).  snapshot_optimum
// finds that ratio on the full nonlinear power flow by bisection.
// ---------------------------------------------------------------------------

struct SnapshotOptimum {
  double u_star = 0.0;
  std::vector<double> q_star_kvar;   // per member, u_star * q_max
  double v_leader = 0.0;             // achieved leader voltage, p.u.
  bool saturated = false;            // capacity exhausted before the limit
  int violated_limit = 0;            // -1 lower, +1 upper, 0 none at u = 0
};

// `base_injections` must exclude the members' controllable reactive output
// (their ratio is the bisection variable); everything else stays frozen.
inline SnapshotOptimum snapshot_optimum(const NetworkModel& net,
                                        const std::vector<cplx>& base_injections,
                                        double slack_v, int leader_bus,
                                        const std::vector<int>& member_bus_ids,
                                        const std::vector<double>& member_q_max_kvar,
                                        const ControlParams& params,
                                        double v_tol = 1e-6) {
  if (member_bus_ids.size() != member_q_max_kvar.size())
    throw Error("snapshot_optimum: member/headroom size mismatch");
  if (member_bus_ids.empty()) throw Error("snapshot_optimum: empty coalition");

  PowerFlowEngine engine(net);
  const int leader = net.index_of(leader_bus);
  std::vector<size_t> member_idx(member_bus_ids.size());
  std::vector<double> q_max_pu(member_bus_ids.size());
  for (size_t i = 0; i < member_bus_ids.size(); ++i) {
    member_idx[i] = static_cast<size_t>(net.index_of(member_bus_ids[i]));
    q_max_pu[i] = member_q_max_kvar[i] / net.s_base_kva;
  }

  std::vector<cplx> inj = base_injections;
  auto v_leader_at = [&](double u) {
    for (size_t i = 0; i < member_idx.size(); ++i)
      inj[member_idx[i]] = base_injections[member_idx[i]] + cplx(0.0, clip_unit(u) * q_max_pu[i]);
    PowerFlowSolution sol = engine.solve(inj, slack_v, false, 1e-10);
    if (!sol.converged) throw Error("snapshot_optimum: power flow did not converge");
    return sol.v_mag[static_cast<size_t>(leader)];
  };

  SnapshotOptimum out;
  out.q_star_kvar.assign(member_bus_ids.size(), 0.0);
  const double v0 = v_leader_at(0.0);
  double target = 0.0;
  double lo = 0.0, hi = 0.0;
  if (v0 < params.v_lo) {
    out.violated_limit = -1;
    target = params.v_lo;
    const double v_full = v_leader_at(1.0);
    if (v_full < target) {
      out.u_star = 1.0;
      out.v_leader = v_full;
      out.saturated = true;
    } else {
      lo = 0.0;
      hi = 1.0;
    }
  } else if (v0 > params.v_hi) {
    out.violated_limit = +1;
    target = params.v_hi;
    const double v_full = v_leader_at(-1.0);
    if (v_full > target) {
      out.u_star = -1.0;
      out.v_leader = v_full;
      out.saturated = true;
    } else {
      lo = 0.0;
      hi = -1.0;  // bracket walks toward negative ratios
    }
  } else {
    out.v_leader = v0;
    return out;  // no violation: zero effort is optimal
  }

  if (!out.saturated) {
    // Bisection: voltage is monotone in u, |v(lo)| violates, v(hi) satisfies.
    double u_mid = 0.0, v_mid = v0;
    for (int it = 0; it < 100; ++it) {
      u_mid = 0.5 * (lo + hi);
      v_mid = v_leader_at(u_mid);
      if (std::fabs(v_mid - target) <= v_tol) break;
      const bool still_violated = out.violated_limit < 0 ? v_mid < target : v_mid > target;
      if (still_violated) lo = u_mid; else hi = u_mid;
      if (std::fabs(hi - lo) < 1e-12) break;
    }
    out.u_star = u_mid;
    out.v_leader = v_mid;
  }
  for (size_t i = 0; i < member_bus_ids.size(); ++i)
    out.q_star_kvar[i] = clip_unit(out.u_star) * member_q_max_kvar[i];
  return out;
}

// ---------------------------------------------------------------------------
// Linearized single-coalition model around a snapshot: leader voltage is
// affine in the members' reactive outputs, and the per-member effort weights
// gamma_i make every member's optimal output land on the common-ratio ray.
// ---------------------------------------------------------------------------

struct LinearVoltageModel {
  std::vector<int> member_ids;
  std::vector<double> sens;       // dV_leader / dQ_i, p.u. per p.u.
  std::vector<double> q_max_pu;   // member headroom, p.u.
  double v_uncon = 1.0;           // leader voltage with members' reactive at zero

  double gain() const {
    double g = 0.0;
    for (size_t i = 0; i < sens.size(); ++i) g += sens[i] * q_max_pu[i];
    return g;
  }
  double gamma(size_t i) const {
    if (!(q_max_pu[i] > 0.0)) throw Error("member has zero reactive headroom");
    return sens[i] / q_max_pu[i];
  }
  double v_leader(double u) const { return v_uncon + gain() * clip_unit(u); }
};

inline LinearVoltageModel make_linear_model(const NetworkModel& net,
                                            const std::vector<cplx>& base_injections,
                                            double slack_v, int leader_bus,
                                            const std::vector<int>& member_bus_ids,
                                            const std::vector<double>& member_q_max_kvar) {
  PowerFlowSolution base = [&] {
    PowerFlowEngine engine(net);
    return engine.solve(base_injections, slack_v, false, 1e-12);
  }();
  if (!base.converged) throw Error("make_linear_model: base power flow did not converge");
  LinearVoltageModel m;
  m.member_ids = member_bus_ids;
  m.v_uncon = base.v_mag[static_cast<size_t>(net.index_of(leader_bus))];
  m.sens = voltage_sensitivity(net, base, leader_bus, member_bus_ids);
  m.q_max_pu.resize(member_q_max_kvar.size());
  for (size_t i = 0; i < member_q_max_kvar.size(); ++i)
    m.q_max_pu[i] = member_q_max_kvar[i] / net.s_base_kva;
  return m;
}

// Equal-ratio optimum of the linear model (closed form).
inline SnapshotOptimum linear_snapshot_optimum(const LinearVoltageModel& m,
                                               const ControlParams& params) {
  SnapshotOptimum out;
  out.q_star_kvar.assign(m.member_ids.size(), 0.0);
  const double g = m.gain();
  if (m.v_uncon < params.v_lo) {
    out.violated_limit = -1;
    const double need = params.v_lo - m.v_uncon;
    out.u_star = g > 0.0 ? need / g : 2.0;
    if (out.u_star >= 1.0) {
      out.u_star = 1.0;
      out.saturated = true;
    }
  } else if (m.v_uncon > params.v_hi) {
    out.violated_limit = +1;
    const double need = params.v_hi - m.v_uncon;  // negative
    out.u_star = g > 0.0 ? need / g : -2.0;
    if (out.u_star <= -1.0) {
      out.u_star = -1.0;
      out.saturated = true;
    }
  }
  out.v_leader = m.v_leader(out.u_star);
  return out;
}

// ---------------------------------------------------------------------------
// Reference primal-dual trajectory on the linear model: forward-Euler dual
// ascent with the ratio slaved to the duals through the common-ratio map.
// Divergence (|dual gap| beyond 10) signals a step too large for the gain.
// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<double> u;          // clipped common ratio per step
  std::vector<double> lambda_hi;
  std::vector<double> lambda_lo;
  std::vector<double> v_leader;
  bool diverged = false;
};

inline Trajectory primal_dual_trajectory(const LinearVoltageModel& m,
                                         const ControlParams& params, int steps,
                                         double step_s = 0.2) {
  if (steps <= 0) throw Error("primal_dual_trajectory: steps must be positive");
  Trajectory tr;
  tr.u.reserve(static_cast<size_t>(steps));
  double lam_hi = 0.0, lam_lo = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double u = clip_unit(lam_lo - lam_hi);
    const double vl = m.v_leader(u);
    tr.u.push_back(u);
    tr.lambda_hi.push_back(lam_hi);
    tr.lambda_lo.push_back(lam_lo);
    tr.v_leader.push_back(vl);
    lam_hi = std::max(0.0, lam_hi + step_s * params.alpha * (vl - params.v_hi));
    lam_lo = std::max(0.0, lam_lo + step_s * params.alpha * (params.v_lo - vl));
    if (std::fabs(lam_lo - lam_hi) > 10.0) {
      tr.diverged = true;
      break;
    }
  }
  return tr;
}

}  // namespace voltcoal
