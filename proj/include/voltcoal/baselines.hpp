#pragma once

#include "voltcoal/agents.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Local baseline: every inverter runs the leader feedback on its own bus
// voltage, no communication.  Effective exactly where local reactive power
// moves the local voltage; end-of-feeder inverters saturate on deep sags.
// ---------------------------------------------------------------------------

inline void local_control_step(InverterState& st, const ControlParams& p) {
  leader_step(st, p, st.v_now);
}

// ---------------------------------------------------------------------------
// Centralized epsilon decomposition: zone the actuators by dropping weak
// entries of the (normalized) voltage/reactive coupling matrix and taking
// connected components of what remains.
// ---------------------------------------------------------------------------

// Scale so the largest magnitude entry becomes 1 (eps in [0,1] is then
// meaningful).  An all-zero matrix cannot be normalized.
inline Matrix normalize_coupling(const Matrix& a) {
  const double m = a.max_abs();
  if (!(m > 0.0)) throw Error("coupling matrix is identically zero");
  Matrix out = a;
  for (double& v : out.data) v = std::fabs(v) / m;
  return out;
}

// Zones of `ids` under threshold eps: i and j share a zone when they are
// connected through couplings max(|a_ij|, |a_ji|) >= eps.  eps = 0 keeps
// everything in one zone; eps = 1 (with distinct off-diagonals below the
// maximum) isolates every actuator.
inline std::vector<std::vector<int>> epsilon_decompose(const Matrix& a,
                                                       const std::vector<int>& ids,
                                                       double eps) {
  const size_t n = ids.size();
  if (a.rows != a.cols) throw Error("coupling matrix must be square");
  if (a.rows != n) throw Error("coupling matrix size does not match id list");
  if (eps < 0.0 || eps > 1.0) throw Error("eps outside [0,1]");
  detail::UnionFind uf(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (std::max(std::fabs(a.at(i, j)), std::fabs(a.at(j, i))) >= eps) uf.unite(i, j);
  std::map<size_t, std::vector<int>> groups;
  for (size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(ids[i]);
  std::vector<std::vector<int>> zones;
  zones.reserve(groups.size());
  for (auto& [_, members] : groups) {
    std::sort(members.begin(), members.end());
    zones.push_back(std::move(members));
  }
  std::sort(zones.begin(), zones.end(),
            [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return zones;
}

// Smallest distinct entry value of the normalized matrix that separates every
// over-threshold actuator from every under-threshold one.  Throws when no
// entry value achieves separation (callers fall back to eps = 1).
inline double select_epsilon(const Matrix& normalized, const std::vector<int>& ids,
                             const std::vector<int>& over_ids,
                             const std::vector<int>& under_ids) {
  if (over_ids.empty() || under_ids.empty())
    throw Error("select_epsilon needs actuators on both sides of the thresholds");
  std::vector<int> over = over_ids, under = under_ids;
  std::sort(over.begin(), over.end());
  std::sort(under.begin(), under.end());
  std::vector<double> candidates(normalized.data);
  for (double& v : candidates) v = std::fabs(v);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto separated = [&](double eps) {
    auto zones = epsilon_decompose(normalized, ids, eps);
    for (const auto& zone : zones) {
      bool has_over = false, has_under = false;
      for (int id : zone) {
        if (std::binary_search(over.begin(), over.end(), id)) has_over = true;
        if (std::binary_search(under.begin(), under.end(), id)) has_under = true;
      }
      if (has_over && has_under) return false;
    }
    return true;
  };

  for (double eps : candidates) {
    if (eps < 0.0 || eps > 1.0) continue;
    if (separated(eps)) return eps;
  }
  throw Error("no entry value separates over- from under-threshold actuators");
}

}  // namespace voltcoal
