#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "voltcoal/grid.hpp"
#include "voltcoal/util.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Synthetic radial feeder generator.
//
// Layout: a slack bus feeds a short trunk of junction nodes; laterals hang off
// the trunk junctions.  Laterals cycle through three characters:
//   load_heavy — a large commercial load mid-lateral plus many houses; only a
//                few small rooftop PV systems, concentrated near the far end.
//   mixed      — a commercial load plus ordinary houses, no PV.
//   generation — a PV farm near the lateral head plus many PV-equipped houses.
// This yields feeders where, under a depressed substation setpoint and strong
// sun, generation laterals rise above the upper voltage threshold while
// load-heavy laterals sag below the lower one at the same instant.
// ---------------------------------------------------------------------------

struct NetGenSpec {
  int laterals = 6;
  int nodes_per_lateral = 16;
  int trunk_nodes = 6;

  double trunk_r_ohm = 0.004;
  double trunk_x_ohm = 0.003;
  double lateral_r_min_ohm = 0.008;
  double lateral_r_max_ohm = 0.011;
  double lateral_x_over_r = 0.5;

  int houses = 32;
  int inverters = 30;  // PV systems with controllable reactive output
  double house_kw_min = 2.2;
  double house_kw_max = 14.5;
  double rooftop_pv_heavy_min_kw = 4.0;  // rooftops on load-heavy laterals
  double rooftop_pv_heavy_max_kw = 5.0;
  double rooftop_pv_gen_min_kw = 6.0;  // rooftops on generation laterals
  double rooftop_pv_gen_max_kw = 8.0;

  std::vector<double> commercial_kw{132.0, 100.0, 67.0, 48.0};
  std::vector<double> farm_kw{45.5, 140.0};
  double load_q_per_p = 0.33;  // reactive demand per kW of active demand

  double v_base_volts = 230.0;
  double s_base_kva = 1000.0;
};

enum class LateralKind { load_heavy, mixed, generation };

inline LateralKind lateral_kind(int lateral_index_1based) {
  switch ((lateral_index_1based - 1) % 3) {
    case 0: return LateralKind::load_heavy;
    case 1: return LateralKind::mixed;
    default: return LateralKind::generation;
  }
}

struct GeneratedFeeder {
  NetworkModel net;
  std::vector<int> inverter_buses;     // buses hosting controllable PV
  std::vector<int> residential_buses;  // buses with a house load
  std::vector<int> commercial_buses;   // buses with a commercial load
};

namespace detail {

// Bookkeeping for one lateral while populating the feeder.
struct LateralSlots {
  LateralKind kind;
  std::vector<int> bus_ids;     // node 1..n along the lateral
  std::vector<bool> occupied;   // a bus accepts at most one installation
  int free_count() const {
    int c = 0;
    for (bool o : occupied)
      if (!o) ++c;
    return c;
  }
  // Pick `k` distinct free node indices within [lo, hi] (1-based, inclusive).
  std::vector<int> pick_free(Rng& rng, int k, int lo, int hi) {
    std::vector<int> candidates;
    for (int node = lo; node <= hi; ++node)
      if (!occupied[static_cast<size_t>(node - 1)]) candidates.push_back(node);
    if (static_cast<int>(candidates.size()) < k)
      throw Error(strfmt("feeder generator: need %d free nodes in [%d,%d], have %zu", k, lo,
                         hi, candidates.size()));
    std::vector<int> idx =
        rng.sample_without_replacement(static_cast<int>(candidates.size()), k);
    std::vector<int> out;
    for (int i : idx) out.push_back(candidates[static_cast<size_t>(i)]);
    std::sort(out.begin(), out.end());
    for (int node : out) occupied[static_cast<size_t>(node - 1)] = true;
    return out;
  }
  int take_first_free_at_or_after(int node) {
    for (int i = node; i <= static_cast<int>(occupied.size()); ++i)
      if (!occupied[static_cast<size_t>(i - 1)]) {
        occupied[static_cast<size_t>(i - 1)] = true;
        return i;
      }
    throw Error("feeder generator: lateral is full");
  }
};

// Household peak demand, skewed toward the small end of the range (a few large
// homes among many modest ones).
inline double draw_house_kw(Rng& rng, const NetGenSpec& spec) {
  double t = rng.uniform(0.0, 1.0);
  return spec.house_kw_min + (spec.house_kw_max - spec.house_kw_min) * t * t;
}

}  // namespace detail

inline void validate(const NetGenSpec& spec) {
  if (spec.laterals < 1) throw Error("feeder generator: laterals must be >= 1");
  if (spec.nodes_per_lateral < 1) throw Error("feeder generator: nodes_per_lateral must be >= 1");
  if (spec.trunk_nodes < 1) throw Error("feeder generator: trunk_nodes must be >= 1");
  if (spec.trunk_r_ohm < 0 || spec.trunk_x_ohm < 0 ||
      (spec.trunk_r_ohm == 0 && spec.trunk_x_ohm == 0))
    throw Error("feeder generator: invalid trunk impedance");
  if (spec.lateral_r_min_ohm <= 0 || spec.lateral_r_max_ohm < spec.lateral_r_min_ohm)
    throw Error("feeder generator: invalid lateral resistance range");
  if (spec.lateral_x_over_r < 0) throw Error("feeder generator: invalid lateral x/r");
  if (spec.houses < 0 || spec.inverters < 0)
    throw Error("feeder generator: negative installation count");
  if (spec.houses < spec.inverters)
    throw Error("feeder generator: every rooftop PV system needs a house (houses < inverters)");
  if (spec.house_kw_min <= 0 || spec.house_kw_max < spec.house_kw_min)
    throw Error("feeder generator: invalid house size range");
  if (spec.load_q_per_p < 0) throw Error("feeder generator: invalid load q/p ratio");
}

inline GeneratedFeeder generate_network(const NetGenSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(derive_seed(seed, 0x6e657467656eULL));

  NetworkModel net;
  net.v_base = spec.v_base_volts;
  net.s_base_kva = spec.s_base_kva;

  int next_id = 1;
  Bus slack;
  slack.id = next_id++;
  slack.kind = BusKind::slack;
  net.buses.push_back(slack);

  std::vector<int> trunk_ids;
  for (int i = 0; i < spec.trunk_nodes; ++i) {
    Bus b;
    b.id = next_id++;
    net.buses.push_back(b);
    trunk_ids.push_back(b.id);
    int from = (i == 0) ? slack.id : trunk_ids[static_cast<size_t>(i - 1)];
    net.lines.push_back(Line{from, b.id, spec.trunk_r_ohm, spec.trunk_x_ohm});
  }

  std::vector<detail::LateralSlots> lats;
  for (int k = 1; k <= spec.laterals; ++k) {
    detail::LateralSlots slots;
    slots.kind = lateral_kind(k);
    int attach = trunk_ids[static_cast<size_t>(std::min(k, spec.trunk_nodes) - 1)];
    int prev = attach;
    for (int node = 1; node <= spec.nodes_per_lateral; ++node) {
      Bus b;
      b.id = next_id++;
      net.buses.push_back(b);
      double r = rng.uniform(spec.lateral_r_min_ohm, spec.lateral_r_max_ohm);
      net.lines.push_back(Line{prev, b.id, r, r * spec.lateral_x_over_r});
      slots.bus_ids.push_back(b.id);
      slots.occupied.push_back(false);
      prev = b.id;
    }
    lats.push_back(std::move(slots));
  }

  auto bus_ref = [&net](int id) -> Bus& {
    return net.buses[static_cast<size_t>(net.index_of(id))];
  };

  GeneratedFeeder out;

  std::vector<size_t> heavy, mixed, gen;
  for (size_t i = 0; i < lats.size(); ++i) {
    if (lats[i].kind == LateralKind::load_heavy) heavy.push_back(i);
    else if (lats[i].kind == LateralKind::mixed) mixed.push_back(i);
    else gen.push_back(i);
  }

  // Commercial loads sit mid-lateral on load-heavy laterals first, then mixed.
  std::vector<size_t> commercial_targets = heavy;
  commercial_targets.insert(commercial_targets.end(), mixed.begin(), mixed.end());
  if (commercial_targets.empty())
    for (size_t i = 0; i < lats.size(); ++i) commercial_targets.push_back(i);
  for (size_t c = 0; c < spec.commercial_kw.size(); ++c) {
    detail::LateralSlots& lat = lats[commercial_targets[c % commercial_targets.size()]];
    int mid = (spec.nodes_per_lateral + 1) / 2;
    int node = lat.take_first_free_at_or_after(mid);
    Bus& b = bus_ref(lat.bus_ids[static_cast<size_t>(node - 1)]);
    b.load_p_kw = spec.commercial_kw[c];
    b.load_q_kvar = spec.commercial_kw[c] * spec.load_q_per_p;
    out.commercial_buses.push_back(b.id);
  }

  // PV farms partway down the generation laterals (export over a few segments
  // of lateral impedance lifts the tail well above the trunk).
  std::vector<size_t> farm_targets = gen;
  if (farm_targets.empty() && !spec.farm_kw.empty())
    farm_targets.push_back(lats.size() - 1);
  for (size_t f = 0; f < spec.farm_kw.size(); ++f) {
    detail::LateralSlots& lat = lats[farm_targets[f % farm_targets.size()]];
    int want = 4 + 3 * static_cast<int>(f / farm_targets.size());
    int node = lat.take_first_free_at_or_after(std::min(want, spec.nodes_per_lateral));
    Bus& b = bus_ref(lat.bus_ids[static_cast<size_t>(node - 1)]);
    b.pv_p_kw = spec.farm_kw[f];
    out.inverter_buses.push_back(b.id);
  }

  // Rooftop PV quotas.  Load-heavy laterals get a small fixed share with two
  // systems pinned to the far end of the lateral (the critical buses); the
  // remainder spreads across generation laterals.
  int heavy_each = 0;
  if (!heavy.empty() && spec.inverters > 0) {
    heavy_each = std::max(2, (spec.inverters * 19 + 50) / 100);
    heavy_each = std::min(heavy_each,
                          spec.inverters / static_cast<int>(heavy.size()));
    heavy_each = std::min(heavy_each, spec.nodes_per_lateral - 1);
  }
  int remaining = spec.inverters - heavy_each * static_cast<int>(heavy.size());
  std::vector<size_t> roof_targets = gen.empty() ? mixed : gen;
  if (roof_targets.empty())
    for (size_t i = 0; i < lats.size(); ++i) roof_targets.push_back(i);

  std::vector<std::pair<size_t, int>> roof_quota;  // (lateral index, count)
  for (size_t h : heavy) roof_quota.emplace_back(h, heavy_each);
  for (size_t i = 0; i < roof_targets.size(); ++i) {
    int share = remaining / static_cast<int>(roof_targets.size()) +
                (static_cast<int>(i) <
                         remaining % static_cast<int>(roof_targets.size())
                     ? 1
                     : 0);
    roof_quota.emplace_back(roof_targets[i], share);
  }
  std::sort(roof_quota.begin(), roof_quota.end());

  for (auto [li, count] : roof_quota) {
    if (count <= 0) continue;
    detail::LateralSlots& lat = lats[li];
    std::vector<int> nodes;
    if (lat.kind == LateralKind::load_heavy && count >= 2) {
      int n = spec.nodes_per_lateral;
      nodes = lat.pick_free(rng, 2, std::max(1, n - 1), n);
      int shallow = count - 2;
      if (shallow > 0) {
        auto extra = lat.pick_free(rng, shallow, std::min(2, n), std::max(2, n / 2));
        nodes.insert(nodes.end(), extra.begin(), extra.end());
      }
    } else {
      nodes = lat.pick_free(rng, count, 1, spec.nodes_per_lateral);
    }
    std::sort(nodes.begin(), nodes.end());
    bool small_pv = lat.kind == LateralKind::load_heavy;
    for (int node : nodes) {
      Bus& b = bus_ref(lat.bus_ids[static_cast<size_t>(node - 1)]);
      b.load_p_kw = detail::draw_house_kw(rng, spec);
      b.load_q_kvar = b.load_p_kw * spec.load_q_per_p;
      b.pv_p_kw = small_pv ? rng.uniform(spec.rooftop_pv_heavy_min_kw, spec.rooftop_pv_heavy_max_kw)
                           : rng.uniform(spec.rooftop_pv_gen_min_kw, spec.rooftop_pv_gen_max_kw);
      out.inverter_buses.push_back(b.id);
      out.residential_buses.push_back(b.id);
    }
  }

  // Plain houses: load-heavy laterals soak up ~30% of the remainder each,
  // mixed laterals share the rest, spillover goes wherever space is left.
  int extra_houses = spec.houses - spec.inverters;
  std::vector<int> want(lats.size(), 0);
  if (extra_houses > 0) {
    int assigned = 0;
    for (size_t h : heavy) {
      want[h] = std::min((extra_houses * 30 + 50) / 100, lats[h].free_count());
      assigned += want[h];
    }
    int rest = extra_houses - assigned;
    if (rest > 0 && !mixed.empty()) {
      for (size_t i = 0; i < mixed.size(); ++i) {
        int share = rest / static_cast<int>(mixed.size()) +
                    (static_cast<int>(i) < rest % static_cast<int>(mixed.size()) ? 1 : 0);
        want[mixed[i]] = std::min(share, lats[mixed[i]].free_count());
        assigned += want[mixed[i]];
      }
      rest = extra_houses - assigned;
    }
    // Spillover in lateral order.
    for (size_t i = 0; i < lats.size() && rest > 0; ++i) {
      int room = lats[i].free_count() - want[i];
      int take = std::min(room, rest);
      if (take > 0) {
        want[i] += take;
        rest -= take;
      }
    }
    if (rest > 0) throw Error("feeder generator: not enough nodes for all houses");
    for (size_t i = 0; i < lats.size(); ++i) {
      if (want[i] <= 0) continue;
      auto nodes = lats[i].pick_free(rng, want[i], 1, spec.nodes_per_lateral);
      for (int node : nodes) {
        Bus& b = bus_ref(lats[i].bus_ids[static_cast<size_t>(node - 1)]);
        b.load_p_kw = detail::draw_house_kw(rng, spec);
        b.load_q_kvar = b.load_p_kw * spec.load_q_per_p;
        out.residential_buses.push_back(b.id);
      }
    }
  }

  std::sort(out.inverter_buses.begin(), out.inverter_buses.end());
  std::sort(out.residential_buses.begin(), out.residential_buses.end());
  std::sort(out.commercial_buses.begin(), out.commercial_buses.end());

  FeederTree check(net);  // validates radial connectivity
  (void)check;
  out.net = std::move(net);
  return out;
}

}  // namespace voltcoal
