#include <catch2/catch_amalgamated.hpp>

#include "voltcoal/agents.hpp"

using namespace voltcoal;

namespace {

InverterState make_agent(int id, std::vector<int> neighbors, std::set<int> active) {
  InverterState st;
  st.id = id;
  st.p_rated_kw = 7.5;
  st.neighbors = std::move(neighbors);
  st.active = std::move(active);
  return st;
}

ControlParams defaults() {
  ControlParams p;
  p.validate();
  return p;
}

}  // namespace

TEST_CASE("parameter validation rejects inconsistent settings", "[agents]") {
  ControlParams p;
  REQUIRE_NOTHROW(p.validate());
  SECTION("threshold ordering") {
    p.v_lo_th = 1.01;  // above v_ref
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("limits inside thresholds") {
    p.v_hi = 1.04;  // below v_hi_th
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("zero tolerance") {
    p.eps_u = 0.0;
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("zero gain") {
    p.alpha = 0.0;
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("negative margin") {
    p.beta = -0.1;
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("ratio gates out of order") {
    p.u_lo_th = 0.95;  // above u_hi_th
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
  SECTION("ratio gate above one") {
    p.u_hi_th = 1.2;
    REQUIRE_THROWS_AS(p.validate(), Error);
  }
}

TEST_CASE("reactive headroom follows the apparent-power circle", "[agents]") {
  ControlParams p = defaults();  // beta = 0.10
  InverterState st = make_agent(1, {}, {});

  st.p_out_kw = 7.5;  // full rated output
  REQUIRE(q_capacity(st, p));
  REQUIRE(st.s_rated_kva == Catch::Approx(8.25).margin(1e-12));
  REQUIRE(st.q_max_kvar == Catch::Approx(3.43693177121688).margin(1e-12));

  st.p_out_kw = 5.0;
  REQUIRE(q_capacity(st, p));
  REQUIRE(st.q_max_kvar == Catch::Approx(6.562202374203344).margin(1e-12));

  st.p_out_kw = 0.0;  // idle: the full apparent rating is available
  REQUIRE(q_capacity(st, p));
  REQUIRE(st.q_max_kvar == Catch::Approx(8.25).margin(1e-12));

  st.p_out_kw = 9.0;  // over-generation: headroom clamps, caller is warned
  REQUIRE_FALSE(q_capacity(st, p));
  REQUIRE(st.q_max_kvar == 0.0);
}

TEST_CASE("reactive output clips the ratio to the unit interval", "[agents]") {
  InverterState st = make_agent(1, {}, {});
  st.q_max_kvar = 4.0;
  st.u = 0.5;
  REQUIRE(reactive_output(st) == Catch::Approx(2.0));
  st.u = 3.2;  // wound-up ratio still actuates at the limit
  REQUIRE(reactive_output(st) == Catch::Approx(4.0));
  st.u = -1.7;
  REQUIRE(reactive_output(st) == Catch::Approx(-4.0));
  REQUIRE(st.q_out_kvar == Catch::Approx(-4.0));
}

TEST_CASE("leader publishes pre-update duals, then integrates", "[agents]") {
  ControlParams p = defaults();  // alpha = 20, limits 0.91 / 1.09
  InverterState st = make_agent(1, {}, {});
  st.lambda_lo = 0.3;
  st.lambda_hi = 0.0;
  st.u = -99.0;  // stale value that must be overwritten

  leader_step(st, p, 0.90);  // one hundredth below the lower limit
  // The published ratio is the difference of the duals *before* this tick's
  // integration...
  REQUIRE(st.u == 0.3);
  // ...while the duals themselves have already moved by alpha * violation.
  REQUIRE(st.lambda_lo == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(st.lambda_hi == 0.0);

  leader_step(st, p, 0.90);
  REQUIRE(st.u == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(st.lambda_lo == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("upper-limit violations drive the ratio negative", "[agents]") {
  ControlParams p = defaults();
  InverterState st = make_agent(1, {}, {});
  leader_step(st, p, 1.10);
  leader_step(st, p, 1.10);
  REQUIRE(st.lambda_lo == 0.0);
  REQUIRE(st.u == Catch::Approx(-0.2).margin(1e-12));  // absorbing
}

TEST_CASE("in-band voltage drains the duals to exactly zero", "[agents]") {
  ControlParams p = defaults();
  InverterState st = make_agent(1, {}, {});
  st.lambda_lo = 3.7;

  // At v = 1.0 both duals shrink by alpha * 0.09 = 1.8 per tick under
  // projection; no matter the rounding of the intermediate values the
  // projection lands on exact zero in finitely many ticks.
  for (int k = 0; k < 4; ++k) leader_step(st, p, 1.0);
  REQUIRE(st.lambda_lo == 0.0);
  REQUIRE(st.lambda_hi == 0.0);
  REQUIRE(st.u == 0.0);
  leader_step(st, p, 1.0);  // and it stays there
  REQUIRE(st.u == 0.0);
}

TEST_CASE("followers average over everything heard this tick", "[agents]") {
  InverterState st = make_agent(4, {}, {});
  st.u = 0.5;
  follower_step(st, {0.1, 0.3});
  REQUIRE(st.u == Catch::Approx((0.5 + 0.1 + 0.3) / 3.0).margin(1e-15));

  st.u = 0.5;
  follower_step(st, {});  // silence: hold the last ratio
  REQUIRE(st.u == 0.5);

  st.u = 1.0;
  follower_step(st, {0.0});
  REQUIRE(st.u == 0.5);
}

TEST_CASE("assessment window brackets the drifting own average", "[agents]") {
  ControlParams p = defaults();
  InverterState st = make_agent(2, {}, {});
  st.v_avg = 1.00;
  CoalitionView view;
  start_assessment(view, st);
  REQUIRE(view.v_max_est == 1.00);
  REQUIRE(view.v_min_est == 1.00);

  st.v_avg = 1.06;  // own average drifts upward mid-window
  assess_step(view, st, {{1.02, 0.97}});
  REQUIRE(view.v_max_est == 1.06);
  REQUIRE(view.v_min_est == 0.97);
  REQUIRE(view.v_min_est <= st.v_avg);
  REQUIRE(view.v_max_est >= st.v_avg);

  finalize_assessment(view, p);
  REQUIRE_FALSE(view.coalition_ok);  // 1.06 exceeds the formation threshold
}

TEST_CASE("coalition health holds exactly at the formation thresholds", "[agents]") {
  ControlParams p = defaults();
  CoalitionView view;
  view.v_max_est = p.v_hi_th;  // boundary values are still healthy
  view.v_min_est = p.v_lo_th;
  finalize_assessment(view, p);
  REQUIRE(view.coalition_ok);

  view.v_min_est = 0.9499;
  finalize_assessment(view, p);
  REQUIRE_FALSE(view.coalition_ok);
}

TEST_CASE("election converges on largest deviation, ties to smallest id", "[agents]") {
  REQUIRE(deviation_wins(0.06, 9, 0.05, 1));
  REQUIRE_FALSE(deviation_wins(0.05, 1, 0.06, 9));
  REQUIRE(deviation_wins(0.05, 3, 0.05, 7));   // tie -> smaller id
  REQUIRE_FALSE(deviation_wins(0.05, 7, 0.05, 3));

  ControlParams p = defaults();
  InverterState st = make_agent(5, {}, {});
  st.v_avg = 0.96;  // deviation 0.04
  CoalitionView view;
  start_election(view, st, p);
  REQUIRE(view.dv_est == Catch::Approx(0.04).margin(1e-12));
  REQUIRE(view.dv_arg_id == 5);

  election_step(view, {{0.07, 12}, {0.03, 1}});
  REQUIRE(view.dv_arg_id == 12);
  election_step(view, {{0.07, 4}});  // equal deviation, smaller id wins
  REQUIRE(view.dv_arg_id == 4);
  REQUIRE(view.dv_est == 0.07);
}

TEST_CASE("promotion is bumpless, re-election leaves duals alone", "[agents]") {
  InverterState st = make_agent(5, {}, {});
  CoalitionView view;
  view.dv_arg_id = 5;

  st.u = 0.4;  // promoted follower seeds its duals from the running ratio
  REQUIRE(elect_leader(st, view) == Role::leader);
  REQUIRE(st.lambda_lo == 0.4);
  REQUIRE(st.lambda_hi == 0.0);

  st.lambda_lo = 5.0;  // the sitting leader's duals survive re-election
  REQUIRE(elect_leader(st, view) == Role::leader);
  REQUIRE(st.lambda_lo == 5.0);

  view.dv_arg_id = 9;  // demotion
  REQUIRE(elect_leader(st, view) == Role::follower);
  REQUIRE(st.role == Role::follower);

  st.u = -0.3;  // absorbing ratio maps onto the upper dual
  view.dv_arg_id = 5;
  elect_leader(st, view);
  REQUIRE(st.lambda_lo == 0.0);
  REQUIRE(st.lambda_hi == 0.3);
}

TEST_CASE("straddling coalitions divide across the reference", "[agents]") {
  ControlParams p = defaults();
  InverterState st = make_agent(5, {3, 7, 9}, {3, 7, 9});
  st.v_avg = 0.94;
  CoalitionView view;
  view.v_max_est = 1.06;
  view.v_min_est = 0.94;

  std::map<int, NeighborInfo> info;
  info[3] = {true, 0.93, 0.0, false};   // same side: kept
  info[7] = {true, 1.06, 0.0, false};   // other side: severed
  info[9] = {true, 1.07, 0.0, false};   // other side: severed
  Action act = decide_coalition_action(st, view, info, p);
  REQUIRE(act.kind == ActionKind::divide);
  REQUIRE(act.divide_edges == std::vector<int>{7, 9});

  SECTION("stale neighbors are ignored") {
    info[7].fresh = false;
    info[9].fresh = false;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("no divide without the straddle") {
    view.v_min_est = 0.96;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("a neighbor exactly at the reference is not opposite") {
    info[7].v_avg = p.v_ref;
    info[9].fresh = false;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
}

TEST_CASE("healthy coalitions merge when ratios agree", "[agents]") {
  ControlParams p = defaults();  // eps_u = 0.02
  InverterState st = make_agent(5, {3, 7}, {3});
  st.u = 0.0;
  CoalitionView view;
  view.coalition_ok = true;

  std::map<int, NeighborInfo> info;
  info[7] = {true, 1.0, 0.019, true};
  Action act = decide_coalition_action(st, view, info, p);
  REQUIRE(act.kind == ActionKind::merge);
  REQUIRE(act.join == 7);

  SECTION("the ratio-gap comparison is strict") {
    info[7].u = 0.02;  // exactly eps_u: no merge
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("an unhealthy own coalition never merges") {
    view.coalition_ok = false;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("an unhealthy far coalition blocks the merge by default") {
    info[7].coalition_ok = false;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
    p.merge_requires_both_ok = false;  // one-sided variant allows it
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::merge);
  }
  SECTION("divide takes precedence over merge") {
    view.v_max_est = 1.06;
    view.v_min_est = 0.94;
    st.v_avg = 0.94;
    info[3] = {true, 1.06, 0.0, true};  // active, other side
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::divide);
    REQUIRE(act.divide_edges == std::vector<int>{3});
  }
  SECTION("the first eligible neighbor in id order is chosen") {
    InverterState st2 = make_agent(5, {3, 7, 9}, {});
    st2.u = 0.0;
    info[3] = {true, 1.0, 0.5, true};   // gap too wide
    info[9] = {true, 1.0, 0.001, true};
    act = decide_coalition_action(st2, view, info, p);
    REQUIRE(act.kind == ActionKind::merge);
    REQUIRE(act.join == 7);  // 7 precedes 9 and is within the gap
  }
}

TEST_CASE("idle inverters switch toward saturated neighbors", "[agents]") {
  ControlParams p = defaults();  // u_lo_th = 0.70, u_hi_th = 0.90
  InverterState st = make_agent(5, {3, 9}, {3});
  st.u = 0.2;
  st.v_avg = 1.0;
  CoalitionView view;  // not ok, not straddling

  std::map<int, NeighborInfo> info;
  info[9] = {true, 1.0, 0.95, false};
  Action act = decide_coalition_action(st, view, info, p);
  REQUIRE(act.kind == ActionKind::switch_coalition);
  REQUIRE(act.join == 9);
  REQUIRE(act.detach == 3);

  SECTION("own ratio gate is strict") {
    st.u = 0.70;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("far ratio gate is strict") {
    info[9].u = 0.90;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("absorbing saturation counts too") {
    info[9].u = -0.95;
    st.u = -0.1;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::switch_coalition);
  }
  SECTION("own voltage must be comfortably in band") {
    st.v_avg = 0.949;
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("high comm degree disables switching") {
    InverterState st3 = make_agent(5, {2, 3, 9}, {3});
    st3.u = 0.2;
    st3.v_avg = 1.0;
    act = decide_coalition_action(st3, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("an isolated agent has nothing to detach from") {
    st.active.clear();
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::none);
  }
  SECTION("merge takes precedence over switch") {
    view.coalition_ok = true;
    info[9].coalition_ok = true;
    st.u = 0.94;  // within eps_u of the saturated neighbor
    act = decide_coalition_action(st, view, info, p);
    REQUIRE(act.kind == ActionKind::merge);
  }
}

TEST_CASE("actions apply bilaterally with deduplication", "[agents]") {
  AgentMap agents;
  agents[1] = make_agent(1, {2}, {2});
  agents[2] = make_agent(2, {1, 3}, {1, 3});
  agents[3] = make_agent(3, {2, 4}, {2});
  agents[4] = make_agent(4, {3}, {});

  SECTION("both endpoints proposing the same divide sever it once") {
    std::map<int, Action> acts;
    acts[2] = {ActionKind::divide, {3}, -1, -1};
    acts[3] = {ActionKind::divide, {2}, -1, -1};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.size() == 1);
    REQUIRE(events[0].kind == TopologyEvent::divide);
    REQUIRE(events[0].a == 2);
    REQUIRE(events[0].b == 3);
    REQUIRE_FALSE(agents.at(2).active.count(3));
    REQUIRE_FALSE(agents.at(3).active.count(2));
    REQUIRE(coalition_components(agents) ==
            std::vector<std::vector<int>>{{1, 2}, {3}, {4}});
    REQUIRE_NOTHROW(validate_topology(agents));
  }

  SECTION("merges re-activate a severed edge") {
    sever_edge(agents, 2, 3);
    std::map<int, Action> acts;
    acts[3] = {ActionKind::merge, {}, 2, -1};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.size() == 1);
    REQUIRE(events[0].kind == TopologyEvent::merge);
    REQUIRE(agents.at(2).active.count(3));
    REQUIRE(coalition_components(agents) ==
            std::vector<std::vector<int>>{{1, 2, 3}, {4}});
  }

  SECTION("a merge that would close a cycle is skipped") {
    // 1-2-3 already connected through active edges; force hypothetical
    // comm edge 1-3 and try to close the triangle.
    std::map<int, Action> acts;
    acts[1] = {ActionKind::merge, {}, 3, -1};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.empty());
    REQUIRE_FALSE(agents.at(1).active.count(3));
    REQUIRE_NOTHROW(validate_topology(agents));
  }

  SECTION("reciprocal merge proposals apply once") {
    sever_edge(agents, 2, 3);
    std::map<int, Action> acts;
    acts[2] = {ActionKind::merge, {}, 3, -1};
    acts[3] = {ActionKind::merge, {}, 2, -1};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.size() == 1);
  }

  SECTION("switch detaches and joins in one event") {
    std::map<int, Action> acts;
    acts[3] = {ActionKind::switch_coalition, {}, 4, 2};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.size() == 1);
    REQUIRE(events[0].kind == TopologyEvent::switch_from);
    REQUIRE(events[0].a == 3);
    REQUIRE(events[0].b == 4);
    REQUIRE_FALSE(agents.at(3).active.count(2));
    REQUIRE(agents.at(3).active.count(4));
    REQUIRE(agents.at(4).active.count(3));
    REQUIRE(coalition_components(agents) ==
            std::vector<std::vector<int>>{{1, 2}, {3, 4}});
    REQUIRE_NOTHROW(validate_topology(agents));
  }

  SECTION("a switch whose edge state changed underneath is dropped") {
    sever_edge(agents, 3, 2);  // detach target already gone
    std::map<int, Action> acts;
    acts[3] = {ActionKind::switch_coalition, {}, 4, 2};
    auto events = apply_actions(agents, acts);
    REQUIRE(events.empty());
  }
}

TEST_CASE("severed edges are the complement of active edges", "[agents]") {
  InverterState st = make_agent(5, {2, 7, 9}, {7});
  REQUIRE(st.severed_edges() == std::vector<int>{2, 9});
  st.active.insert(2);
  st.active.insert(9);
  REQUIRE(st.severed_edges().empty());
}

TEST_CASE("topology invariants catch corrupted state", "[agents]") {
  AgentMap agents;
  agents[1] = make_agent(1, {2}, {2});
  agents[2] = make_agent(2, {1, 3}, {1});
  agents[3] = make_agent(3, {2}, {});
  REQUIRE_NOTHROW(validate_topology(agents));

  SECTION("one-sided active edge") {
    agents.at(2).active.insert(3);  // 3 does not reciprocate
    REQUIRE_THROWS_AS(validate_topology(agents), Error);
  }
  SECTION("active edge outside the comm tree") {
    agents.at(1).active.insert(3);
    agents.at(3).active.insert(1);
    REQUIRE_THROWS_AS(validate_topology(agents), Error);
  }
  SECTION("cycle in the active subgraph") {
    // Make 1-2-3-1 all comm edges, then activate the full triangle.
    agents[1] = make_agent(1, {2, 3}, {2, 3});
    agents[2] = make_agent(2, {1, 3}, {1, 3});
    agents[3] = make_agent(3, {1, 2}, {1, 2});
    REQUIRE_THROWS_AS(validate_topology(agents), Error);
  }
}
