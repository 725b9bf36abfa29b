#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "voltcoal/comms.hpp"

using namespace voltcoal;

namespace {

CommGraph star() {
  return CommGraph({1, 2, 3, 4}, {{1, 2}, {2, 3}, {2, 4}});
}

Envelope make_env(int from, int to, std::int64_t sent, double u = 0.0) {
  Envelope e;
  e.from = from;
  e.to = to;
  e.sent_tick = sent;
  e.payload.u = u;
  return e;
}

// Slack 1 feeding a chain 2-3-4-5 with a branch 2-6-7.
NetworkModel branched_net() {
  NetworkModel net;
  for (int id = 1; id <= 7; ++id) {
    Bus b;
    b.id = id;
    b.kind = (id == 1) ? BusKind::slack : BusKind::load;
    net.buses.push_back(b);
  }
  auto line = [&net](int a, int b) { net.lines.push_back(Line{a, b, 0.01, 0.005}); };
  line(1, 2);
  line(2, 3);
  line(3, 4);
  line(4, 5);
  line(2, 6);
  line(6, 7);
  return net;
}

}  // namespace

TEST_CASE("comm graph construction and queries", "[comms]") {
  CommGraph g = star();
  REQUIRE(g.node_count() == 4);
  REQUIRE(g.nodes() == std::vector<int>{1, 2, 3, 4});
  REQUIRE(g.neighbors(2) == std::vector<int>{1, 3, 4});
  REQUIRE(g.has_edge(1, 2));
  REQUIRE(g.has_edge(2, 1));
  REQUIRE_FALSE(g.has_edge(1, 3));
  REQUIRE_FALSE(g.has_edge(99, 1));
  REQUIRE(g.edges() == std::vector<std::pair<int, int>>{{1, 2}, {2, 3}, {2, 4}});
  REQUIRE_THROWS_WITH(g.neighbors(99), Catch::Matchers::ContainsSubstring("unknown"));

  CommGraph empty;
  REQUIRE(empty.node_count() == 0);
}

TEST_CASE("comm graph rejects non-trees", "[comms]") {
  SECTION("duplicate node") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2, 2}, {{1, 2}}),
                        Catch::Matchers::ContainsSubstring("duplicate comm node"));
  }
  SECTION("self edge") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2}, {{1, 1}, {1, 2}}),
                        Catch::Matchers::ContainsSubstring("self edge"));
  }
  SECTION("edge to unknown node") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2}, {{1, 3}}),
                        Catch::Matchers::ContainsSubstring("unknown node"));
  }
  SECTION("duplicate edge, either orientation") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2, 3}, {{1, 2}, {2, 1}}),
                        Catch::Matchers::ContainsSubstring("duplicate comm edge"));
  }
  SECTION("wrong edge count") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2, 3, 4}, {{1, 2}, {3, 4}}),
                        Catch::Matchers::ContainsSubstring("not a tree"));
  }
  SECTION("right edge count, disconnected") {
    REQUIRE_THROWS_WITH(CommGraph({1, 2, 3, 4}, {{1, 2}, {2, 3}, {3, 1}}),
                        Catch::Matchers::ContainsSubstring("not connected"));
  }
}

TEST_CASE("delivery honors latency exactly", "[comms]") {
  CommGraph g = star();
  std::vector<LinkFault> no_faults;

  SECTION("latency one") {
    std::vector<Envelope> pending{make_env(1, 2, 0, 0.5)};
    auto at0 = deliver_round(g, no_faults, pending, 0, 1);
    REQUIRE(at0.empty());
    REQUIRE(pending.size() == 1);
    auto at1 = deliver_round(g, no_faults, pending, 1, 1);
    REQUIRE(at1.size() == 1);
    REQUIRE(at1[0].from == 1);
    REQUIRE(at1[0].payload.u == 0.5);
    REQUIRE(pending.empty());
  }
  SECTION("latency three holds envelopes until due") {
    std::vector<Envelope> pending{make_env(2, 3, 5)};
    for (std::int64_t now : {5, 6, 7}) {
      REQUIRE(deliver_round(g, no_faults, pending, now, 3).empty());
      REQUIRE(pending.size() == 1);
    }
    REQUIRE(deliver_round(g, no_faults, pending, 8, 3).size() == 1);
  }
  SECTION("stale envelopes are dropped, not delivered late") {
    std::vector<Envelope> pending{make_env(1, 2, 0)};
    REQUIRE(deliver_round(g, no_faults, pending, 2, 1).empty());
    REQUIRE(pending.empty());
  }
  SECTION("nothing crosses a non-edge") {
    std::vector<Envelope> pending{make_env(1, 3, 0)};
    REQUIRE(deliver_round(g, no_faults, pending, 1, 1).empty());
    REQUIRE(pending.empty());
  }
  SECTION("latency must be positive") {
    std::vector<Envelope> pending;
    REQUIRE_THROWS_AS(deliver_round(g, no_faults, pending, 0, 0), Error);
  }
}

TEST_CASE("faults drop envelopes at the delivery tick only", "[comms]") {
  CommGraph g = star();
  LinkFault f;
  f.a = 2;
  f.b = 1;  // stored reversed on purpose: matching is unordered
  f.start_tick = 5;
  f.end_tick = 8;  // exclusive

  REQUIRE(edge_faulted({f}, 1, 2, 5));
  REQUIRE(edge_faulted({f}, 1, 2, 7));
  REQUIRE_FALSE(edge_faulted({f}, 1, 2, 8));
  REQUIRE_FALSE(edge_faulted({f}, 1, 2, 4));
  REQUIRE_FALSE(edge_faulted({f}, 2, 3, 6));

  SECTION("delivery inside the fault window is lost") {
    std::vector<Envelope> pending{make_env(1, 2, 5)};
    REQUIRE(deliver_round(g, {f}, pending, 6, 1).empty());
    REQUIRE(pending.empty());
  }
  SECTION("sent during the fault but due after it, the envelope survives") {
    std::vector<Envelope> pending{make_env(1, 2, 7)};
    REQUIRE(deliver_round(g, {f}, pending, 8, 1).size() == 1);
  }
  SECTION("other edges are unaffected") {
    std::vector<Envelope> pending{make_env(2, 3, 5)};
    REQUIRE(deliver_round(g, {f}, pending, 6, 1).size() == 1);
  }
}

TEST_CASE("hourly fault schedule picks distinct edges", "[comms]") {
  CommGraph g({1, 2, 3, 4, 5}, {{1, 2}, {2, 3}, {3, 4}, {4, 5}});

  SECTION("fraction zero disables faults") {
    Rng rng(1);
    REQUIRE(generate_fault_schedule(g, 1000, 100, 0.0, 10, rng).empty());
  }
  SECTION("quarter of four edges is one per hour") {
    Rng rng(1);
    auto faults = generate_fault_schedule(g, 300, 100, 0.25, 10, rng);
    REQUIRE(faults.size() == 3);
    for (size_t i = 0; i < faults.size(); ++i) {
      REQUIRE(faults[i].start_tick == static_cast<std::int64_t>(i) * 100);
      REQUIRE(faults[i].end_tick == faults[i].start_tick + 10);
      REQUIRE(g.has_edge(faults[i].a, faults[i].b));
    }
  }
  SECTION("fraction one darkens every edge, each exactly once per hour") {
    Rng rng(7);
    auto faults = generate_fault_schedule(g, 100, 100, 1.0, 10, rng);
    REQUIRE(faults.size() == 4);
    std::set<std::pair<int, int>> seen;
    for (const LinkFault& f : faults)
      seen.insert({std::min(f.a, f.b), std::max(f.a, f.b)});
    REQUIRE(seen.size() == 4);
  }
  SECTION("fault end clamps to the run length") {
    Rng rng(1);
    auto faults = generate_fault_schedule(g, 110, 100, 0.25, 1000, rng);
    REQUIRE(faults.size() == 2);
    REQUIRE(faults[0].end_tick == 110);
    REQUIRE(faults[1].end_tick == 110);
  }
  SECTION("same seed gives the same schedule") {
    Rng a(3), b(3);
    auto fa = generate_fault_schedule(g, 500, 100, 0.5, 10, a);
    auto fb = generate_fault_schedule(g, 500, 100, 0.5, 10, b);
    REQUIRE(fa.size() == fb.size());
    for (size_t i = 0; i < fa.size(); ++i) {
      REQUIRE(fa[i].a == fb[i].a);
      REQUIRE(fa[i].b == fb[i].b);
    }
  }
  SECTION("fraction outside [0,1] is rejected") {
    Rng rng(1);
    REQUIRE_THROWS_AS(generate_fault_schedule(g, 100, 100, -0.1, 10, rng), Error);
    REQUIRE_THROWS_AS(generate_fault_schedule(g, 100, 100, 1.5, 10, rng), Error);
  }
}

TEST_CASE("fault schedule csv round-trips", "[comms]") {
  std::vector<LinkFault> faults;
  LinkFault f;
  f.a = 3;
  f.b = 9;
  f.start_tick = 50;
  f.end_tick = 125;
  faults.push_back(f);

  std::ostringstream out;
  save_fault_schedule(faults, 0.2, out);
  std::istringstream in(out.str());
  auto loaded = load_fault_schedule(in, 0.2, "test");
  REQUIRE(loaded.size() == 1);
  REQUIRE(loaded[0].a == 3);
  REQUIRE(loaded[0].b == 9);
  REQUIRE(loaded[0].start_tick == 50);
  REQUIRE(loaded[0].end_tick == 125);

  SECTION("comments and blank lines are skipped") {
    std::istringstream bad("# note\n\n1,2,0.0,1.0\n");
    auto fs = load_fault_schedule(bad, 0.5, "test");
    REQUIRE(fs.size() == 1);
    REQUIRE(fs[0].end_tick == 2);
  }
  SECTION("wrong column count") {
    std::istringstream bad("1,2,0.0\n");
    REQUIRE_THROWS_WITH(load_fault_schedule(bad, 0.2, "test"),
                        Catch::Matchers::ContainsSubstring("expected edge_from"));
  }
  SECTION("end before start") {
    std::istringstream bad("1,2,5.0,5.0\n");
    REQUIRE_THROWS_WITH(load_fault_schedule(bad, 0.2, "test"),
                        Catch::Matchers::ContainsSubstring("end_s must exceed"));
  }
  SECTION("missing file") {
    REQUIRE_THROWS_WITH(load_fault_schedule_file("/nonexistent/f.csv", 0.2),
                        Catch::Matchers::ContainsSubstring("cannot open"));
  }
}

TEST_CASE("comm tree links inverters past non-inverter buses", "[comms]") {
  NetworkModel net = branched_net();

  SECTION("nearest-inverter linking plus head chaining") {
    CommGraph g = comm_graph_from_network(net, {3, 5, 6, 7});
    REQUIRE(g.node_count() == 4);
    // 5's path to the root meets inverter 3 first; 7 meets 6.
    REQUIRE(g.has_edge(5, 3));
    REQUIRE(g.has_edge(7, 6));
    // 3 and 6 both reach the root without passing an inverter: chained by id.
    REQUIRE(g.has_edge(3, 6));
    REQUIRE_FALSE(g.has_edge(5, 7));
    REQUIRE_FALSE(g.has_edge(5, 6));
    REQUIRE_FALSE(g.has_edge(3, 7));
  }
  SECTION("two isolated heads get chained") {
    CommGraph g = comm_graph_from_network(net, {4, 7});
    REQUIRE(g.node_count() == 2);
    REQUIRE(g.has_edge(4, 7));
  }
  SECTION("a nested run forms a chain") {
    CommGraph g = comm_graph_from_network(net, {2, 3, 4});
    REQUIRE(g.has_edge(3, 2));
    REQUIRE(g.has_edge(4, 3));
    REQUIRE_FALSE(g.has_edge(4, 2));
  }
  SECTION("single inverter yields a one-node graph") {
    CommGraph g = comm_graph_from_network(net, {5});
    REQUIRE(g.node_count() == 1);
    REQUIRE(g.neighbors(5).empty());
  }
}
