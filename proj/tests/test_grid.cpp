#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "voltcoal/grid.hpp"

using namespace voltcoal;

namespace {

NetworkModel make_two_bus(double r_ohm, double x_ohm) {
  NetworkModel net;
  net.v_base = 230.0;
  net.s_base_kva = 1000.0;
  Bus slack;
  slack.id = 1;
  slack.kind = BusKind::slack;
  Bus load;
  load.id = 2;
  net.buses = {slack, load};
  net.lines = {{1, 2, r_ohm, x_ohm}};
  return net;
}

// Exact magnitude at the load bus of a two-bus feeder.  With slack voltage
// v0 (real), series impedance z = r + jx (p.u.) and complex injection
// s = p + jq (p.u., generation positive), the fixed point V = v0 + z*conj(s)/conj(V)
// gives a quadratic in t = |V|^2:
//   t^2 - (2A + v0^2) t + (A^2 + B^2) = 0,  A = r p + x q,  B = x p - r q,
// whose larger root is the operating (high-voltage) solution.
double two_bus_vmag(double v0, double r, double x, double p, double q) {
  const double a = r * p + x * q;
  const double b = x * p - r * q;
  const double half = 0.5 * (2.0 * a + v0 * v0);
  const double disc = half * half - (a * a + b * b);
  REQUIRE(disc > 0.0);
  return std::sqrt(half + std::sqrt(disc));
}

// Analytic d|V|/dq of the same closed form.
double two_bus_dv_dq(double v0, double r, double x, double p, double q) {
  const double a = r * p + x * q;
  const double b = x * p - r * q;
  const double twoa = 2.0 * a + v0 * v0;
  const double disc = twoa * twoa - 4.0 * (a * a + b * b);
  const double t = 0.5 * (twoa + std::sqrt(disc));
  const double dt = x + (x * v0 * v0 + 2.0 * b * r) / std::sqrt(disc);
  return dt / (2.0 * std::sqrt(t));
}

}  // namespace

TEST_CASE("two-bus feeder matches the closed-form magnitude", "[grid]") {
  const double r_ohm = 0.05, x_ohm = 0.03;
  NetworkModel net = make_two_bus(r_ohm, x_ohm);
  const double zb = net.z_base();
  REQUIRE(zb == Catch::Approx(3.0 * 230.0 * 230.0 / 1e6));

  struct Case {
    double p_kw, q_kvar, v0;
  };
  for (const Case& c : {Case{-150.0, -49.5, 1.0}, Case{-300.0, 40.0, 0.99},
                        Case{120.0, 25.0, 1.03}, Case{0.0, -80.0, 1.0}}) {
    std::vector<cplx> inj(2, cplx(0.0, 0.0));
    inj[1] = cplx(c.p_kw / net.s_base_kva, c.q_kvar / net.s_base_kva);
    PowerFlowSolution sol = solve_power_flow(net, inj, c.v0);
    REQUIRE(sol.converged);
    const double want =
        two_bus_vmag(c.v0, r_ohm / zb, x_ohm / zb, inj[1].real(), inj[1].imag());
    REQUIRE(sol.v_mag[1] == Catch::Approx(want).margin(1e-6));
    REQUIRE(sol.v_mag[0] == c.v0);
  }
}

TEST_CASE("zero injection gives exactly flat voltage", "[grid]") {
  NetworkModel net = make_two_bus(0.05, 0.03);
  std::vector<cplx> inj(2, cplx(0.0, 0.0));
  PowerFlowSolution sol = solve_power_flow(net, inj, 1.02);
  REQUIRE(sol.converged);
  REQUIRE(sol.v_mag[0] == 1.02);
  REQUIRE(sol.v_mag[1] == 1.02);
  REQUIRE(sol.v_ang[1] == 0.0);
  REQUIRE(std::abs(sol.slack_power) == 0.0);
}

TEST_CASE("slack power balances injections plus line losses", "[grid]") {
  // Four-bus Y: slack-2, 2-3, 2-4.
  NetworkModel net;
  Bus b1;
  b1.id = 1;
  b1.kind = BusKind::slack;
  Bus b2, b3, b4;
  b2.id = 2;
  b3.id = 3;
  b3.load_p_kw = 200.0;
  b3.load_q_kvar = 66.0;
  b4.id = 4;
  b4.pv_p_kw = 90.0;
  net.buses = {b1, b2, b3, b4};
  net.lines = {{1, 2, 0.02, 0.015}, {2, 3, 0.04, 0.02}, {2, 4, 0.03, 0.02}};

  PowerFlowSolution sol = solve_power_flow(net, net_injections(net), 1.0);
  REQUIRE(sol.converged);

  // Independent loss computation from the solved voltages: branch currents by
  // Ohm's law, losses = sum |I|^2 z.
  const double zb = net.z_base();
  cplx loss(0.0, 0.0);
  for (const Line& ln : net.lines) {
    cplx zf(ln.r_ohm / zb, ln.x_ohm / zb);
    cplx vi = sol.v(net.index_of(ln.from));
    cplx vj = sol.v(net.index_of(ln.to));
    cplx cur = (vi - vj) / zf;
    loss += zf * std::norm(cur);
  }
  cplx total_inj(0.0, 0.0);
  for (const cplx& s : sol.injections) total_inj += s;
  // Power entering from the slack + net injections = losses.
  cplx residual = sol.slack_power + total_inj - loss;
  REQUIRE(std::abs(residual) < 1e-6);
}

TEST_CASE("warm start converges to the cold-start solution", "[grid]") {
  NetworkModel net = make_two_bus(0.05, 0.03);
  PowerFlowEngine engine(net);
  std::vector<cplx> inj(2, cplx(0.0, 0.0));
  inj[1] = cplx(-0.25, -0.08);
  PowerFlowSolution cold = engine.solve(inj, 1.0, false);
  // Perturb slightly, then return to the original injections warm.
  inj[1] = cplx(-0.26, -0.08);
  engine.solve(inj, 1.0, true);
  inj[1] = cplx(-0.25, -0.08);
  PowerFlowSolution warm = engine.solve(inj, 1.0, true);
  REQUIRE(cold.converged);
  REQUIRE(warm.converged);
  REQUIRE(warm.v_mag[1] == Catch::Approx(cold.v_mag[1]).margin(1e-7));
  REQUIRE(warm.iterations <= cold.iterations);
}

TEST_CASE("power flow flags infeasible loading instead of lying", "[grid]") {
  NetworkModel net = make_two_bus(0.5, 0.3);
  std::vector<cplx> inj(2, cplx(0.0, 0.0));
  inj[1] = cplx(-50.0, -20.0);  // far beyond the deliverable power
  PowerFlowSolution sol = solve_power_flow(net, inj, 1.0);
  REQUIRE_FALSE(sol.converged);
}

TEST_CASE("structural validation rejects malformed networks", "[grid]") {
  NetworkModel net = make_two_bus(0.05, 0.03);

  SECTION("wrong line count") {
    net.lines.push_back({1, 2, 0.01, 0.01});
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("duplicate bus id") {
    net.buses[1].id = 1;
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("two slack buses") {
    net.buses[1].kind = BusKind::slack;
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("no slack bus") {
    net.buses[0].kind = BusKind::load;
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("line to unknown bus") {
    net.lines[0].to = 99;
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("zero impedance line") {
    net.lines[0].r_ohm = 0.0;
    net.lines[0].x_ohm = 0.0;
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("disconnected graph") {
    Bus b3;
    b3.id = 3;
    Bus b4;
    b4.id = 4;
    net.buses.push_back(b3);
    net.buses.push_back(b4);
    // Keep the line count at n-1 so connectivity itself is what trips.
    net.lines.push_back({3, 4, 0.01, 0.01});
    net.lines.push_back({4, 3, 0.01, 0.01});
    REQUIRE_THROWS_AS(FeederTree(net), Error);
  }
  SECTION("slack setpoint out of range") {
    std::vector<cplx> inj(2, cplx(0.0, 0.0));
    REQUIRE_THROWS_AS(solve_power_flow(net, inj, 0.5), Error);
  }
  SECTION("injection vector size mismatch") {
    std::vector<cplx> inj(3, cplx(0.0, 0.0));
    REQUIRE_THROWS_AS(solve_power_flow(net, inj, 1.0), Error);
  }
}

TEST_CASE("voltage sensitivity matches the analytic derivative", "[grid]") {
  const double r_ohm = 0.05, x_ohm = 0.03;
  NetworkModel net = make_two_bus(r_ohm, x_ohm);
  const double zb = net.z_base();
  std::vector<cplx> inj(2, cplx(0.0, 0.0));
  inj[1] = cplx(-0.2, -0.066);
  PowerFlowSolution sol = solve_power_flow(net, inj, 1.0);
  REQUIRE(sol.converged);

  auto sens = voltage_sensitivity(net, sol, 2, {2});
  const double want =
      two_bus_dv_dq(1.0, r_ohm / zb, x_ohm / zb, inj[1].real(), inj[1].imag());
  REQUIRE(sens.size() == 1);
  REQUIRE(sens[0] == Catch::Approx(want).epsilon(1e-5));

  // Slack magnitude is pinned: sensitivity of the slack bus is exactly zero.
  auto zero = voltage_sensitivity(net, sol, 1, {2});
  REQUIRE(zero[0] == 0.0);
}

TEST_CASE("full coupling matrix is consistent with single sensitivities", "[grid]") {
  NetworkModel net;
  Bus b1;
  b1.id = 1;
  b1.kind = BusKind::slack;
  Bus b2, b3;
  b2.id = 2;
  b2.pv_p_kw = 50.0;
  b3.id = 3;
  b3.pv_p_kw = 30.0;
  b3.load_p_kw = 90.0;
  net.buses = {b1, b2, b3};
  net.lines = {{1, 2, 0.02, 0.012}, {2, 3, 0.03, 0.018}};
  PowerFlowSolution sol = solve_power_flow(net, net_injections(net), 1.0);
  REQUIRE(sol.converged);

  Matrix a = full_vq_sensitivity(net, sol);  // defaults to PV buses {2, 3}
  REQUIRE(a.rows == 2);
  REQUIRE(a.cols == 2);
  auto col2 = voltage_sensitivity(net, sol, 2, {2, 3});
  auto col3 = voltage_sensitivity(net, sol, 3, {2, 3});
  REQUIRE(a.at(0, 0) == Catch::Approx(col2[0]).margin(1e-12));
  REQUIRE(a.at(0, 1) == Catch::Approx(col2[1]).margin(1e-12));
  REQUIRE(a.at(1, 0) == Catch::Approx(col3[0]).margin(1e-12));
  REQUIRE(a.at(1, 1) == Catch::Approx(col3[1]).margin(1e-12));

  // Deeper injections move every downstream bus at least as much as shallow
  // ones move them (radial monotonicity), and all entries are positive.
  REQUIRE(a.at(1, 1) > a.at(1, 0));
  REQUIRE(a.at(0, 0) > 0.0);

  REQUIRE(pv_bus_ids(net) == std::vector<int>{2, 3});
}

TEST_CASE("feeder tree orders parents before children", "[grid]") {
  NetworkModel net;
  Bus b1;
  b1.id = 10;
  b1.kind = BusKind::slack;
  Bus b2, b3, b4;
  b2.id = 4;
  b3.id = 7;
  b4.id = 2;
  net.buses = {b2, b3, b1, b4};  // deliberately shuffled, slack not first
  net.lines = {{10, 4, 0.01, 0.01}, {4, 7, 0.01, 0.01}, {7, 2, 0.01, 0.01}};
  FeederTree tree(net);
  REQUIRE(tree.size() == 4);
  REQUIRE(tree.parent(0) == -1);
  for (int ord = 1; ord < 4; ++ord) REQUIRE(tree.parent(ord) < ord);
  REQUIRE(net.buses[static_cast<size_t>(tree.raw_of(0))].kind == BusKind::slack);
  // order_of_raw inverts raw_of
  for (int ord = 0; ord < 4; ++ord) REQUIRE(tree.order_of_raw(tree.raw_of(ord)) == ord);
}
