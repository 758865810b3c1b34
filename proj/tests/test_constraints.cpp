#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "upn/constraints.hpp"
#include "upn/standalone.hpp"

using namespace upn;
using namespace upn::constraints;
using Catch::Approx;

TEST_CASE("node radio residual is -k at rest and 0 at one full airtime", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  economics::Allocation a(g, 2);
  CHECK(node_radio_residual(g, a, 0, sc.users[0]) == Approx(-1.0));
  LinkIx l = g.link_at(0, 1);
  a.x(l, 0, 1) = g.cap[l][0];  // saturates the single link/channel
  CHECK(node_radio_residual(g, a, 0, sc.users[0]) == Approx(0.0).margin(1e-12));
}

TEST_CASE("interference residual counts the neighborhood airtime", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  economics::Allocation a(g, 2);
  CHECK(interference_residual(g, a, sc.users, 0, 1, 0) == Approx(-1.0));
  LinkIx l = g.link_at(0, 1);
  a.x(l, 0, 1) = g.cap[l][0];
  CHECK(interference_residual(g, a, sc.users, 0, 1, 0) == Approx(0.0).margin(1e-12));
}

TEST_CASE("link channel residual couples channels of one link", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 2);
  auto& g = sc.graph;
  economics::Allocation a(g, 2);
  CHECK(link_channel_residual(g, a, 0, 1) == Approx(-1.0));
  LinkIx l = g.link_at(0, 1);
  a.x(l, 0, 1) = 0.5 * g.cap[l][0];
  a.x(l, 1, 1) = 0.5 * g.cap[l][1];
  CHECK(link_channel_residual(g, a, 0, 1) == Approx(0.0).margin(1e-12));
}

TEST_CASE("internet access residuals at rest and at saturation", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  economics::Allocation a(g, 2);
  auto r = internet_access_residuals(a, sc.users[0], 0);
  CHECK(r.wifi == Approx(-1.0));
  CHECK(r.cell == Approx(-sc.users[0].cellular_capacity));
  a.y_cell(0, 0) = sc.users[0].cellular_capacity;
  r = internet_access_residuals(a, sc.users[0], 0);
  CHECK(r.cell == Approx(0.0).margin(1e-12));
  (void)g;
}

TEST_CASE("flow conservation detects forwarding without source", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  economics::Allocation a(g, 2);
  CHECK(flow_conservation_residual(g, a, 0, 1) == 0.0);
  a.y_cell(0, 1) = 2.0;
  LinkIx l = g.link_at(0, 1);
  a.x(l, 0, 1) = 2.0;
  CHECK(flow_conservation_residual(g, a, 0, 1) == Approx(0.0).margin(1e-12));
  a.y_cell(0, 1) = 0.0;  // now forwards what it never received
  CHECK(flow_conservation_residual(g, a, 0, 1) == Approx(-2.0));
  CHECK_THROWS_AS(flow_conservation_residual(g, a, 0, 0), DomainError);
}

TEST_CASE("budget residual tracks net payments", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  auto u = sc.users[0];
  u.currency_budget = 3.0;
  economics::Allocation a(g, 2);
  const Real gamma = 0.5;
  CHECK(budget_residual(g, a, u, 0, gamma) == Approx(-3.5));
  a.z(g.link_at(1, 0), 0) = 3.5;  // pays upstream exactly D+gamma
  CHECK(budget_residual(g, a, u, 0, gamma) == Approx(0.0).margin(1e-12));
}

TEST_CASE("ir residual equals -beta*gamma without internet access", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  auto u = sc.users[1];  // client: no internet in this scenario
  REQUIRE(!u.has_cellular());
  REQUIRE(!u.has_any_wifi());
  Real js = standalone::solve_sop(u, sc.period_s).payoff;
  economics::Allocation a(g, 2);
  Real res = ir_residual(g, a, u, sc.link_energy, 1, sc.gamma, sc.period_s, js);
  CHECK(res == Approx(-u.currency_weight * sc.gamma).margin(1e-12));
}

TEST_CASE("residuals are affine with the analytic slopes", "[constraints]") {
  Rng rng(77);
  auto g = test::random_graph(4, 2, rng);
  std::vector<economics::UserProfile> users;
  for (int i = 0; i < g.n(); ++i) users.push_back(test::basic_profile(i, 2));
  auto a = test::random_allocation(g, rng, 0.05);
  const Real h = 1e-3;
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    for (UserIx n = 0; n < g.n(); ++n) {
      if (n == i) continue;
      Real base = a.x(l, 0, n);
      a.x(l, 0, n) = base + h;
      Real up = node_radio_residual(g, a, i, users[i]);
      Real upl = link_channel_residual(g, a, i, j);
      a.x(l, 0, n) = base;
      Real at = node_radio_residual(g, a, i, users[i]);
      Real atl = link_channel_residual(g, a, i, j);
      CHECK((up - at) / h == Approx(1.0 / g.cap[l][0]).epsilon(1e-9));
      CHECK((upl - atl) / h == Approx(1.0 / g.cap[l][0]).epsilon(1e-9));
    }
  }
}

TEST_CASE("random allocations match the enumeration oracle", "[constraints]") {
  Rng rng(99);
  auto g = test::random_graph(5, 2, rng);
  std::vector<economics::UserProfile> users;
  for (int i = 0; i < g.n(); ++i) users.push_back(test::basic_profile(i, 2));
  auto a = test::random_allocation(g, rng, 0.1);
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    for (int f = 0; f < 2; ++f) {
      // oracle: scan every link against the brute membership condition
      Real load = 0.0;
      for (LinkIx m = 0; m < g.num_links(); ++m) {
        auto [am, bm] = g.links[m];
        auto touches = [&](UserIx v, UserIx w) {
          auto& s = g.nbr[w].ext_nbhd;
          return std::binary_search(s.begin(), s.end(), v);
        };
        bool member = m != l && (touches(am, i) || touches(am, j) || touches(bm, i) ||
                                 touches(bm, j));
        if (member || m == l)
          for (UserIx n = 0; n < g.n(); ++n) load += a.x(m, f, n) / g.cap[m][f];
      }
      CHECK(interference_residual(g, a, users, i, j, f) == Approx(load - 1.0).margin(1e-9));
    }
  }
}

TEST_CASE("full report: zero allocation, violations, monotone shrink", "[constraints]") {
  auto sc = test::two_user_scenario(5.0, 1);
  auto& g = sc.graph;
  economics::Allocation zero(g, 2);
  // All families except IR are satisfied at rest (IR needs the SOP-embedded point).
  auto rep = constraints::full_report(sc, zero, {}, 1e-6, false);
  CHECK(rep.feasible);
  CHECK(rep.max_violation <= 0.0);

  economics::Allocation bad(g, 2);
  LinkIx l = g.link_at(0, 1);
  bad.x(l, 0, 1) = 2.0 * g.cap[l][0];  // above capacity
  auto rep2 = constraints::full_report(sc, bad, {}, 1e-6, false);
  CHECK(!rep2.feasible);
  CHECK(rep2.family_max("box") > 0.0);
  CHECK(rep2.family_max("flow_conservation") > 0.0);

  // shrinking entries never breaks a satisfied inequality family
  Rng rng(7);
  auto a = test::random_allocation(g, rng, 0.2);
  auto before = constraints::full_report(sc, a, {}, 1e-6, false);
  for (UserIx n = 0; n < 2; ++n) a.x(l, 0, n) *= 0.5;
  auto after = constraints::full_report(sc, a, {}, 1e-6, false);
  for (auto name : {"node_radio", "interference", "link_channel", "internet_wifi",
                    "internet_cell", "box"})
    CHECK(after.family_max(name) <= before.family_max(name) + 1e-12);
}

TEST_CASE("SOP-embedded allocation is feasible including IR", "[constraints]") {
  Rng rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    auto g = test::random_graph(4, 2, rng);
    Scenario sc;
    sc.graph = g;
    for (int i = 0; i < g.n(); ++i) {
      auto u = test::basic_profile(i, 2);
      if (i % 2 == 0) u.cellular_capacity = 4.0 + i;
      sc.users.push_back(u);
    }
    sc.link_energy = economics::build_link_energies(g, sc.energy_model);
    sc.validate();
    std::vector<Real> js;
    economics::Allocation a(g, g.n());
    for (int i = 0; i < g.n(); ++i) {
      auto sop = standalone::solve_sop(sc.users[i], sc.period_s, sc.solver);
      js.push_back(sop.payoff);
      a.y_cell(i, i) = sop.y_cell_own;
      for (int f = 0; f < 2; ++f) a.y_wifi(i, f, i) = sop.y_wifi_own[f];
    }
    auto rep = constraints::full_report(sc, a, js, 1e-6, true);
    INFO("max violation " << rep.max_violation);
    CHECK(rep.feasible);
    // strictly inside IR thanks to the participation reward
    CHECK(rep.family_max("ir") <= -0.9 * sc.users[0].currency_weight * sc.gamma + 1e-9);
  }
}
