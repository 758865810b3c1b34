#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "upn/bargain_central.hpp"
#include "upn/standalone.hpp"

using namespace upn;
using namespace upn::central;
using Catch::Approx;

namespace {

Scenario single_user_scenario() {
  std::map<int, topology::Position> pos{{7, {0.0, 0.0}}};
  Scenario sc;
  sc.graph = topology::build_graph(pos, 30.0, 2, {});
  auto u = test::basic_profile(7, 2);
  u.cellular_capacity = 5.0;
  u.utility_weight = 1.0;
  u.currency_weight = 0.5;
  u.currency_budget = 2.0;
  sc.users = {u};
  sc.gamma = 0.25;
  sc.link_energy = economics::build_link_energies(sc.graph, sc.energy_model);
  sc.validate();
  return sc;
}

// Gateway/client pair used for the brute-force comparison.
Scenario gateway_client_scenario() {
  auto sc = test::two_user_scenario(5.0, 1);
  sc.users[0].cellular_capacity = 5.0;
  sc.users[0].utility_weight = 1.0;
  sc.users[1].utility_weight = 2.0;
  sc.users[0].currency_budget = 0.0;
  sc.users[1].currency_budget = 0.0;
  sc.gamma = 0.5;
  sc.validate();
  return sc;
}

}  // namespace

TEST_CASE("single user reduces to the SOP plus participation reward", "[central]") {
  auto sc = single_user_scenario();
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  REQUIRE(out.nash_factor.size() == 1);
  // factor = beta*gamma, objective = ln(beta*gamma)
  CHECK(out.nash_factor[0] == Approx(0.5 * 0.25).margin(1e-5));
  CHECK(out.objective == Approx(std::log(0.5 * 0.25)).margin(1e-4));
  auto sop = standalone::solve_sop(sc.users[0], sc.period_s, sc.solver);
  CHECK(out.allocation.y_cell(0, 0) == Approx(sop.y_cell_own).margin(1e-3));
  CHECK(out.residuals.feasible);
}

TEST_CASE("mirrored users obtain equal payoffs", "[central]") {
  auto sc = test::two_user_scenario(6.0, 1);
  for (auto& u : sc.users) {
    u.cellular_capacity = 4.0;
    u.utility_weight = 1.0;
  }
  sc.validate();
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  Real w0 = out.payoff_j[0] + out.currency_h[0];
  Real w1 = out.payoff_j[1] + out.currency_h[1];
  CHECK(std::abs(w0 - w1) <= 1e-4);
  CHECK(out.residuals.feasible);
}

TEST_CASE("gateway-client solution matches a brute-force grid", "[central]") {
  auto sc = gateway_client_scenario();
  auto& g = sc.graph;
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  REQUIRE(out.residuals.feasible);

  LinkIx l01 = g.link_at(0, 1);
  const Real cap = g.cap[l01][0];
  const Real K = sc.currency_cap();
  const Real T = sc.period_s;
  // Decision triple: gateway's own download a, relayed rate x (=download for
  // the client by flow conservation), client's payment z.
  auto value = [&](Real a, Real x, Real z) {
    if (a + x > sc.users[0].cellular_capacity || x > cap) return -kInf;
    economics::Allocation al(g, 2);
    al.y_cell(0, 0) = a;
    al.y_cell(0, 1) = x;
    al.x(l01, 0, 1) = x;
    al.z(l01, 1) = z;
    Real j0 = economics::payoff(g, al, sc.users[0], sc.link_energy, 0, T);
    Real h0 = economics::currency_balance(g, al, sc.users[0], 0, sc.gamma);
    Real j1 = economics::payoff(g, al, sc.users[1], sc.link_energy, 1, T);
    Real h1 = economics::currency_balance(g, al, sc.users[1], 1, sc.gamma);
    Real g0 = j0 + h0 - js[0];
    Real g1 = j1 + h1 - js[1];
    if (g0 <= 0.0 || g1 <= 0.0) return -kInf;
    return std::log(g0) + std::log(g1);
  };
  Real la = 0, ha = sc.users[0].cellular_capacity;
  Real lx = 0, hx = std::min(cap, sc.users[0].cellular_capacity);
  Real lz = 0, hz = std::min(K, sc.users[1].currency_budget + sc.gamma);
  Real ba = 0, bx = 0, bz = 0;
  Real step = 0.05;
  for (int stage = 0; stage < 3; ++stage) {
    Real best = -kInf;
    for (Real a = la; a <= ha + 1e-12; a += step)
      for (Real x = lx; x <= hx + 1e-12; x += step)
        for (Real z = lz; z <= hz + 1e-12; z += step * 0.2) {
          Real v = value(a, x, z);
          if (v > best) {
            best = v;
            ba = a;
            bx = x;
            bz = z;
          }
        }
    la = std::max(0.0, ba - step);
    ha = std::min(sc.users[0].cellular_capacity, ba + step);
    lx = std::max(0.0, bx - step);
    hx = std::min(std::min(cap, sc.users[0].cellular_capacity), bx + step);
    lz = std::max(0.0, bz - step * 0.2);
    hz = std::min(std::min(K, sc.users[1].currency_budget + sc.gamma), bz + step * 0.2);
    step /= 10.0;
  }
  INFO("grid (a,x,z) = " << ba << ", " << bx << ", " << bz);
  CHECK(out.allocation.x(l01, 0, 1) == Approx(bx).margin(5e-3));
  CHECK(out.allocation.z(l01, 1) == Approx(bz).margin(5e-3));
  CHECK(out.allocation.y_cell(0, 0) == Approx(ba).margin(5e-3));
  CHECK(out.objective >= value(ba, bx, bz) - 1e-6);
}

TEST_CASE("individual rationality holds strictly at the solution", "[central]") {
  auto sc = gateway_client_scenario();
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  for (UserIx i = 0; i < 2; ++i) CHECK(out.nash_factor[i] > 0.0);
  CHECK(out.residuals.family_max("ir") < 0.0);
}

TEST_CASE("scale covariance leaves the allocation unchanged", "[central]") {
  auto sc = gateway_client_scenario();
  auto js = standalone::standalone_payoffs(sc);
  auto base = solve_bop(sc, js);
  auto scaled = solve_bop(sc, js, {3.7, 0.4});
  auto& g = sc.graph;
  Real max_diff = 0.0;
  for (LinkIx l = 0; l < g.num_links(); ++l)
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < 2; ++n)
        max_diff = std::max(max_diff,
                            std::abs(base.allocation.x(l, f, n) - scaled.allocation.x(l, f, n)));
  for (UserIx i = 0; i < 2; ++i)
    for (UserIx n = 0; n < 2; ++n)
      max_diff = std::max(
          max_diff, std::abs(base.allocation.y_cell(i, n) - scaled.allocation.y_cell(i, n)));
  for (LinkIx l = 0; l < g.num_links(); ++l)
    for (UserIx n = 0; n < 2; ++n)
      max_diff =
          std::max(max_diff, std::abs(base.allocation.z(l, n) - scaled.allocation.z(l, n)));
  CHECK(max_diff <= 1e-4);
  // same maximizer, so the unscaled objective agrees too
  CHECK(base.objective == Approx(scaled.objective).margin(1e-6));
}

TEST_CASE("no single-coordinate move improves one factor for free", "[central]") {
  auto sc = gateway_client_scenario();
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  auto& g = sc.graph;
  const Real h = 1e-4;
  // Pareto probe: perturb each primal coordinate; if any factor rises, some
  // other factor (or feasibility) must fall.
  auto factors = [&](const economics::Allocation& a) {
    std::vector<Real> f;
    for (UserIx i = 0; i < 2; ++i) {
      Real j = economics::payoff(g, a, sc.users[i], sc.link_energy, i, sc.period_s);
      Real hh = economics::currency_balance(g, a, sc.users[i], i, sc.gamma);
      f.push_back(j + hh - js[i] - sc.users[i].currency_weight * sc.users[i].currency_budget);
    }
    return f;
  };
  auto base_f = factors(out.allocation);
  LinkIx l01 = g.link_at(0, 1);
  int probes = 0;
  // Flow-conserving probe directions: own consumption shift, relayed-rate
  // shift (download and forward move together), payment shift.
  for (Real dir : {+h, -h}) {
    for (int what = 0; what < 3; ++what) {
      auto a = out.allocation;
      if (what == 0) a.y_cell(0, 0) += dir;
      if (what == 1) {
        a.y_cell(0, 1) += dir;
        a.x(l01, 0, 1) += dir;
      }
      if (what == 2) a.z(l01, 1) += dir;
      auto rep = constraints::full_report(sc, a, js, 1e-9, false);
      if (!rep.feasible) continue;  // probe left the polytope
      auto f = factors(a);
      if (f[0] <= 0.0 || f[1] <= 0.0) continue;
      bool someone_up = f[0] > base_f[0] + 1e-9 || f[1] > base_f[1] + 1e-9;
      bool someone_down = f[0] < base_f[0] - 1e-12 || f[1] < base_f[1] - 1e-12;
      if (someone_up) CHECK(someone_down);
      ++probes;
    }
  }
  CHECK(probes > 0);
}

TEST_CASE("kkt report is tight at the optimum and degrades off it", "[central]") {
  auto sc = gateway_client_scenario();
  auto js = standalone::standalone_payoffs(sc);
  auto out = solve_bop(sc, js);
  auto rep = kkt_report(sc, out, js);
  CHECK(rep.stationarity <= 1e-5);
  CHECK(rep.primal_feasibility <= 1e-7);
  CHECK(rep.complementarity <= 1e-5);
  // off-optimum: nash objective strictly below, and the zero allocation on a
  // nontrivial scenario is far from stationary (objective gap is large)
  auto perturbed = out.allocation;
  LinkIx l01 = sc.graph.link_at(0, 1);
  perturbed.x(l01, 0, 1) *= 1.1;
  perturbed.y_cell(0, 1) *= 1.1;  // keep flow conservation
  Real obj_perturbed = nash_objective(sc, perturbed, js);
  CHECK(obj_perturbed < out.objective);
}
