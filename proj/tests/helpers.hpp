#ifndef UPN_TESTS_HELPERS_HPP
#define UPN_TESTS_HELPERS_HPP

#include <map>
#include <vector>

#include "upn/common.hpp"
#include "upn/economics.hpp"
#include "upn/scenario_core.hpp"
#include "upn/topology.hpp"

namespace upn::test {

using economics::Allocation;
using economics::CellularCostMode;
using economics::UserProfile;
using topology::NetworkGraph;
using topology::Position;

inline UserProfile basic_profile(int id, int channels) {
  UserProfile u;
  u.id = id;
  u.nic_count = 1;
  u.wifi_capacity.assign(channels, 0.0);
  u.wifi_price.assign(channels, 0.0);
  u.cost_mode = CellularCostMode::kLinear;
  u.cellular_price = 0.002;
  u.energy_budget = 2000.0;
  u.energy_sensitivity = 0.5;
  u.utility_weight = 1.0;
  u.currency_weight = 0.5;
  u.currency_budget = 100.0;
  u.e_cell = 0.3;
  u.e_wifi = 0.15;
  return u;
}

/// Connected random geometric graph: positions resampled until connected.
inline NetworkGraph random_graph(int n, int channels, Rng& rng, Real side = 14.0) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    std::map<int, Position> pos;
    for (int i = 0; i < n; ++i) pos[i] = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
    std::map<std::tuple<int, int, int>, Real> bg;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j)
          for (int f = 0; f < channels; ++f) {
            Real b = rng.uniform(0.5, 1.0);
            bg[{i, j, f}] = b;
            bg[{j, i, f}] = b;  // symmetric channel quality
          }
    try {
      return topology::build_graph(pos, 30.0, channels, bg);
    } catch (const ScenarioError&) {
      continue;  // disconnected draw, resample
    }
  }
  throw ScenarioError("random_graph: could not draw a connected placement");
}

inline Allocation random_allocation(const NetworkGraph& g, Rng& rng, Real scale = 0.3) {
  Allocation a(g, g.n());
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [from, to] = g.links[l];
    (void)to;
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < g.n(); ++n)
        if (n != from) a.x(l, f, n) = rng.uniform() * scale * g.cap[l][f];
    for (UserIx n = 0; n < g.n(); ++n)
      if (n != from) a.z(l, n) = rng.uniform() * scale;
  }
  return a;
}

inline Scenario two_user_scenario(Real d = 5.0, int channels = 1) {
  std::map<int, Position> pos{{0, {0.0, 0.0}}, {1, {d, 0.0}}};
  std::map<std::tuple<int, int, int>, Real> bg;
  for (int f = 0; f < channels; ++f) {
    bg[{0, 1, f}] = 1.0;
    bg[{1, 0, f}] = 1.0;
  }
  Scenario sc;
  sc.graph = topology::build_graph(pos, 30.0, channels, bg);
  sc.users = {basic_profile(0, channels), basic_profile(1, channels)};
  sc.users[0].cellular_capacity = 8.0;
  sc.users[0].utility_weight = 1.0;
  sc.users[1].utility_weight = 2.0;  // client values data more
  sc.gamma = 0.01;
  sc.link_energy = economics::build_link_energies(sc.graph, sc.energy_model);
  sc.validate();
  return sc;
}

}  // namespace upn::test

#endif  // UPN_TESTS_HELPERS_HPP
