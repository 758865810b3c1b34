#ifndef UPN_CONSTRAINTS_HPP
#define UPN_CONSTRAINTS_HPP

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "upn/economics.hpp"
#include "upn/scenario_core.hpp"
#include "upn/topology.hpp"

// Every continuous-relaxation constraint evaluated as a signed residual:
// <= 0 means satisfied for inequality families, equality families report the
// signed imbalance.

namespace upn::constraints {

using economics::Allocation;
using economics::UserProfile;
using topology::NetworkGraph;

/// Node-radio airtime load minus k_i (Wi-Fi NIC budget).
inline Real node_radio_residual(const NetworkGraph& g, const Allocation& a, UserIx i,
                                const UserProfile& u) {
  Real load = 0.0;
  for (LinkIx l : g.in_links[i])
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < a.users(); ++n) load += a.x(l, f, n) / g.cap[l][f];
  for (LinkIx l : g.out_links[i])
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < a.users(); ++n) load += a.x(l, f, n) / g.cap[l][f];
  for (int f = 0; f < g.channel_count; ++f) {
    if (!u.has_wifi(f)) continue;
    for (UserIx n = 0; n < a.users(); ++n) load += a.y_wifi(i, f, n) / u.wifi_capacity[f];
  }
  return load - static_cast<Real>(u.nic_count);
}

/// Airtime in channel f around link (i,j): interfering links, the link itself,
/// and Wi-Fi Internet use at every extended neighbor of either endpoint.
inline Real interference_residual(const NetworkGraph& g, const Allocation& a,
                                  const std::vector<UserProfile>& users, UserIx i, UserIx j,
                                  ChannelIx f) {
  LinkIx l = g.link_at(i, j);
  Real load = 0.0;
  for (LinkIx m : g.intf_set[l])
    for (UserIx n = 0; n < a.users(); ++n) load += a.x(m, f, n) / g.cap[m][f];
  for (UserIx n = 0; n < a.users(); ++n) load += a.x(l, f, n) / g.cap[l][f];
  // Union of extended neighborhoods of both endpoints (includes i and j).
  std::vector<UserIx> hood = g.nbr[i].ext_nbhd;
  hood.insert(hood.end(), g.nbr[j].ext_nbhd.begin(), g.nbr[j].ext_nbhd.end());
  std::sort(hood.begin(), hood.end());
  hood.erase(std::unique(hood.begin(), hood.end()), hood.end());
  for (UserIx k : hood) {
    if (!users[k].has_wifi(f)) continue;
    for (UserIx n = 0; n < a.users(); ++n)
      load += a.y_wifi(k, f, n) / users[k].wifi_capacity[f];
  }
  return load - 1.0;
}

/// Per-link airtime across channels minus 1.
inline Real link_channel_residual(const NetworkGraph& g, const Allocation& a, UserIx i, UserIx j) {
  LinkIx l = g.link_at(i, j);
  Real load = 0.0;
  for (int f = 0; f < g.channel_count; ++f)
    for (UserIx n = 0; n < a.users(); ++n) load += a.x(l, f, n) / g.cap[l][f];
  return load - 1.0;
}

struct InternetResiduals {
  Real wifi;  // sum_f sum_n y^f/C^f - 1
  Real cell;  // sum_n y^c - C^c  (rate units)
};

inline InternetResiduals internet_access_residuals(const Allocation& a, const UserProfile& u,
                                                   UserIx i) {
  InternetResiduals r{-1.0, 0.0};
  Real wifi_load = 0.0;
  for (int f = 0; f < static_cast<int>(u.wifi_capacity.size()); ++f) {
    if (!u.has_wifi(f)) continue;
    for (UserIx n = 0; n < a.users(); ++n) wifi_load += a.y_wifi(i, f, n) / u.wifi_capacity[f];
  }
  r.wifi = wifi_load - 1.0;
  Real cell_rate = 0.0;
  for (UserIx n = 0; n < a.users(); ++n) cell_rate += a.y_cell(i, n);
  r.cell = cell_rate - u.cellular_capacity;
  return r;
}

/// Signed flow imbalance of commodity n at node i (n != i): inflow plus
/// downloads minus outflow.
inline Real flow_conservation_residual(const NetworkGraph& g, const Allocation& a, UserIx i,
                                       UserIx n) {
  if (n == i) throw DomainError("flow conservation applies to n != i");
  Real acc = a.y_cell(i, n);
  for (int f = 0; f < g.channel_count; ++f) acc += a.y_wifi(i, f, n);
  for (LinkIx l : g.in_links[i])
    for (int f = 0; f < g.channel_count; ++f) acc += a.x(l, f, n);
  for (LinkIx l : g.out_links[i])
    for (int f = 0; f < g.channel_count; ++f) acc -= a.x(l, f, n);
  return acc;
}

/// Net payments minus own budget: sum paid - sum earned - D_i - gamma.
inline Real budget_residual(const NetworkGraph& g, const Allocation& a, const UserProfile& u,
                            UserIx i, Real gamma) {
  auto c = economics::currency_flow(g, a, i);
  return c.paid - c.earned - u.currency_budget - gamma;
}

/// Individual rationality: (J_i^s + beta_i D_i) - (J_i + H_i).
inline Real ir_residual(const NetworkGraph& g, const Allocation& a, const UserProfile& u,
                        const economics::LinkEnergies& le, UserIx i, Real gamma, Real T,
                        Real j_standalone) {
  Real j = economics::payoff(g, a, u, le, i, T);
  Real h = economics::currency_balance(g, a, u, i, gamma);
  return (j_standalone + u.currency_weight * u.currency_budget) - (j + h);
}

/// Signed residuals of every constraint family at one allocation.
struct ResidualReport {
  std::map<std::string, std::vector<Real>> families;
  Real max_violation = 0.0;  // over inequality families plus |equality| ones
  bool feasible = false;
  Real tol = 0.0;

  Real family_max(const std::string& name) const {
    auto it = families.find(name);
    Real m = -kInf;
    if (it != families.end())
      for (Real v : it->second) m = std::max(m, v);
    return m;
  }
};

/// Aggregate every family. IR residuals need the standalone payoffs; an empty
/// vector skips that family (reported as absent).
inline ResidualReport full_report(const Scenario& sc, const Allocation& a,
                                  const std::vector<Real>& j_standalone, Real tol,
                                  bool include_ir = true) {
  const NetworkGraph& g = sc.graph;
  ResidualReport rep;
  rep.tol = tol;
  auto& fam = rep.families;
  for (UserIx i = 0; i < g.n(); ++i)
    fam["node_radio"].push_back(node_radio_residual(g, a, i, sc.users[i]));
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    for (int f = 0; f < g.channel_count; ++f)
      fam["interference"].push_back(interference_residual(g, a, sc.users, i, j, f));
    fam["link_channel"].push_back(link_channel_residual(g, a, i, j));
  }
  for (UserIx i = 0; i < g.n(); ++i) {
    auto ir2 = internet_access_residuals(a, sc.users[i], i);
    fam["internet_wifi"].push_back(ir2.wifi);
    fam["internet_cell"].push_back(ir2.cell);
    fam["budget"].push_back(budget_residual(g, a, sc.users[i], i, sc.gamma));
  }
  for (UserIx i = 0; i < g.n(); ++i)
    for (UserIx n = 0; n < g.n(); ++n)
      if (n != i)
        fam["flow_conservation"].push_back(std::abs(flow_conservation_residual(g, a, i, n)));
  // Box bounds: lower bounds are structural (storage is clamped by solvers),
  // upper bounds checked explicitly.
  const Real K = sc.currency_cap();
  Real box = -kInf;
  for (LinkIx l = 0; l < g.num_links(); ++l)
    for (UserIx n = 0; n < g.n(); ++n) {
      for (int f = 0; f < g.channel_count; ++f) {
        box = std::max(box, a.x(l, f, n) - g.cap[l][f]);
        box = std::max(box, -a.x(l, f, n));
      }
      box = std::max(box, a.z(l, n) - K);
      box = std::max(box, -a.z(l, n));
    }
  for (UserIx i = 0; i < g.n(); ++i)
    for (UserIx n = 0; n < g.n(); ++n) {
      box = std::max(box, a.y_cell(i, n) - sc.users[i].cellular_capacity);
      box = std::max(box, -a.y_cell(i, n));
      for (int f = 0; f < g.channel_count; ++f) {
        Real cap = sc.users[i].has_wifi(f) ? sc.users[i].wifi_capacity[f] : 0.0;
        box = std::max(box, a.y_wifi(i, f, n) - cap);
        box = std::max(box, -a.y_wifi(i, f, n));
      }
    }
  fam["box"].push_back(box);
  if (include_ir && !j_standalone.empty())
    for (UserIx i = 0; i < g.n(); ++i)
      fam["ir"].push_back(
          ir_residual(g, a, sc.users[i], sc.link_energy, i, sc.gamma, sc.period_s,
                      j_standalone[i]));
  rep.max_violation = -kInf;
  for (auto& [name, vals] : fam)
    for (Real v : vals) rep.max_violation = std::max(rep.max_violation, v);
  rep.feasible = rep.max_violation <= tol;
  return rep;
}

}  // namespace upn::constraints

#endif  // UPN_CONSTRAINTS_HPP
