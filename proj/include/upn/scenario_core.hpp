#ifndef UPN_SCENARIO_CORE_HPP
#define UPN_SCENARIO_CORE_HPP

#include <vector>

#include "upn/economics.hpp"
#include "upn/topology.hpp"

namespace upn {

/// Solver knobs shared by all three solve targets.
struct SolverSettings {
  Real epsilon = 1e-4;       // Algorithm-1 dual-change criterion
  Real step_m = 10.0;        // m in s_q = (1+m)/(q+m)
  int q_max = 20000;         // round cap
  Real tol_inner = 1e-8;     // inner KKT residual target
  int max_inner_iters = 10000;
  Real regularizer = 1e-9;   // allocation tie-break weight, removable
};

/// One fully-specified period: graph, profiles, link energies, constants.
struct Scenario {
  topology::NetworkGraph graph;
  std::vector<economics::UserProfile> users;
  economics::EnergyModel energy_model;
  economics::LinkEnergies link_energy;
  Real period_s = 100.0;   // T
  Real gamma = 0.01;       // participation reward
  SolverSettings solver;

  int n() const { return graph.n(); }

  /// K: system-wide currency, the payment box bound.
  Real currency_cap() const {
    Real k = 0.0;
    for (auto& u : users) k += u.currency_budget + gamma;
    return k;
  }

  void validate() const {
    if (static_cast<int>(users.size()) != graph.n())
      throw ScenarioError("profile count does not match graph");
    if (!(period_s > 0.0)) throw ScenarioError("period must be positive");
    if (!(gamma > 0.0)) throw ScenarioError("participation reward gamma must be positive");
    for (auto& u : users) u.validate(graph.channel_count);
  }
};

}  // namespace upn

#endif  // UPN_SCENARIO_CORE_HPP
