#ifndef UPN_STANDALONE_HPP
#define UPN_STANDALONE_HPP

#include <vector>

#include "upn/economics.hpp"
#include "upn/optim.hpp"
#include "upn/scenario_core.hpp"

// Standalone Operation Problem: the user's optimal solo Internet usage, and
// disagreement payoff J_i^s.

namespace upn::standalone {

using economics::UserProfile;

struct StandaloneResult {
  Real y_cell_own = 0.0;
  std::vector<Real> y_wifi_own;  // per channel
  Real payoff = 0.0;             // J_i^s
  Real kkt_residual = 0.0;
};

namespace detail {

// Variables: [y_c?] ++ [y_f for each wifi-capable channel].
class SopObjective final : public optim::Objective {
 public:
  SopObjective(const UserProfile& u, Real T, const std::vector<int>& wifi_channels)
      : u_(u), T_(T), wifi_(wifi_channels) {}

  Real eval(const optim::Vec& v, optim::Vec* grad) override {
    const bool cell = u_.has_cellular();
    Real y_c = cell ? v[0] : 0.0;
    Real r = y_c;
    Real e = u_.e_cell * y_c;
    Real price_term = 0.0;
    for (size_t k = 0; k < wifi_.size(); ++k) {
      Real y = v[cell + k];
      r += y;
      e += u_.e_wifi * y;
      price_term += price(wifi_[k]) * y * T_;
    }
    e *= T_;
    Real vol = y_c * T_;
    Real val = economics::utility(u_, r) - price_term - economics::cellular_cost(u_, vol) -
               economics::energy_cost(u_, e);
    if (grad) {
      Real du = u_.utility_weight / (1.0 + r);
      Real dv_cost = u_.cost_mode == economics::CellularCostMode::kLinear
                         ? u_.cellular_price
                         : u_.quota_price / ((u_.quota_mbit - vol) * (u_.quota_mbit - vol));
      Real de = u_.energy_sensitivity / ((u_.energy_budget - e) * (u_.energy_budget - e));
      if (cell) (*grad)[0] = du - dv_cost * T_ - de * u_.e_cell * T_;
      for (size_t k = 0; k < wifi_.size(); ++k)
        (*grad)[cell + k] = du - price(wifi_[k]) * T_ - de * u_.e_wifi * T_;
    }
    return val;
  }

  Real guard_margin(const optim::Vec& v) const override {
    const bool cell = u_.has_cellular();
    Real y_c = cell ? v[0] : 0.0;
    Real e = u_.e_cell * y_c;
    for (size_t k = 0; k < wifi_.size(); ++k) e += u_.e_wifi * v[cell + k];
    e *= T_;
    Real m = u_.energy_budget - e;
    if (u_.cost_mode == economics::CellularCostMode::kQuota)
      m = std::min(m, u_.quota_mbit - y_c * T_);
    return m;
  }

 private:
  Real price(int f) const {
    return f < static_cast<int>(u_.wifi_price.size()) ? u_.wifi_price[f] : 0.0;
  }
  const UserProfile& u_;
  Real T_;
  std::vector<int> wifi_;
};

}  // namespace detail

inline StandaloneResult solve_sop(const UserProfile& u, Real T,
                                  const SolverSettings& s = SolverSettings{}) {
  StandaloneResult res;
  std::vector<int> wifi;
  for (int f = 0; f < static_cast<int>(u.wifi_capacity.size()); ++f)
    if (u.has_wifi(f)) wifi.push_back(f);
  res.y_wifi_own.assign(u.wifi_capacity.size(), 0.0);

  const bool cell = u.has_cellular();
  const int n = static_cast<int>(wifi.size()) + (cell ? 1 : 0);
  if (n == 0) {
    // No Internet access: the zero allocation is the whole feasible set.
    res.payoff = -economics::cellular_cost(u, 0.0) - economics::energy_cost(u, 0.0);
    return res;
  }

  detail::SopObjective obj(u, T, wifi);
  optim::ConcaveProblem p;
  p.n = n;
  p.objective = &obj;
  p.lower = optim::Vec::Zero(n);
  p.upper.resize(n);
  if (cell) p.upper[0] = u.cellular_capacity;
  for (size_t k = 0; k < wifi.size(); ++k) p.upper[cell + k] = u.wifi_capacity[wifi[k]];
  if (!wifi.empty()) {
    optim::LinRow row;
    for (size_t k = 0; k < wifi.size(); ++k)
      row.terms.emplace_back(static_cast<int>(cell + k), 1.0 / u.wifi_capacity[wifi[k]]);
    row.rhs = 1.0;
    p.ineq.push_back(row);
  }

  auto sol = optim::maximize(p, optim::Vec::Zero(n), s.tol_inner, s.max_inner_iters);
  if (cell) res.y_cell_own = sol.x[0];
  for (size_t k = 0; k < wifi.size(); ++k) res.y_wifi_own[wifi[k]] = sol.x[cell + k];
  res.payoff = sol.value;
  res.kkt_residual = sol.kkt_residual;
  return res;
}

/// Disagreement payoffs for every user of a scenario.
inline std::vector<Real> standalone_payoffs(const Scenario& sc) {
  std::vector<Real> js;
  js.reserve(sc.users.size());
  for (auto& u : sc.users) js.push_back(solve_sop(u, sc.period_s, sc.solver).payoff);
  return js;
}

}  // namespace upn::standalone

#endif  // UPN_STANDALONE_HPP
