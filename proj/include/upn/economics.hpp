#ifndef UPN_ECONOMICS_HPP
#define UPN_ECONOMICS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "upn/common.hpp"
#include "upn/topology.hpp"

namespace upn::economics {

using topology::NetworkGraph;

enum class CellularCostMode { kLinear, kQuota };

/// All per-user parameters. Rates are Mbit/s, volumes Mbit, energy J,
/// per-bit energies J/Mbit, money in one $-equivalent scale shared by
/// utility and every cost term (alpha, phi, o are the scale knobs).
struct UserProfile {
  int id = 0;
  int nic_count = 1;                 // k_i, Wi-Fi NICs (cellular radio is separate)
  Real cellular_capacity = 0.0;      // C_i^c
  std::vector<Real> wifi_capacity;   // C_i^f per channel, 0 = no access on f
  std::vector<Real> wifi_price;      // p_i^f, $/Mbit
  CellularCostMode cost_mode = CellularCostMode::kLinear;
  Real cellular_price = 0.0;         // $/Mbit, linear mode
  Real quota_price = 0.0;            // o_i, quota mode
  Real quota_mbit = 0.0;             // A_i, quota mode
  Real energy_budget = 0.0;          // E_i, J
  Real energy_sensitivity = 0.0;     // phi_i in [0,1]
  Real utility_weight = 0.0;         // alpha_i
  Real currency_weight = 1.0;        // beta_i > 0
  Real currency_budget = 0.0;        // D_i >= 0
  Real e_cell = 0.0;                 // e_i^c, J/Mbit downloaded over cellular
  Real e_wifi = 0.0;                 // e_i^f, J/Mbit downloaded over Wi-Fi Internet

  bool has_cellular() const { return cellular_capacity > 0.0; }
  bool has_wifi(ChannelIx f) const {
    return f < static_cast<int>(wifi_capacity.size()) && wifi_capacity[f] > 0.0;
  }
  bool has_any_wifi() const {
    for (Real c : wifi_capacity)
      if (c > 0.0) return true;
    return false;
  }

  void validate(int channel_count) const {
    if (nic_count < 1) throw ScenarioError("nic_count must be >= 1");
    if (cellular_capacity < 0.0) throw ScenarioError("negative cellular capacity");
    if (static_cast<int>(wifi_capacity.size()) > channel_count)
      throw ScenarioError("wifi capacity declared on unknown channel");
    for (Real p : wifi_price)
      if (p < 0.0) throw ScenarioError("negative wifi price");
    if (cost_mode == CellularCostMode::kQuota && (quota_mbit <= 0.0 || quota_price <= 0.0))
      throw ScenarioError("quota mode requires A_i > 0 and o_i > 0");
    if (cost_mode == CellularCostMode::kLinear && cellular_price < 0.0)
      throw ScenarioError("negative cellular price");
    if (!(energy_budget > 0.0)) throw ScenarioError("energy budget must be positive");
    if (energy_sensitivity < 0.0 || energy_sensitivity > 1.0)
      throw ScenarioError("energy sensitivity outside [0,1]");
    if (utility_weight < 0.0) throw ScenarioError("negative utility weight");
    if (!(currency_weight > 0.0)) throw ScenarioError("currency weight must be positive");
    if (currency_budget < 0.0) throw ScenarioError("negative currency budget");
    if (e_cell < 0.0 || e_wifi < 0.0) throw ScenarioError("negative per-bit energy");
  }
};

/// delta + theta/C: per-Mbit energy of a link running at capacity C with the
/// affine power model P = delta*C + theta.
inline Real energy_per_bit(Real delta, Real theta, Real capacity) {
  if (!(capacity > 0.0)) throw DomainError("energy_per_bit: capacity must be > 0");
  return delta + theta / capacity;
}

/// Affine radio power model constants plus per-link overrides.
struct EnergyModel {
  Real delta_send = 0.25;   // J/Mbit
  Real theta_send = 0.20;   // W
  Real delta_recv = 0.125;  // J/Mbit
  Real theta_recv = 0.10;   // W
  // Overrides keyed by external (from,to) ids; used by the relay-energy sweep.
  std::map<std::pair<int, int>, Real> send_override;
  std::map<std::pair<int, int>, Real> recv_override;
};

/// Per-link per-channel energies, fixed for the period.
struct LinkEnergies {
  std::vector<std::vector<Real>> send;  // e_ij^{f,s} [link][f]
  std::vector<std::vector<Real>> recv;  // e_ij^{f,r} [link][f]
};

inline LinkEnergies build_link_energies(const NetworkGraph& g, const EnergyModel& m) {
  LinkEnergies e;
  e.send.resize(g.num_links());
  e.recv.resize(g.num_links());
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    std::pair<int, int> key{g.node_ids[i], g.node_ids[j]};
    auto so = m.send_override.find(key);
    auto ro = m.recv_override.find(key);
    e.send[l].resize(g.channel_count);
    e.recv[l].resize(g.channel_count);
    for (int f = 0; f < g.channel_count; ++f) {
      e.send[l][f] = so != m.send_override.end()
                        ? so->second
                        : energy_per_bit(m.delta_send, m.theta_send, g.cap[l][f]);
      e.recv[l][f] = ro != m.recv_override.end()
                        ? ro->second
                        : energy_per_bit(m.delta_recv, m.theta_recv, g.cap[l][f]);
    }
  }
  return e;
}

/// Primal decision state. Missing entries read as zero; layout is dense over
/// the graph so solvers can address slots directly.
///   x[link][f][n]  routed rate of commodity n over link, n != from(link)
///   y_wifi[i][f][n], y_cell[i][n]  Internet download rates
///   z[link][n]     currency the 'to' node pays the 'from' node for commodity n
class Allocation {
 public:
  Allocation() = default;
  Allocation(const NetworkGraph& g, int n_users)
      : n_(n_users), F_(g.channel_count), L_(g.num_links()) {
    x_.assign(static_cast<size_t>(L_) * F_ * n_, 0.0);
    z_.assign(static_cast<size_t>(L_) * n_, 0.0);
    yw_.assign(static_cast<size_t>(n_) * F_ * n_, 0.0);
    yc_.assign(static_cast<size_t>(n_) * n_, 0.0);
  }

  Real x(LinkIx l, ChannelIx f, UserIx n) const { return x_[xi(l, f, n)]; }
  Real& x(LinkIx l, ChannelIx f, UserIx n) { return x_[xi(l, f, n)]; }
  Real z(LinkIx l, UserIx n) const { return z_[zi(l, n)]; }
  Real& z(LinkIx l, UserIx n) { return z_[zi(l, n)]; }
  Real y_wifi(UserIx i, ChannelIx f, UserIx n) const { return yw_[yi(i, f, n)]; }
  Real& y_wifi(UserIx i, ChannelIx f, UserIx n) { return yw_[yi(i, f, n)]; }
  Real y_cell(UserIx i, UserIx n) const { return yc_[ci(i, n)]; }
  Real& y_cell(UserIx i, UserIx n) { return yc_[ci(i, n)]; }

  int users() const { return n_; }
  int channels() const { return F_; }
  int links() const { return L_; }

  void clear() {
    std::fill(x_.begin(), x_.end(), 0.0);
    std::fill(z_.begin(), z_.end(), 0.0);
    std::fill(yw_.begin(), yw_.end(), 0.0);
    std::fill(yc_.begin(), yc_.end(), 0.0);
  }

 private:
  size_t xi(LinkIx l, ChannelIx f, UserIx n) const {
    return (static_cast<size_t>(l) * F_ + f) * n_ + n;
  }
  size_t zi(LinkIx l, UserIx n) const { return static_cast<size_t>(l) * n_ + n; }
  size_t yi(UserIx i, ChannelIx f, UserIx n) const {
    return (static_cast<size_t>(i) * F_ + f) * n_ + n;
  }
  size_t ci(UserIx i, UserIx n) const { return static_cast<size_t>(i) * n_ + n; }

  int n_ = 0, F_ = 0, L_ = 0;
  std::vector<Real> x_, z_, yw_, yc_;
};

// ---------------------------------------------------------------------------
// Valuation operations. Pure functions over immutable inputs.
// ---------------------------------------------------------------------------

/// r_i: own-commodity rate consumed by i (downloads plus relayed-in).
inline Real consumption_rate(const NetworkGraph& g, const Allocation& a, UserIx i) {
  Real r = a.y_cell(i, i);
  for (int f = 0; f < g.channel_count; ++f) r += a.y_wifi(i, f, i);
  for (LinkIx l : g.in_links[i])
    for (int f = 0; f < g.channel_count; ++f) r += a.x(l, f, i);
  return r;
}

/// U_i(r) = alpha_i * ln(1 + r).
inline Real utility(const UserProfile& u, Real r) {
  if (r < 0.0) throw DomainError("utility: negative rate");
  return u.utility_weight * std::log1p(r);
}

/// Total downloaded volume over the period, all commodities (Mbit).
inline Real downloaded_volume(const NetworkGraph& g, const Allocation& a, UserIx i, Real T) {
  Real rate = 0.0;
  for (UserIx n = 0; n < a.users(); ++n) {
    rate += a.y_cell(i, n);
    for (int f = 0; f < g.channel_count; ++f) rate += a.y_wifi(i, f, n);
  }
  return rate * T;
}

/// y_i^{ag,c}: cellular volume over the period (Mbit).
inline Real cellular_volume(const Allocation& a, UserIx i, Real T) {
  Real rate = 0.0;
  for (UserIx n = 0; n < a.users(); ++n) rate += a.y_cell(i, n);
  return rate * T;
}

/// e_i: Internet downloads plus mesh transmit/receive energy, J over the period.
inline Real total_energy(const NetworkGraph& g, const Allocation& a, const UserProfile& u,
                         const LinkEnergies& le, UserIx i, Real T) {
  Real e = 0.0;
  for (UserIx n = 0; n < a.users(); ++n) {
    e += u.e_cell * a.y_cell(i, n);
    for (int f = 0; f < g.channel_count; ++f) e += u.e_wifi * a.y_wifi(i, f, n);
  }
  for (LinkIx l : g.out_links[i])
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < a.users(); ++n) e += le.send[l][f] * a.x(l, f, n);
  for (LinkIx l : g.in_links[i])
    for (int f = 0; f < g.channel_count; ++f)
      for (UserIx n = 0; n < a.users(); ++n) e += le.recv[l][f] * a.x(l, f, n);
  return e * T;
}

/// V_i(e) = phi_i / (E_i - e); diverges as the budget depletes.
inline Real energy_cost(const UserProfile& u, Real e) {
  if (e < 0.0 || e >= u.energy_budget) throw DomainError("energy_cost: e outside [0, E_i)");
  return u.energy_sensitivity / (u.energy_budget - e);
}

/// Cellular data-plan cost of a downloaded volume (Mbit).
inline Real cellular_cost(const UserProfile& u, Real volume_mbit) {
  if (volume_mbit < 0.0) throw DomainError("cellular_cost: negative volume");
  if (u.cost_mode == CellularCostMode::kLinear) return u.cellular_price * volume_mbit;
  if (volume_mbit >= u.quota_mbit) throw DomainError("cellular_cost: volume at or beyond quota");
  return u.quota_price / (u.quota_mbit - volume_mbit);
}

/// J_i = U(r_i) - Q(cell volume) - sum_f p^f * wifi volume - V(e_i).
inline Real payoff(const NetworkGraph& g, const Allocation& a, const UserProfile& u,
                   const LinkEnergies& le, UserIx i, Real T) {
  Real r = consumption_rate(g, a, i);
  Real wifi_cost = 0.0;
  for (int f = 0; f < g.channel_count; ++f) {
    Real price = f < static_cast<int>(u.wifi_price.size()) ? u.wifi_price[f] : 0.0;
    Real rate = 0.0;
    for (UserIx n = 0; n < a.users(); ++n) rate += a.y_wifi(i, f, n);
    wifi_cost += price * rate * T;
  }
  return utility(u, r) - cellular_cost(u, cellular_volume(a, i, T)) - wifi_cost -
         energy_cost(u, total_energy(g, a, u, le, i, T));
}

/// Currency paid by i (over in-links) and earned by i (over out-links).
struct CurrencyFlow {
  Real earned = 0.0;
  Real paid = 0.0;
};

inline CurrencyFlow currency_flow(const NetworkGraph& g, const Allocation& a, UserIx i) {
  CurrencyFlow c;
  for (LinkIx l : g.out_links[i])
    for (UserIx n = 0; n < a.users(); ++n) c.earned += a.z(l, n);
  for (LinkIx l : g.in_links[i])
    for (UserIx n = 0; n < a.users(); ++n) c.paid += a.z(l, n);
  return c;
}

/// H_i = beta_i * (D_i + gamma + earned - paid).
inline Real currency_balance(const NetworkGraph& g, const Allocation& a, const UserProfile& u,
                             UserIx i, Real gamma) {
  CurrencyFlow c = currency_flow(g, a, i);
  return u.currency_weight * (u.currency_budget + gamma + c.earned - c.paid);
}

}  // namespace upn::economics

#endif  // UPN_ECONOMICS_HPP
