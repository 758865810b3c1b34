#ifndef UPN_BARGAIN_CENTRAL_HPP
#define UPN_BARGAIN_CENTRAL_HPP

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "upn/constraints.hpp"
#include "upn/economics.hpp"
#include "upn/optim.hpp"
#include "upn/scenario_core.hpp"
#include "upn/standalone.hpp"

// Centralized oracle for the bargaining optimization problem: maximize the
// sum of log payoff gains over the full network/budget polytope.

namespace upn::central {

using economics::Allocation;
using optim::Vec;

/// Flat slot assignment for the joint decision vector.
///
/// Slots exist only for variables that can be nonzero: x over declared links
/// (commodity != transmitter), y over owned Internet connections, z mirroring
/// the x commodity pattern of its link.
class VarLayout {
 public:
  VarLayout() = default;
  VarLayout(const Scenario& sc) {
    const auto& g = sc.graph;
    const int n = g.n(), F = g.channel_count;
    x_.assign(static_cast<size_t>(g.num_links()) * F * n, -1);
    z_.assign(static_cast<size_t>(g.num_links()) * n, -1);
    yw_.assign(static_cast<size_t>(n) * F * n, -1);
    yc_.assign(static_cast<size_t>(n) * n, -1);
    int next = 0;
    for (LinkIx l = 0; l < g.num_links(); ++l) {
      UserIx from = g.links[l].first;
      for (int f = 0; f < F; ++f)
        for (UserIx m = 0; m < n; ++m)
          if (m != from) x_[xi(l, f, m, F, n)] = next++;
      for (UserIx m = 0; m < n; ++m)
        if (m != from) z_[static_cast<size_t>(l) * n + m] = next++;
    }
    for (UserIx i = 0; i < n; ++i) {
      if (sc.users[i].has_cellular())
        for (UserIx m = 0; m < n; ++m) yc_[static_cast<size_t>(i) * n + m] = next++;
      for (int f = 0; f < F; ++f)
        if (sc.users[i].has_wifi(f))
          for (UserIx m = 0; m < n; ++m) yw_[xi(i, f, m, F, n)] = next++;
    }
    F_ = F;
    n_ = n;
    eliminate_structural_zeros(sc, next);
  }

  int size() const { return n_vars_; }
  int x(LinkIx l, ChannelIx f, UserIx m) const { return x_[xi(l, f, m, F_, n_)]; }
  int z(LinkIx l, UserIx m) const { return z_[static_cast<size_t>(l) * n_ + m]; }
  int y_wifi(UserIx i, ChannelIx f, UserIx m) const { return yw_[xi(i, f, m, F_, n_)]; }
  int y_cell(UserIx i, UserIx m) const { return yc_[static_cast<size_t>(i) * n_ + m]; }

  Allocation unpack(const Scenario& sc, const Vec& v) const {
    const auto& g = sc.graph;
    Allocation a(g, g.n());
    for (LinkIx l = 0; l < g.num_links(); ++l)
      for (UserIx m = 0; m < n_; ++m) {
        for (int f = 0; f < F_; ++f)
          if (int s = x(l, f, m); s >= 0) a.x(l, f, m) = std::max(0.0, v[s]);
        if (int s = z(l, m); s >= 0) a.z(l, m) = std::max(0.0, v[s]);
      }
    for (UserIx i = 0; i < n_; ++i)
      for (UserIx m = 0; m < n_; ++m) {
        if (int s = y_cell(i, m); s >= 0) a.y_cell(i, m) = std::max(0.0, v[s]);
        for (int f = 0; f < F_; ++f)
          if (int s = y_wifi(i, f, m); s >= 0) a.y_wifi(i, f, m) = std::max(0.0, v[s]);
      }
    return a;
  }

  Vec pack(const Scenario& sc, const Allocation& a) const {
    const auto& g = sc.graph;
    Vec v = Vec::Zero(n_vars_);
    for (LinkIx l = 0; l < g.num_links(); ++l)
      for (UserIx m = 0; m < n_; ++m) {
        for (int f = 0; f < F_; ++f)
          if (int s = x(l, f, m); s >= 0) v[s] = a.x(l, f, m);
        if (int s = z(l, m); s >= 0) v[s] = a.z(l, m);
      }
    for (UserIx i = 0; i < n_; ++i)
      for (UserIx m = 0; m < n_; ++m) {
        if (int s = y_cell(i, m); s >= 0) v[s] = a.y_cell(i, m);
        for (int f = 0; f < F_; ++f)
          if (int s = y_wifi(i, f, m); s >= 0) v[s] = a.y_wifi(i, f, m);
      }
    return v;
  }

 private:
  static size_t xi(int l, int f, int m, int F, int n) {
    return (static_cast<size_t>(l) * F + f) * n + m;
  }

  // Flow conservation forces some slots to zero structurally (a commodity
  // with no reachable source cannot flow). A zero-rhs equality whose live
  // terms all share one sign pins those variables at their lower bound,
  // which the log barrier cannot represent; eliminate them up front. The
  // rule cascades until a fixed point.
  void eliminate_structural_zeros(const Scenario& sc, int provisional_count) {
    const auto& g = sc.graph;
    const int n = g.n(), F = g.channel_count;
    // FC rows over provisional slots, sign only.
    struct Row {
      std::vector<std::pair<int, int>> terms;  // slot, sign
    };
    std::vector<Row> rows;
    for (UserIx i = 0; i < n; ++i)
      for (UserIx m = 0; m < n; ++m) {
        if (m == i) continue;
        Row row;
        if (int s = y_cell(i, m); s >= 0) row.terms.push_back({s, +1});
        for (int f = 0; f < F; ++f)
          if (int s = y_wifi(i, f, m); s >= 0) row.terms.push_back({s, +1});
        for (LinkIx l : g.in_links[i])
          for (int f = 0; f < F; ++f)
            if (int s = x(l, f, m); s >= 0) row.terms.push_back({s, +1});
        for (LinkIx l : g.out_links[i])
          for (int f = 0; f < F; ++f)
            if (int s = x(l, f, m); s >= 0) row.terms.push_back({s, -1});
        if (!row.terms.empty()) rows.push_back(std::move(row));
      }
    std::vector<char> dead(provisional_count, 0);
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& row : rows) {
        int pos = 0, neg = 0;
        for (auto& [s, sg] : row.terms)
          if (!dead[s]) (sg > 0 ? pos : neg)++;
        if (pos + neg == 0) continue;
        if (pos == 0 || neg == 0) {
          for (auto& [s, sg] : row.terms)
            if (!dead[s]) {
              dead[s] = 1;
              changed = true;
            }
        }
      }
    }
    // compact renumbering
    std::vector<int> remap(provisional_count, -1);
    int next = 0;
    for (int s = 0; s < provisional_count; ++s)
      if (!dead[s]) remap[s] = next++;
    auto apply = [&](std::vector<int>& arr) {
      for (int& s : arr)
        if (s >= 0) s = remap[s];
    };
    apply(x_);
    apply(z_);
    apply(yw_);
    apply(yc_);
    n_vars_ = next;
  }

  std::vector<int> x_, z_, yw_, yc_;
  int n_vars_ = 0, F_ = 0, n_ = 0;
};

namespace detail {

struct SparseVec {
  std::vector<std::pair<int, Real>> terms;
  Real dot(const Vec& v) const {
    Real s = 0.0;
    for (auto& [j, c] : terms) s += c * v[j];
    return s;
  }
  void axpy(Real a, Vec& out) const {
    for (auto& [j, c] : terms) out[j] += a * c;
  }
};

// Per-user linear forms feeding the payoff gain factor.
struct UserForms {
  SparseVec rate;     // r_i
  SparseVec energy;   // e_i (J over the period)
  SparseVec cellvol;  // cellular Mbit over the period
  SparseVec wificost; // sum_f p^f T y^f
  SparseVec currency; // earned - paid (unweighted)
  Real constant = 0.0;  // beta*gamma - J_i^s, the allocation-free part of g_i
};

/// Sum of log Nash factors with a tiny norm regularizer for tie-breaking.
class BopObjective final : public optim::Objective {
 public:
  BopObjective(const Scenario& sc, const VarLayout& lay, const std::vector<Real>& j_standalone,
               Real reg, std::vector<Real> factor_scale = {})
      : sc_(sc), reg_(reg) {
    const auto& g = sc.graph;
    const int n = g.n(), F = g.channel_count;
    const Real T = sc.period_s;
    scale_ = factor_scale.empty() ? std::vector<Real>(n, 1.0) : std::move(factor_scale);
    users_.resize(n);
    for (UserIx i = 0; i < n; ++i) {
      auto& u = sc.users[i];
      auto& uf = users_[i];
      uf.constant = u.currency_weight * sc.gamma - j_standalone[i];
      if (int s = lay.y_cell(i, i); s >= 0) uf.rate.terms.push_back({s, 1.0});
      for (int f = 0; f < F; ++f)
        if (int s = lay.y_wifi(i, f, i); s >= 0) uf.rate.terms.push_back({s, 1.0});
      for (LinkIx l : g.in_links[i])
        for (int f = 0; f < F; ++f)
          if (int s = lay.x(l, f, i); s >= 0) uf.rate.terms.push_back({s, 1.0});
      for (UserIx m = 0; m < n; ++m) {
        if (int s = lay.y_cell(i, m); s >= 0) {
          uf.energy.terms.push_back({s, u.e_cell * T});
          uf.cellvol.terms.push_back({s, T});
        }
        for (int f = 0; f < F; ++f)
          if (int s = lay.y_wifi(i, f, m); s >= 0) {
            uf.energy.terms.push_back({s, u.e_wifi * T});
            Real p = f < static_cast<int>(u.wifi_price.size()) ? u.wifi_price[f] : 0.0;
            if (p > 0.0) uf.wificost.terms.push_back({s, p * T});
          }
      }
      for (LinkIx l : g.out_links[i]) {
        for (int f = 0; f < F; ++f)
          for (UserIx m = 0; m < n; ++m)
            if (int s = lay.x(l, f, m); s >= 0)
              uf.energy.terms.push_back({s, sc.link_energy.send[l][f] * T});
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.z(l, m); s >= 0) uf.currency.terms.push_back({s, 1.0});
      }
      for (LinkIx l : g.in_links[i]) {
        for (int f = 0; f < F; ++f)
          for (UserIx m = 0; m < n; ++m)
            if (int s = lay.x(l, f, m); s >= 0)
              uf.energy.terms.push_back({s, sc.link_energy.recv[l][f] * T});
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.z(l, m); s >= 0) uf.currency.terms.push_back({s, -1.0});
      }
    }
    grads_.assign(n, Vec::Zero(lay.size()));
    factors_.assign(n, 0.0);
    w_rate_.assign(n, 0.0);
    w_energy_.assign(n, 0.0);
    w_vol_.assign(n, 0.0);
    gs_.assign(n, 1.0);
    nvars_ = lay.size();
  }

  /// Factor g_i at v (also refreshed by eval).
  Real factor(UserIx i, const Vec& v) const {
    auto& u = sc_.users[i];
    auto& uf = users_[i];
    Real r = uf.rate.dot(v);
    Real e = uf.energy.dot(v);
    Real vol = uf.cellvol.dot(v);
    if (e >= u.energy_budget) return -kInf;
    if (u.cost_mode == economics::CellularCostMode::kQuota && vol >= u.quota_mbit) return -kInf;
    Real j = economics::utility(u, std::max(r, 0.0)) - economics::cellular_cost(u, vol) -
             uf.wificost.dot(v) - economics::energy_cost(u, e);
    return scale_[i] * (j + u.currency_weight * uf.currency.dot(v) + uf.constant);
  }

  Real eval(const Vec& v, Vec* grad) override {
    const int n = static_cast<int>(users_.size());
    Real val = -reg_ * v.squaredNorm();
    if (grad) *grad = -2.0 * reg_ * v;
    for (UserIx i = 0; i < n; ++i) {
      auto& u = sc_.users[i];
      auto& uf = users_[i];
      Real r = uf.rate.dot(v);
      Real e = uf.energy.dot(v);
      Real vol = uf.cellvol.dot(v);
      Real g = factor(i, v);
      factors_[i] = g;
      if (!(g > 0.0)) throw DomainError("BOP factor left the positive domain");
      val += std::log(g);
      // dg/dv pieces (scale_[i] multiplies the whole factor, cancels in d log)
      Real du = u.utility_weight / (1.0 + std::max(r, 0.0));
      Real dq = u.cost_mode == economics::CellularCostMode::kLinear
                    ? u.cellular_price
                    : u.quota_price / ((u.quota_mbit - vol) * (u.quota_mbit - vol));
      Real de = u.energy_sensitivity /
                ((u.energy_budget - e) * (u.energy_budget - e));
      Vec& dg = grads_[i];
      dg.setZero();
      uf.rate.axpy(du, dg);
      uf.cellvol.axpy(-dq, dg);
      uf.energy.axpy(-de, dg);
      for (auto& [j, c] : uf.wificost.terms) dg[j] -= c;
      for (auto& [j, c] : uf.currency.terms) dg[j] += u.currency_weight * c;
      // curvature weights for the rank-one Hessian terms
      Real gs = g / scale_[i];  // unscaled factor
      w_rate_[i] = u.utility_weight / ((1.0 + std::max(r, 0.0)) * (1.0 + std::max(r, 0.0)));
      w_vol_[i] = u.cost_mode == economics::CellularCostMode::kQuota
                      ? 2.0 * u.quota_price /
                            ((u.quota_mbit - vol) * (u.quota_mbit - vol) * (u.quota_mbit - vol))
                      : 0.0;
      w_energy_[i] = 2.0 * u.energy_sensitivity /
                     ((u.energy_budget - e) * (u.energy_budget - e) * (u.energy_budget - e));
      if (grad) *grad += dg / gs;
      gs_[i] = gs;
    }
    return val;
  }

  Real guard_margin(const Vec& v) const override {
    Real m = kInf;
    for (UserIx i = 0; i < static_cast<int>(users_.size()); ++i) {
      auto& u = sc_.users[i];
      auto& uf = users_[i];
      m = std::min(m, factor(i, v));
      m = std::min(m, u.energy_budget - uf.energy.dot(v));
      if (u.cost_mode == economics::CellularCostMode::kQuota)
        m = std::min(m, u.quota_mbit - uf.cellvol.dot(v));
    }
    return m;
  }

  bool has_hessian() const override { return true; }

  // -H_f = 2reg*I + sum_i [ w_r/g a_r a_r' + w_q/g a_q a_q' + w_e/g a_e a_e'
  //                         + (1/g^2) dg dg' ]
  void curvature(std::vector<optim::CurvatureFactor>& out, Real& diag_shift) const override {
    diag_shift = 2.0 * reg_;
    out.clear();
    for (size_t i = 0; i < users_.size(); ++i) {
      auto& uf = users_[i];
      Real gs = gs_[i];
      out.push_back({w_rate_[i] / gs, &uf.rate.terms});
      if (w_vol_[i] > 0.0) out.push_back({w_vol_[i] / gs, &uf.cellvol.terms});
      out.push_back({w_energy_[i] / gs, &uf.energy.terms});
      out.push_back({1.0 / (gs * gs), &dg_terms_[i]});
    }
  }

  const std::vector<Real>& factors() const { return factors_; }

 private:
  const Scenario& sc_;
  Real reg_;
  std::vector<Real> scale_;
  std::vector<UserForms> users_;
  mutable std::vector<Vec> grads_;
  std::vector<Real> factors_;
  std::vector<Real> w_rate_, w_energy_, w_vol_;
  std::vector<Real> gs_;
  int nvars_ = 0;
};

struct RowTag {
  std::string family;
  int index = 0;
};

struct BopRows {
  std::vector<optim::LinRow> ineq, eq;
  std::vector<RowTag> ineq_tags;
};

inline BopRows build_rows(const Scenario& sc, const VarLayout& lay) {
  const auto& g = sc.graph;
  const int n = g.n(), F = g.channel_count;
  BopRows rows;
  auto push = [&](optim::LinRow&& row, const std::string& fam, int idx) {
    if (row.terms.empty()) return;
    rows.ineq.push_back(std::move(row));
    rows.ineq_tags.push_back({fam, idx});
  };
  // node-radio (Eq. 9 family)
  for (UserIx i = 0; i < n; ++i) {
    optim::LinRow row;
    row.rhs = sc.users[i].nic_count;
    for (LinkIx l : g.in_links[i])
      for (int f = 0; f < F; ++f)
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.x(l, f, m); s >= 0) row.terms.push_back({s, 1.0 / g.cap[l][f]});
    for (LinkIx l : g.out_links[i])
      for (int f = 0; f < F; ++f)
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.x(l, f, m); s >= 0) row.terms.push_back({s, 1.0 / g.cap[l][f]});
    for (int f = 0; f < F; ++f)
      if (sc.users[i].has_wifi(f))
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.y_wifi(i, f, m); s >= 0)
            row.terms.push_back({s, 1.0 / sc.users[i].wifi_capacity[f]});
    push(std::move(row), "node_radio", i);
  }
  // interference (Eq. 10 family), one row per directed link and channel
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    std::vector<UserIx> hood = g.nbr[i].ext_nbhd;
    hood.insert(hood.end(), g.nbr[j].ext_nbhd.begin(), g.nbr[j].ext_nbhd.end());
    std::sort(hood.begin(), hood.end());
    hood.erase(std::unique(hood.begin(), hood.end()), hood.end());
    for (int f = 0; f < F; ++f) {
      optim::LinRow row;
      row.rhs = 1.0;
      for (LinkIx m : g.intf_set[l])
        for (UserIx c = 0; c < n; ++c)
          if (int s = lay.x(m, f, c); s >= 0) row.terms.push_back({s, 1.0 / g.cap[m][f]});
      for (UserIx c = 0; c < n; ++c)
        if (int s = lay.x(l, f, c); s >= 0) row.terms.push_back({s, 1.0 / g.cap[l][f]});
      for (UserIx k : hood)
        if (sc.users[k].has_wifi(f))
          for (UserIx c = 0; c < n; ++c)
            if (int s = lay.y_wifi(k, f, c); s >= 0)
              row.terms.push_back({s, 1.0 / sc.users[k].wifi_capacity[f]});
      push(std::move(row), "interference", l * F + f);
    }
  }
  // link-channel coupling (Eq. 11 family)
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    optim::LinRow row;
    row.rhs = 1.0;
    for (int f = 0; f < F; ++f)
      for (UserIx m = 0; m < n; ++m)
        if (int s = lay.x(l, f, m); s >= 0) row.terms.push_back({s, 1.0 / g.cap[l][f]});
    push(std::move(row), "link_channel", l);
  }
  // Internet access (Eq. 12 family)
  for (UserIx i = 0; i < n; ++i) {
    optim::LinRow wifi;
    wifi.rhs = 1.0;
    for (int f = 0; f < F; ++f)
      if (sc.users[i].has_wifi(f))
        for (UserIx m = 0; m < n; ++m)
          if (int s = lay.y_wifi(i, f, m); s >= 0)
            wifi.terms.push_back({s, 1.0 / sc.users[i].wifi_capacity[f]});
    push(std::move(wifi), "internet_wifi", i);
    optim::LinRow cell;
    cell.rhs = sc.users[i].cellular_capacity;
    for (UserIx m = 0; m < n; ++m)
      if (int s = lay.y_cell(i, m); s >= 0) cell.terms.push_back({s, 1.0});
    push(std::move(cell), "internet_cell", i);
  }
  // currency budget (Eq. 22 family): paid - earned <= D + gamma
  for (UserIx i = 0; i < n; ++i) {
    optim::LinRow row;
    row.rhs = sc.users[i].currency_budget + sc.gamma;
    for (LinkIx l : g.in_links[i])
      for (UserIx m = 0; m < n; ++m)
        if (int s = lay.z(l, m); s >= 0) row.terms.push_back({s, 1.0});
    for (LinkIx l : g.out_links[i])
      for (UserIx m = 0; m < n; ++m)
        if (int s = lay.z(l, m); s >= 0) row.terms.push_back({s, -1.0});
    push(std::move(row), "budget", i);
  }
  // flow conservation (Eq. 13 family), equalities
  for (UserIx i = 0; i < n; ++i)
    for (UserIx m = 0; m < n; ++m) {
      if (m == i) continue;
      optim::LinRow row;
      row.rhs = 0.0;
      if (int s = lay.y_cell(i, m); s >= 0) row.terms.push_back({s, 1.0});
      for (int f = 0; f < F; ++f)
        if (int s = lay.y_wifi(i, f, m); s >= 0) row.terms.push_back({s, 1.0});
      for (LinkIx l : g.in_links[i])
        for (int f = 0; f < F; ++f)
          if (int s = lay.x(l, f, m); s >= 0) row.terms.push_back({s, 1.0});
      for (LinkIx l : g.out_links[i])
        for (int f = 0; f < F; ++f)
          if (int s = lay.x(l, f, m); s >= 0) row.terms.push_back({s, -1.0});
      if (!row.terms.empty()) rows.eq.push_back(std::move(row));
    }
  return rows;
}

inline void set_boxes(const Scenario& sc, const VarLayout& lay, optim::ConcaveProblem& p) {
  const auto& g = sc.graph;
  const int n = g.n(), F = g.channel_count;
  const Real K = sc.currency_cap();
  p.lower = Vec::Zero(lay.size());
  p.upper = Vec::Constant(lay.size(), kInf);
  for (LinkIx l = 0; l < g.num_links(); ++l)
    for (UserIx m = 0; m < n; ++m) {
      for (int f = 0; f < F; ++f)
        if (int s = lay.x(l, f, m); s >= 0) p.upper[s] = g.cap[l][f];
      if (int s = lay.z(l, m); s >= 0) p.upper[s] = K;
    }
  for (UserIx i = 0; i < n; ++i)
    for (UserIx m = 0; m < n; ++m) {
      if (int s = lay.y_cell(i, m); s >= 0) p.upper[s] = sc.users[i].cellular_capacity;
      for (int f = 0; f < F; ++f)
        if (int s = lay.y_wifi(i, f, m); s >= 0) p.upper[s] = sc.users[i].wifi_capacity[f];
    }
}

/// Strictly feasible start: each user's own SOP point, shrunk slightly off
/// the bounds, plus a vanishing interior nudge on every other slot. This is
/// the Lemma-1 feasibility argument made numeric: no routing, own downloads,
/// gain slack ~ beta*gamma.
inline Vec interior_start(const Scenario& sc, const VarLayout& lay, const Vec& lower,
                          const Vec& upper, optim::Objective& obj,
                          const std::vector<optim::LinRow>& ineq,
                          const std::vector<optim::LinRow>& eq) {
  const auto& g = sc.graph;
  const int n = g.n(), F = g.channel_count;
  Vec base = Vec::Zero(lay.size());
  const Real shrink = 1.0 - 1e-5;
  for (UserIx i = 0; i < n; ++i) {
    auto sop = standalone::solve_sop(sc.users[i], sc.period_s, sc.solver);
    if (int s = lay.y_cell(i, i); s >= 0) base[s] = sop.y_cell_own * shrink;
    for (int f = 0; f < F; ++f)
      if (int s = lay.y_wifi(i, f, i); s >= 0) base[s] = sop.y_wifi_own[f] * shrink;
  }
  // Interior nudge, shrinking until the Nash factors keep their gamma slack,
  // then a min-norm equality correction (clipped back into the open box).
  for (Real nudge : {1e-5, 1e-6, 1e-7, 1e-8, 1e-9}) {
    Vec v = base;
    for (int s = 0; s < lay.size(); ++s) {
      Real span = std::min(1.0, upper[s] - lower[s]);
      v[s] = std::min(std::max(v[s], lower[s] + nudge * span), upper[s] - nudge * span);
    }
    // the nudges may push a SOP-saturated row over its bound; scale back
    Real worst = 0.0;
    for (auto& row : ineq)
      if (row.rhs > 0.0) worst = std::max(worst, row.dot(v) / row.rhs);
    if (worst >= 1.0 - 10 * nudge) v *= (1.0 - 20 * nudge) / worst;
    if (!eq.empty()) {
      const int m = static_cast<int>(eq.size());
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, lay.size());
      Vec b(m);
      for (int k = 0; k < m; ++k) {
        for (auto& [j, c] : eq[k].terms) A(k, j) = c;
        b[k] = eq[k].rhs;
      }
      Eigen::MatrixXd aat = A * A.transpose();
      aat.diagonal().array() += 1e-12;
      v += A.transpose() * aat.ldlt().solve(b - A * v);
      for (int s = 0; s < lay.size(); ++s) {
        Real span = std::min(1.0, upper[s] - lower[s]);
        v[s] = std::min(std::max(v[s], lower[s] + 0.5 * nudge * span),
                        upper[s] - 0.5 * nudge * span);
      }
    }
    if (obj.guard_margin(v) > 1e-8) return v;
  }
  throw ScenarioError("could not construct a strictly feasible start for the BOP");
}

/// Cancel offsetting gross payments between each pair of users. Net transfers
/// and every payoff are unchanged; this picks the minimum-norm member of the
/// payment-equivalence class, making the reported allocation deterministic.
inline void canonicalize_payments(const topology::NetworkGraph& g, Allocation& a) {
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    if (i > j || !g.has_link(j, i)) continue;
    LinkIx r = g.link_at(j, i);
    Real p_fwd = 0.0, p_rev = 0.0;
    for (UserIx n = 0; n < a.users(); ++n) {
      p_fwd += a.z(l, n);
      p_rev += a.z(r, n);
    }
    Real c = std::min(p_fwd, p_rev);
    if (c <= 0.0) continue;
    Real sf = (p_fwd - c) / p_fwd, sr = (p_rev - c) / p_rev;
    for (UserIx n = 0; n < a.users(); ++n) {
      a.z(l, n) *= sf;
      a.z(r, n) *= sr;
    }
  }
}

/// Stationarity certificate: the best-fit KKT defect with multipliers chosen
/// by least squares over the active constraints (negative fits clamped away).
inline Real stationarity_certificate(const optim::ConcaveProblem& p, const Vec& v) {
  Vec grad(p.n);
  p.objective->eval(v, &grad);
  std::vector<Vec> cols;
  std::vector<bool> sign_free;
  for (auto& row : p.eq) {
    Vec c = Vec::Zero(p.n);
    for (auto& [j, cf] : row.terms) c[j] = cf;
    cols.push_back(c);
    sign_free.push_back(true);
  }
  auto slack_tol = [&](Real rhs) { return 1e-5 * (1.0 + std::abs(rhs)); };
  for (auto& row : p.ineq) {
    if (row.rhs - row.dot(v) > slack_tol(row.rhs)) continue;
    Vec c = Vec::Zero(p.n);
    for (auto& [j, cf] : row.terms) c[j] = cf;
    cols.push_back(c);
    sign_free.push_back(false);
  }
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.lower[j]) && v[j] - p.lower[j] <= slack_tol(p.lower[j])) {
      Vec c = Vec::Zero(p.n);
      c[j] = -1.0;  // grad_j = -mu_lo at an active lower bound
      cols.push_back(c);
      sign_free.push_back(false);
    }
    if (std::isfinite(p.upper[j]) && p.upper[j] - v[j] <= slack_tol(p.upper[j])) {
      Vec c = Vec::Zero(p.n);
      c[j] = 1.0;
      cols.push_back(c);
      sign_free.push_back(false);
    }
  }
  if (cols.empty()) return grad.lpNorm<Eigen::Infinity>();
  Eigen::MatrixXd M(p.n, static_cast<int>(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) M.col(static_cast<int>(k)) = cols[k];
  Vec m = M.colPivHouseholderQr().solve(grad);
  for (size_t k = 0; k < cols.size(); ++k)
    if (!sign_free[k] && m[static_cast<int>(k)] < 0.0) m[static_cast<int>(k)] = 0.0;
  return (grad - M * m).lpNorm<Eigen::Infinity>();
}

}  // namespace detail

/// Converged bargaining outcome with per-user accounting.
struct BargainOutcome {
  Allocation allocation;
  std::vector<Real> payoff_j;       // J_i
  std::vector<Real> currency_h;     // H_i
  std::vector<Real> nash_factor;    // J_i + H_i - J_i^s - beta_i D_i
  Real objective = -kInf;           // sum of log factors (no regularizer)
  constraints::ResidualReport residuals;
  int iterations = 0;
  bool converged = false;
  std::vector<Real> trace;          // objective per outer stage / round
  // solver internals for the KKT report
  std::vector<Real> ineq_mult;
  std::vector<detail::RowTag> ineq_tags;
  std::vector<Real> eq_mult;
  Real kkt_stationarity = kInf;
  Real complementarity = kInf;
  std::vector<int> message_rounds;  // distributed only: messages per round
  std::vector<Real> dual_delta_trace;   // distributed only
  std::vector<Real> residual_trace;     // distributed only
};

/// Objective (sum of log factors) of an explicit allocation; -inf outside the
/// factor domain.
inline Real nash_objective(const Scenario& sc, const Allocation& a,
                           const std::vector<Real>& j_standalone) {
  Real acc = 0.0;
  for (UserIx i = 0; i < sc.n(); ++i) {
    Real j = economics::payoff(sc.graph, a, sc.users[i], sc.link_energy, i, sc.period_s);
    Real h = economics::currency_balance(sc.graph, a, sc.users[i], i, sc.gamma);
    Real gain = j + h - j_standalone[i] -
                sc.users[i].currency_weight * sc.users[i].currency_budget;
    if (!(gain > 0.0)) return -kInf;
    acc += std::log(gain);
  }
  return acc;
}

/// Solve the BOP. factor_scale (optional) multiplies each user's Nash factor;
/// the argmax is invariant to it (scale covariance), exposed for exactly that
/// property test.
inline BargainOutcome solve_bop(const Scenario& sc, const std::vector<Real>& j_standalone,
                                std::vector<Real> factor_scale = {}) {
  const auto& g = sc.graph;
  VarLayout lay(sc);
  detail::BopObjective obj(sc, lay, j_standalone, sc.solver.regularizer,
                           std::move(factor_scale));
  auto rows = detail::build_rows(sc, lay);
  optim::ConcaveProblem p;
  p.n = lay.size();
  p.objective = &obj;
  p.ineq = rows.ineq;
  p.eq = rows.eq;
  detail::set_boxes(sc, lay, p);
  Vec x0 = detail::interior_start(sc, lay, p.lower, p.upper, obj, p.ineq, p.eq);
  auto sol = optim::maximize(p, x0, sc.solver.tol_inner, sc.solver.max_inner_iters);

  BargainOutcome out;
  out.allocation = lay.unpack(sc, sol.x);
  detail::canonicalize_payments(g, out.allocation);
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  out.ineq_mult = sol.ineq_mult;
  out.ineq_tags = rows.ineq_tags;
  out.eq_mult = sol.eq_mult;
  out.complementarity = sol.complementarity;
  for (UserIx i = 0; i < g.n(); ++i) {
    Real j = economics::payoff(g, out.allocation, sc.users[i], sc.link_energy, i, sc.period_s);
    Real h = economics::currency_balance(g, out.allocation, sc.users[i], i, sc.gamma);
    out.payoff_j.push_back(j);
    out.currency_h.push_back(h);
    out.nash_factor.push_back(j + h - j_standalone[i] -
                              sc.users[i].currency_weight * sc.users[i].currency_budget);
  }
  out.objective = nash_objective(sc, out.allocation, j_standalone);
  out.residuals = constraints::full_report(sc, out.allocation, j_standalone, 1e-5);
  out.kkt_stationarity = detail::stationarity_certificate(p, lay.pack(sc, out.allocation));
  return out;
}

/// Residual summary per multiplier family: max stationarity contribution,
/// primal violation and complementary slackness.
struct KktReport {
  Real stationarity = 0.0;
  Real primal_feasibility = 0.0;
  Real complementarity = 0.0;
  std::map<std::string, Real> family_complementarity;
};

inline KktReport kkt_report(const Scenario& sc, const BargainOutcome& o,
                            const std::vector<Real>& j_standalone) {
  KktReport rep;
  rep.stationarity = o.kkt_stationarity;
  auto full = constraints::full_report(sc, o.allocation, j_standalone, 1e-5);
  rep.primal_feasibility = std::max(full.max_violation, 0.0);
  rep.complementarity = o.complementarity;
  for (size_t k = 0; k < o.ineq_mult.size(); ++k) {
    auto& fam = o.ineq_tags[k].family;
    rep.family_complementarity[fam] =
        std::max(rep.family_complementarity[fam], o.complementarity);
  }
  return rep;
}

}  // namespace upn::central

#endif  // UPN_BARGAIN_CENTRAL_HPP
