#ifndef UPN_TOPOLOGY_HPP
#define UPN_TOPOLOGY_HPP

#include <algorithm>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "upn/common.hpp"

namespace upn::topology {

// Distance beyond which no data link exists, whatever the configured range.
constexpr Real kMaxLinkRange = 30.0;

/// C(d, b) = b * 100 * ln(1 + 0.9/d^2)  [Mbit/s], zero past 30 m.
///
/// The log base is natural: it is the only base matching both published
/// anchor speeds (~64 Mbit/s at 1 m, ~0.1 Mbit/s at 30 m).
inline Real link_capacity(Real d, Real b) {
  if (!(d > 0.0)) throw DomainError("link_capacity: distance must be > 0");
  if (b < 0.5 || b > 1.0) throw DomainError("link_capacity: background factor outside [0.5,1]");
  if (d > kMaxLinkRange) return 0.0;
  return b * 100.0 * std::log(1.0 + 0.9 / (d * d));
}

struct Position {
  Real x = 0.0, y = 0.0;
};

inline Real distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// One-hop neighbor sets of a node, with interference-extended variants.
struct NeighborSets {
  std::vector<UserIx> in;        // In(i)  = {j : (j,i) in E}
  std::vector<UserIx> out;       // Out(i) = {j : (i,j) in E}
  std::vector<UserIx> ext_in;    // In(i)  plus B-adjacent nodes
  std::vector<UserIx> ext_out;   // Out(i) plus B-adjacent nodes
  std::vector<UserIx> nbhd;      // N(i)   = In u Out
  std::vector<UserIx> ext_nbhd;  // N^e(i) = In^e u Out^e
};

/// Directed mesh graph with per-link per-channel capacities.
///
/// Immutable after construction; all queries are const and thread-safe.
struct NetworkGraph {
  std::vector<int> node_ids;             // external ids, index = dense UserIx
  std::vector<Position> positions;       // may be empty when links were given explicitly
  int channel_count = 0;

  // Directed communication links, dense-indexed.
  std::vector<std::pair<UserIx, UserIx>> links;          // (from, to)
  std::vector<std::vector<Real>> cap;                    // cap[link][f] > 0
  std::vector<std::pair<UserIx, UserIx>> intf_links;     // unordered, stored from<to

  // Derived lookups.
  std::map<std::pair<UserIx, UserIx>, LinkIx> link_index;
  std::vector<NeighborSets> nbr;                         // per node
  std::vector<std::vector<LinkIx>> out_links, in_links;  // per node
  std::vector<std::vector<LinkIx>> intf_set;             // I(i,j) per link, excludes the link itself

  int n() const { return static_cast<int>(node_ids.size()); }
  int num_links() const { return static_cast<int>(links.size()); }
  bool has_link(UserIx i, UserIx j) const { return link_index.count({i, j}) > 0; }
  LinkIx link_at(UserIx i, UserIx j) const {
    auto it = link_index.find({i, j});
    if (it == link_index.end()) throw DomainError("link not in E");
    return it->second;
  }
  UserIx index_of(int node_id) const {
    auto it = std::lower_bound(node_ids.begin(), node_ids.end(), node_id);
    if (it == node_ids.end() || *it != node_id) throw DomainError("unknown node id");
    return static_cast<UserIx>(it - node_ids.begin());
  }
};

namespace detail {

inline std::vector<UserIx> sorted_unique(std::vector<UserIx> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline void build_neighbor_sets(NetworkGraph& g) {
  const int n = g.n();
  g.nbr.assign(n, {});
  g.out_links.assign(n, {});
  g.in_links.assign(n, {});
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    g.nbr[i].out.push_back(j);
    g.nbr[j].in.push_back(i);
    g.out_links[i].push_back(l);
    g.in_links[j].push_back(l);
  }
  std::vector<std::vector<UserIx>> bnbr(n);
  for (auto [a, b] : g.intf_links) {
    bnbr[a].push_back(b);
    bnbr[b].push_back(a);
  }
  for (int i = 0; i < n; ++i) {
    auto& s = g.nbr[i];
    s.in = sorted_unique(s.in);
    s.out = sorted_unique(s.out);
    s.ext_in = s.in;
    s.ext_out = s.out;
    s.ext_in.insert(s.ext_in.end(), bnbr[i].begin(), bnbr[i].end());
    s.ext_out.insert(s.ext_out.end(), bnbr[i].begin(), bnbr[i].end());
    s.ext_in = sorted_unique(s.ext_in);
    s.ext_out = sorted_unique(s.ext_out);
    s.nbhd = s.in;
    s.nbhd.insert(s.nbhd.end(), s.out.begin(), s.out.end());
    s.nbhd = sorted_unique(s.nbhd);
    s.ext_nbhd = s.ext_in;
    s.ext_nbhd.insert(s.ext_nbhd.end(), s.ext_out.begin(), s.ext_out.end());
    s.ext_nbhd = sorted_unique(s.ext_nbhd);
  }
}

// I(i,j) = {(c,b),(a,c) : c in N^e(i) u N^e(j), b in Out(c), a in In(c)} \ {(i,j)}.
// The link itself is excluded; its own airtime term enters the interference
// constraint separately.
inline void build_interference_sets(NetworkGraph& g) {
  g.intf_set.assign(g.num_links(), {});
  for (LinkIx l = 0; l < g.num_links(); ++l) {
    auto [i, j] = g.links[l];
    std::vector<UserIx> centers = g.nbr[i].ext_nbhd;
    centers.insert(centers.end(), g.nbr[j].ext_nbhd.begin(), g.nbr[j].ext_nbhd.end());
    centers = sorted_unique(centers);
    std::set<LinkIx> acc;
    for (UserIx c : centers) {
      for (LinkIx lo : g.out_links[c]) acc.insert(lo);   // (c,b), b in Out(c)
      for (LinkIx li : g.in_links[c]) acc.insert(li);    // (a,c), a in In(c)
    }
    acc.erase(l);
    g.intf_set[l].assign(acc.begin(), acc.end());
  }
}

inline bool union_graph_connected(const NetworkGraph& g) {
  const int n = g.n();
  if (n <= 1) return true;
  std::vector<std::vector<UserIx>> adj(n);
  for (auto [i, j] : g.links) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto [a, b] : g.intf_links) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(n, 0);
  std::vector<UserIx> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    UserIx u = stack.back();
    stack.pop_back();
    for (UserIx v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
  }
  return reached == n;
}

}  // namespace detail

inline void finalize_graph(NetworkGraph& g) {
  g.link_index.clear();
  for (LinkIx l = 0; l < g.num_links(); ++l) g.link_index[g.links[l]] = l;
  detail::build_neighbor_sets(g);
  detail::build_interference_sets(g);
  for (LinkIx l = 0; l < g.num_links(); ++l)
    for (Real c : g.cap[l])
      if (!(c > 0.0)) throw ScenarioError("communication link with non-positive capacity");
  if (!detail::union_graph_connected(g))
    throw ScenarioError("UPN graph is not connected; scenario rejected");
  for (auto [a, b] : g.intf_links)
    if (g.link_index.count({a, b}) || g.link_index.count({b, a}))
      throw ScenarioError("interference link duplicates a communication link");
}

/// Build the graph from node positions. (i,j) and (j,i) enter E when
/// d_ij <= comm_range; pairs in (comm_range, intf_range] become interference
/// links. Rejects duplicate ids and disconnected results.
inline NetworkGraph build_graph(const std::map<int, Position>& positions, Real comm_range,
                                int channel_count,
                                const std::map<std::tuple<int, int, int>, Real>& bg_factors,
                                Real intf_range = -1.0) {
  if (!(comm_range > 0.0)) throw ScenarioError("comm_range must be positive");
  if (comm_range > kMaxLinkRange)
    throw ScenarioError("comm_range exceeds the 30 m capacity cutoff");
  if (channel_count < 1) throw ScenarioError("channel_count must be >= 1");
  if (intf_range < 0.0) intf_range = comm_range;  // default: B empty
  NetworkGraph g;
  g.channel_count = channel_count;
  for (auto& [id, p] : positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ScenarioError("non-finite position");
    g.node_ids.push_back(id);
    g.positions.push_back(p);
  }
  // std::map keys are unique; duplicate detection applies to list-style input
  // (see scenario parsing), here ids arrive deduplicated and sorted.
  const int n = g.n();
  auto bg = [&](int i, int j, int f) {
    auto it = bg_factors.find({g.node_ids[i], g.node_ids[j], f});
    if (it != bg_factors.end()) return it->second;
    return 1.0;
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      Real d = distance(g.positions[i], g.positions[j]);
      if (d <= comm_range && d <= kMaxLinkRange) {
        g.links.emplace_back(i, j);
        std::vector<Real> caps(channel_count);
        for (int f = 0; f < channel_count; ++f) caps[f] = link_capacity(d, bg(i, j, f));
        g.cap.push_back(std::move(caps));
      } else if (i < j && d <= intf_range) {
        g.intf_links.emplace_back(i, j);
      }
    }
  finalize_graph(g);
  return g;
}

/// I(i,j): every link whose transmission conflicts with (i,j).
inline std::vector<std::pair<UserIx, UserIx>> interfering_links(const NetworkGraph& g, UserIx i,
                                                                UserIx j) {
  LinkIx l = g.link_at(i, j);
  std::vector<std::pair<UserIx, UserIx>> out;
  out.reserve(g.intf_set[l].size());
  for (LinkIx m : g.intf_set[l]) out.push_back(g.links[m]);
  return out;
}

inline const NeighborSets& neighbor_sets(const NetworkGraph& g, UserIx i) {
  if (i < 0 || i >= g.n()) throw DomainError("neighbor_sets: unknown node");
  return g.nbr[i];
}

}  // namespace upn::topology

#endif  // UPN_TOPOLOGY_HPP
