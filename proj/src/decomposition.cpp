#include "dkf/decomposition.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

namespace dkf {

int SubSystem::local_index(int g) const {
  auto it = std::lower_bound(cutset.begin(), cutset.end(), g);
  if (it == cutset.end() || *it != g) return -1;
  return static_cast<int>(it - cutset.begin());
}

SystemDigraph build_digraph(const GlobalModel& model) {
  SystemDigraph dg;
  dg.num_states = model.n;
  dg.num_inputs = static_cast<int>(model.G.cols());
  dg.E = Eigen::MatrixXi::Zero(model.n, model.n + dg.num_inputs);
  for (int k = 0; k < model.F.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.F, k); it; ++it)
      if (it.value() != 0.0) dg.E(it.row(), it.col()) = 1;
  for (int k = 0; k < model.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.G, k); it; ++it)
      if (it.value() != 0.0) dg.E(it.row(), model.n + it.col()) = 1;

  dg.state_adj.resize(model.n);
  for (int r = 0; r < model.n; ++r)
    for (int c = 0; c < model.n; ++c)
      if (r != c && (dg.E(r, c) || dg.E(c, r))) dg.state_adj[r].push_back(c);
  return dg;
}

std::vector<std::vector<int>> cut_point_sets(const GlobalModel& model) {
  const int N = model.num_sensors();
  std::vector<std::set<int>> sets(N);
  for (int k = 0; k < model.H.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.H, k); it; ++it) {
      if (it.value() == 0.0) continue;
      const int row = static_cast<int>(it.row());
      for (int l = 0; l < N; ++l)
        if (row >= model.sensor_rows[l].first && row < model.sensor_rows[l].second)
          sets[l].insert(static_cast<int>(it.col()));
    }

  // Coverage extension: unobserved states go to the nearest sensor in
  // digraph distance, ties to the lowest sensor id.
  std::vector<char> covered(model.n, 0);
  for (const auto& s : sets)
    for (int v : s) covered[v] = 1;
  bool all = std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; });
  if (!all) {
    const SystemDigraph dg = build_digraph(model);
    // Multi-source BFS per sensor gives distances from each cut-point set.
    std::vector<std::vector<int>> dist(N, std::vector<int>(model.n, std::numeric_limits<int>::max()));
    for (int l = 0; l < N; ++l) {
      std::deque<int> q;
      for (int v : sets[l]) {
        dist[l][v] = 0;
        q.push_back(v);
      }
      while (!q.empty()) {
        int v = q.front();
        q.pop_front();
        for (int u : dg.state_adj[v])
          if (dist[l][u] > dist[l][v] + 1) {
            dist[l][u] = dist[l][v] + 1;
            q.push_back(u);
          }
      }
    }
    for (int v = 0; v < model.n; ++v) {
      if (covered[v]) continue;
      int best = 0;
      for (int l = 1; l < N; ++l)
        if (dist[l][v] < dist[best][v]) best = l;
      sets[best].insert(v);
    }
  }

  std::vector<std::vector<int>> out(N);
  for (int l = 0; l < N; ++l) out[l].assign(sets[l].begin(), sets[l].end());
  return out;
}

std::vector<std::vector<int>> extend_cutsets(const std::vector<std::vector<int>>& sets, int L,
                                             const SystemDigraph& digraph) {
  if (L < 1) throw ConfigError("extend_cutsets: L must be >= 1");
  if (L > digraph.num_states) throw ConfigError("extend_cutsets: L exceeds the state dimension");
  std::vector<std::vector<int>> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    std::set<int> cur(s.begin(), s.end());
    // BFS layers over the state graph, lowest index first within a layer.
    std::set<int> frontier = cur;
    while (static_cast<int>(cur.size()) < L) {
      std::set<int> next;
      for (int v : frontier)
        for (int u : digraph.state_adj[v])
          if (!cur.count(u)) next.insert(u);
      if (next.empty()) {
        // Disconnected remainder: fall back to ascending unused indices.
        for (int v = 0; v < digraph.num_states && static_cast<int>(cur.size()) < L; ++v)
          cur.insert(v);
        break;
      }
      for (int u : next) {
        if (static_cast<int>(cur.size()) >= L) break;
        cur.insert(u);
      }
      frontier = next;
    }
    out.emplace_back(cur.begin(), cur.end());
  }
  return out;
}

std::vector<std::vector<int>> extend_for_band_coverage(const std::vector<std::vector<int>>& sets,
                                                       int L, int n) {
  std::vector<std::set<int>> cur;
  cur.reserve(sets.size());
  for (const auto& s : sets) cur.emplace_back(s.begin(), s.end());

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j <= std::min(n - 1, i + L); ++j) {
      bool covered = false;
      for (const auto& s : cur)
        if (s.count(i) && s.count(j)) {
          covered = true;
          break;
        }
      if (covered) continue;
      // Extend the set holding the most of [i, j] (ties to lowest id).
      int best = -1, best_hits = -1;
      for (std::size_t l = 0; l < cur.size(); ++l) {
        int hits = 0;
        for (int v = i; v <= j; ++v) hits += cur[l].count(v) ? 1 : 0;
        if (hits > best_hits) {
          best_hits = hits;
          best = static_cast<int>(l);
        }
      }
      for (int v = i; v <= j; ++v) cur[best].insert(v);
    }

  std::vector<std::vector<int>> out(cur.size());
  for (std::size_t l = 0; l < cur.size(); ++l) out[l].assign(cur[l].begin(), cur[l].end());
  return out;
}

SubSystem build_subsystem(const GlobalModel& model, const std::vector<int>& cutset,
                          int sensor_id) {
  if (cutset.empty()) throw ConfigError("build_subsystem: empty cut-point set");
  SubSystem sub;
  sub.sensor_id = sensor_id;
  sub.cutset = cutset;
  std::sort(sub.cutset.begin(), sub.cutset.end());
  const int nl = sub.n_l();

  std::vector<Eigen::Triplet<double>> tt;
  for (int r = 0; r < nl; ++r) tt.emplace_back(r, sub.cutset[r], 1.0);
  sub.T.resize(nl, model.n);
  sub.T.setFromTriplets(tt.begin(), tt.end());

  // Split F rows on the cutset into in-cutset columns (F^(l)) and the
  // out-of-cutset columns that feed them (D^(l)).
  const Eigen::MatrixXd Fd(model.F);
  std::set<int> dset;
  for (int r : sub.cutset)
    for (int c = 0; c < model.n; ++c)
      if (Fd(r, c) != 0.0 && sub.local_index(c) < 0) dset.insert(c);
  sub.d_input_states.assign(dset.begin(), dset.end());

  sub.F_loc.resize(nl, nl);
  for (int r = 0; r < nl; ++r)
    for (int c = 0; c < nl; ++c) sub.F_loc(r, c) = Fd(sub.cutset[r], sub.cutset[c]);
  sub.D_loc.resize(nl, static_cast<int>(sub.d_input_states.size()));
  for (int r = 0; r < nl; ++r)
    for (std::size_t c = 0; c < sub.d_input_states.size(); ++c)
      sub.D_loc(r, static_cast<int>(c)) = Fd(sub.cutset[r], sub.d_input_states[c]);

  const Eigen::MatrixXd Gd(model.G);
  std::set<int> nset;
  for (int r : sub.cutset)
    for (int c = 0; c < Gd.cols(); ++c)
      if (Gd(r, c) != 0.0) nset.insert(c);
  sub.noise_ids.assign(nset.begin(), nset.end());
  sub.G_loc.resize(nl, static_cast<int>(sub.noise_ids.size()));
  for (int r = 0; r < nl; ++r)
    for (std::size_t c = 0; c < sub.noise_ids.size(); ++c)
      sub.G_loc(r, static_cast<int>(c)) = Gd(sub.cutset[r], sub.noise_ids[c]);

  if (sensor_id < model.num_sensors()) {
    // H^(l) = H_l T_l^#; T_l has orthonormal rows so this is column selection.
    const Eigen::MatrixXd Hl = model.H_l(sensor_id);
    sub.H_red.resize(Hl.rows(), nl);
    for (int c = 0; c < nl; ++c) sub.H_red.col(c) = Hl.col(sub.cutset[c]);
    sub.R_l = model.R_l(sensor_id);
  }
  return sub;
}

bool CommGraph::has_edge(int a, int b) const {
  const auto& nb = adj[a];
  return std::binary_search(nb.begin(), nb.end(), b);
}

CommGraph default_comm_graph(const std::vector<SubSystem>& subsystems) {
  const int N = static_cast<int>(subsystems.size());
  CommGraph g;
  g.num_sensors = N;
  g.adj.resize(N);
  auto overlaps = [](const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) return true;
      a[i] < b[j] ? ++i : ++j;
    }
    return false;
  };
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) {
      const bool link = overlaps(subsystems[a].cutset, subsystems[b].cutset) ||
                        overlaps(subsystems[a].d_input_states, subsystems[b].cutset) ||
                        overlaps(subsystems[b].d_input_states, subsystems[a].cutset);
      if (link) {
        g.adj[a].push_back(b);
        g.adj[b].push_back(a);
      }
    }
  return g;
}

Eigen::MatrixXd metropolis_weights(const std::vector<int>& members, const CommGraph& comm) {
  const int m = static_cast<int>(members.size());
  std::vector<int> deg(m, 0);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (a != b && comm.has_edge(members[a], members[b])) ++deg[a];
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    double off = 0.0;
    for (int b = 0; b < m; ++b) {
      if (a == b || !comm.has_edge(members[a], members[b])) continue;
      W(a, b) = 1.0 / (1.0 + std::max(deg[a], deg[b]));
      off += W(a, b);
    }
    W(a, a) = 1.0 - off;
  }
  return W;
}

namespace {

bool connected_under(const std::vector<int>& members, const CommGraph& comm) {
  if (members.empty()) return true;
  std::set<int> seen{members[0]};
  std::deque<int> q{members[0]};
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int u : members)
      if (!seen.count(u) && comm.has_edge(v, u)) {
        seen.insert(u);
        q.push_back(u);
      }
  }
  return seen.size() == members.size();
}

}  // namespace

FusionTopology build_fusion_topology(const GlobalModel& model,
                                     const std::vector<SubSystem>& subsystems,
                                     const CommGraph& comm) {
  FusionTopology topo;
  topo.comm = comm;
  topo.observers.resize(model.n);
  topo.participants.resize(model.n);

  const Eigen::MatrixXd Hd(model.H);
  for (int l = 0; l < model.num_sensors(); ++l) {
    const auto [b, e] = model.sensor_rows[l];
    for (int j = 0; j < model.n; ++j) {
      bool nz = false;
      for (int r = b; r < e && !nz; ++r) nz = Hd(r, j) != 0.0;
      if (nz) {
        topo.bipartite_edges.emplace_back(l, j);
        topo.observers[j].push_back(l);
      }
    }
  }
  for (const auto& sub : subsystems)
    for (int j : sub.cutset) topo.participants[j].push_back(sub.sensor_id);

  topo.weights.resize(model.n);
  for (int j = 0; j < model.n; ++j) {
    if (!connected_under(topo.participants[j], comm))
      throw ConfigError("fusion topology: consensus subgraph for state " + std::to_string(j) +
                        " is disconnected under the communication graph");
    topo.weights[j] = metropolis_weights(topo.participants[j], comm);
  }
  return topo;
}

std::string decomposition_report(const std::vector<SubSystem>& subsystems,
                                 const CommGraph& comm) {
  std::ostringstream os;
  for (const auto& sub : subsystems) {
    os << "sensor " << sub.sensor_id << "\n  cutset:";
    for (int v : sub.cutset) os << ' ' << v;
    os << "\n  internal_inputs:";
    for (int v : sub.d_input_states) os << ' ' << v;
    os << "\n  noise_ids:";
    for (int v : sub.noise_ids) os << ' ' << v;
    os << "\n  neighbors:";
    for (int v : comm.adj[sub.sensor_id]) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

std::string fusion_edges_csv(const FusionTopology& topology) {
  std::ostringstream os;
  os << "sensor,state\n";
  for (const auto& [s, x] : topology.bipartite_edges) os << s << ',' << x << '\n';
  return os.str();
}

}  // namespace dkf
