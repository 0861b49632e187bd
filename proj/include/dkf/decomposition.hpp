#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dkf/model.hpp"

namespace dkf {

// Directed graphical representation of the system: vertices are the states
// and the noise inputs, and the interconnection matrix E has a 1 exactly
// where [F | G] is structurally nonzero.
struct SystemDigraph {
  int num_states = 0;
  int num_inputs = 0;
  Eigen::MatrixXi E;  // num_states x (num_states + num_inputs), binary

  // Undirected state adjacency (pattern of F symmetrized), used for BFS
  // growth and distance queries.
  std::vector<std::vector<int>> state_adj;
};

SystemDigraph build_digraph(const GlobalModel& model);

// Per-sensor reduced model extracted from a cut-point set: the local states
// x^(l) = T_l x, the local dynamics F^(l), the internal-input matrix D^(l)
// over the out-of-cutset states feeding the cutset, the local noise matrix
// G^(l), and the reduced observation pair (H^(l), R_l).
struct SubSystem {
  int sensor_id = 0;
  std::vector<int> cutset;          // ordered ascending global state indices
  std::vector<int> d_input_states;  // global indices of the internal inputs
  std::vector<int> noise_ids;       // G columns feeding the cutset
  SpMat T;                          // n_l x n selector, rows are unit vectors
  Eigen::MatrixXd F_loc;            // n_l x n_l
  Eigen::MatrixXd D_loc;            // n_l x d_l
  Eigen::MatrixXd G_loc;            // n_l x g_l
  Eigen::MatrixXd H_red;            // p_l x n_l
  Eigen::MatrixXd R_l;              // p_l x p_l

  int n_l() const { return static_cast<int>(cutset.size()); }
  // Position of global state g inside the cutset, -1 if absent.
  int local_index(int g) const;
};

// Cut-point sets: the states each sensor's observation rows touch. States
// observed by nobody are assigned to the sensor nearest in digraph distance
// (ties to the lowest sensor id), so the sets always cover X.
std::vector<std::vector<int>> cut_point_sets(const GlobalModel& model);

// Grow each set to at least L states by breadth-first search over the state
// graph, taking the lowest-index vertex first at every layer. Falls back to
// ascending unused indices if a component is exhausted.
std::vector<std::vector<int>> extend_cutsets(const std::vector<std::vector<int>>& sets, int L,
                                             const SystemDigraph& digraph);

// Ensure every in-band pair (i, j), |i-j| <= L, lies inside at least one
// cutset, which the distributed inversion requires of its windows. Scans
// pairs in order and extends the best-placed set deterministically.
std::vector<std::vector<int>> extend_for_band_coverage(const std::vector<std::vector<int>>& sets,
                                                       int L, int n);

SubSystem build_subsystem(const GlobalModel& model, const std::vector<int>& cutset,
                          int sensor_id);

// Undirected sensor communication graph.
struct CommGraph {
  int num_sensors = 0;
  std::vector<std::vector<int>> adj;  // sorted neighbor lists

  bool has_edge(int a, int b) const;
};

// Default topology: sensors are adjacent when their cutsets overlap or when
// one models an internal-input state of the other.
CommGraph default_comm_graph(const std::vector<SubSystem>& subsystems);

// Bipartite fusion graph plus the per-state consensus machinery. B connects
// sensor s to state x_j when H_s has a nonzero in column j. The fusion
// subgraph vertex set G_j comes from B; the consensus for state j runs over
// all sensors modeling j (a superset of G_j whose extra members hold
// structural zeros, leaving the fused sum unchanged) so that every holder of
// the state ends up with the fused value.
struct FusionTopology {
  std::vector<std::pair<int, int>> bipartite_edges;  // (sensor, state)
  std::vector<std::vector<int>> observers;           // per state: G_j vertex set
  std::vector<std::vector<int>> participants;        // per state: sensors modeling j
  std::vector<Eigen::MatrixXd> weights;  // per state: Metropolis weights over participants
  CommGraph comm;
};

// Throws when the consensus subgraph of some state is disconnected under the
// communication graph (fusion for that state would not converge); the message
// names the state.
FusionTopology build_fusion_topology(const GlobalModel& model,
                                     const std::vector<SubSystem>& subsystems,
                                     const CommGraph& comm);

// Symmetric doubly stochastic Metropolis weights over the subgraph induced by
// `members` (w_uv = 1/(1 + max(deg_u, deg_v)) on edges, diagonal absorbs the
// rest).
Eigen::MatrixXd metropolis_weights(const std::vector<int>& members, const CommGraph& comm);

// Human-readable per-sensor report: cutset, internal inputs, noise ids,
// neighbors.
std::string decomposition_report(const std::vector<SubSystem>& subsystems,
                                 const CommGraph& comm);

// Edge list CSV of the bipartite fusion graph.
std::string fusion_edges_csv(const FusionTopology& topology);

}  // namespace dkf
