#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dkf/decomposition.hpp"
#include "dkf/simulator.hpp"

namespace dkf {

// Diagnostics of one weighted-averaging run.
struct ConsensusRun {
  int subgraph_id = 0;
  int iterations = 0;
  double residual = 0.0;      // max change over the last iteration
  long long messages = 0;     // one per directed edge per iteration
  double spectral_gap = 0.0;  // 1 - |lambda_2| of the weight matrix
};

struct ConsensusConfig {
  double tol = 1e-10;
  int max_iter = 10000;
  int fixed_iters = -1;  // >= 0: run exactly this many iterations, no throw
};

// Iterative weighted averaging over one connected subgraph. Each participant
// starts from its own value; every iteration applies the doubly stochastic
// weight matrix, which preserves the average exactly. The result is the
// average scaled by the participant count, i.e. the sum of the initial
// values, held by every participant. Throws ConvergenceError when max_iter is
// reached first.
struct ConsensusSumResult {
  std::vector<double> fused;  // per participant, all within tol of each other
  ConsensusRun run;
};
ConsensusSumResult consensus_sum(const std::vector<double>& values,
                                 const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                 const ConsensusConfig& cfg, int subgraph_id = 0);

struct FusionDiag {
  int max_iterations = 0;
  double max_residual = 0.0;
  long long messages = 0;
};

// Per-step fusion of the reduced observation vectors i^(l): one consensus per
// state over that state's participant subgraph. Every holder of a state ends
// with the sum of the observers' entries for it.
FusionDiag fuse_observation_vectors(const std::vector<SubSystem>& subsystems,
                                    const FusionTopology& topology,
                                    const std::vector<Eigen::VectorXd>& i_locals,
                                    const ConsensusConfig& cfg,
                                    std::vector<Eigen::VectorXd>& i_fused,
                                    CommNetwork* network = nullptr);

// One-time fusion of the reduced observation matrices I^(l): one consensus
// per state pair over the sensors modeling both states. For stationary
// observation models this runs once at startup.
FusionDiag fuse_observation_matrices(const std::vector<SubSystem>& subsystems,
                                     const FusionTopology& topology,
                                     const std::vector<Eigen::MatrixXd>& I_locals,
                                     const ConsensusConfig& cfg,
                                     std::vector<Eigen::MatrixXd>& I_fused,
                                     CommNetwork* network = nullptr);

// Both of the above; at convergence the union over sensors of the fused
// variables equals the global observation variables H^T R^{-1} y_k and
// H^T R^{-1} H on the covered entries.
struct FusedObservations {
  std::vector<Eigen::VectorXd> i_fused;
  std::vector<Eigen::MatrixXd> I_fused;
  FusionDiag diag;
};
FusedObservations fuse_observation_variables(const std::vector<SubSystem>& subsystems,
                                             const FusionTopology& topology,
                                             const std::vector<Eigen::VectorXd>& i_locals,
                                             const std::vector<Eigen::MatrixXd>& I_locals,
                                             const ConsensusConfig& cfg,
                                             CommNetwork* network = nullptr);

// Reduced observation variables (the consensus inputs).
Eigen::VectorXd reduced_obs_vector(const SubSystem& sub, const Eigen::VectorXd& y_l);
Eigen::MatrixXd reduced_obs_matrix(const SubSystem& sub);

}  // namespace dkf
