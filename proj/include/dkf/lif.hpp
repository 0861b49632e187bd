#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "dkf/band.hpp"
#include "dkf/consensus.hpp"
#include "dkf/decomposition.hpp"
#include "dkf/dici.hpp"
#include "dkf/model.hpp"
#include "dkf/simulator.hpp"

namespace dkf {

// Per-sensor information-domain state. The local error covariance S^(l) is
// not the inverse of the local information matrix Z^(l); the relation is
// global, through the assimilated band.
struct InfoState {
  int sensor_id = 0;
  int k = 0;
  bool predicted = true;
  Eigen::VectorXd z_pred;   // local predictor z^(l)_{k|k-1}
  Eigen::VectorXd z_filt;   // z^(l)_{k|k} (local copy, differs across sensors
                            // by the consensus residual)
  Eigen::MatrixXd Z_pred;   // window of the banded Z_{k|k-1}
  Eigen::MatrixXd Z_filt;   // window of the banded Z_{k|k}
  Eigen::MatrixXd S_filt;   // window of the assimilated S_{k|k}
  Eigen::MatrixXd S_pred;   // window of S_{k|k-1}
  Eigen::VectorXd x_filt;   // local Kalman-domain estimate
  Eigen::VectorXd d_hat;    // neighbor estimates of the internal inputs
};

struct LifConfig {
  int L = 1;
  ConsensusConfig consensus;
  JorConfig dici;           // matrix and vector iterations
  int dici_budget = -1;     // fixed DICI rounds per step; -1 = run to tol;
                            // 1 selects the decoupled mode (block-diagonal
                            // covariance treatment, no assimilation)
  bool count_flops = false;
  bool track_deviation = false;  // per-step shared-estimate deviation
  Exec exec = default_exec();
};

struct LifStepDiag {
  int consensus_iters = 0;
  double consensus_residual = 0.0;
  int dici_matrix_iters = 0;
  int dici_vector_iters = 0;
  double trace_S_filt = 0.0;
  double max_estimate_deviation = 0.0;  // over shared states, local z copies
};

// Covariance-side schedule of a LIF run. The information/covariance pipeline
// does not depend on the data realization, so Monte Carlo trials reuse one
// schedule and only propagate estimates.
struct LifSchedule {
  int L = 0;
  bool decoupled = false;
  BandProfile Z_pred0;
  std::vector<BandProfile> Z_filt;       // per step k
  std::vector<BandProfile> S_filt;
  std::vector<BandProfile> Z_pred_next;  // Z_{k+1|k}
  // Decoupled mode stores the per-sensor windows instead.
  std::vector<std::vector<Eigen::MatrixXd>> loc_Z_filt;
  std::vector<std::vector<Eigen::MatrixXd>> loc_S_filt;
  std::vector<std::vector<Eigen::MatrixXd>> loc_Z_pred_next;
  std::vector<LifStepDiag> diag;
  std::vector<double> trace_filt;
};

// The local Information filters: spatial decomposition, observation fusion by
// consensus, DICI assimilation of the error covariances, and the local
// prediction step, all over a deterministic synchronous-rounds fabric.
class LifRunner {
 public:
  LifRunner(const GlobalModel& model, std::vector<SubSystem> subsystems,
            FusionTopology topology, LifConfig config);

  // Initial conditions: z_{0|-1} = 0 and the prediction information windows
  // reconstructed from the S0 band. Also fuses the observation matrices
  // (one-time for stationary models). Asserts n_l >= L at every sensor.
  void init();

  // One full time step of the pipeline:
  // fuse observations -> local filter -> DICI (matrix) -> DICI (vector) ->
  // local prediction -> predictor/input exchange.
  LifStepDiag step(const Eigen::VectorXd& y_k);

  // Covariance-only run of k_max steps from the initial conditions.
  LifSchedule run_covariance_schedule(int k_max);

  // Estimate-only replay of one trajectory against a schedule. Returns the
  // filtered global estimates per step.
  std::vector<Eigen::VectorXd> run_trial(const LifSchedule& schedule, const Trajectory& traj,
                                         std::vector<LifStepDiag>* diags = nullptr);

  const std::vector<InfoState>& states() const { return states_; }
  const std::vector<SubSystem>& subsystems() const { return subsystems_; }
  const DiciPartition& partition() const { return *partition_; }
  CommNetwork& network() { return *network_; }
  int current_k() const { return k_; }
  const LifConfig& config() const { return config_; }

  // Assembled global views (authoritative owner values).
  const BandProfile& Z_pred_band() const { return Z_pred_band_; }
  const BandProfile& Z_filt_band() const { return Z_filt_band_; }
  const BandProfile& S_filt_band() const { return S_filt_band_; }
  Eigen::VectorXd z_filt_global() const { return z_filt_global_; }
  Eigen::VectorXd z_pred_global() const { return z_pred_global_; }
  Eigen::VectorXd x_filt_global() const { return x_filt_global_; }
  double trace_S_filt() const;

  // Per shared state, the max pairwise deviation of the sensors' local
  // filtered information estimates; NaN for states held by one sensor.
  std::vector<double> check_estimate_consensus() const;

 private:
  struct PredictionOutput {
    BandProfile S_pred_band;
    std::vector<Eigen::MatrixXd> S_pred_loc;
  };

  void fuse_step_vectors(const Eigen::VectorXd& y_k, LifStepDiag& diag);
  void local_filter_update();
  void dici_matrix_phase(LifStepDiag& diag);
  void dici_vector_phase(LifStepDiag& diag);
  PredictionOutput prediction_covariance();
  void prediction_information(const PredictionOutput& pred);
  void predictor_banded(const BandProfile& Z_next);
  void predictor_decoupled(const std::vector<Eigen::MatrixXd>& Z_next_loc);
  void audit_read_span(int sensor, int lo, int hi) const;
  void record_band_reads(int sensor, int lo, int hi, Phase phase);

  const GlobalModel& model_;
  std::vector<SubSystem> subsystems_;
  FusionTopology topology_;
  LifConfig config_;
  std::unique_ptr<DiciPartition> partition_;
  std::unique_ptr<CommNetwork> network_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> F_rows_;
  Eigen::MatrixXd GQGt_;
  std::vector<Eigen::MatrixXd> I_fused_;  // one-time fused observation matrices
  std::vector<Eigen::VectorXd> i_fused_;  // per-step fused observation vectors
  std::vector<InfoState> states_;
  std::vector<std::pair<int, int>> nbhd_span_;  // own+neighbor window index range

  BandProfile Z_pred_band_, Z_filt_band_, S_filt_band_;
  Eigen::VectorXd z_filt_global_, z_pred_global_, x_filt_global_;
  int k_ = 0;
  bool initialized_ = false;
};

// Standard decomposition pipeline for a model: cut-point sets from the
// observation support, coverage and dimension extension, band-coverage
// repair, sub-systems, default communication graph, fusion topology.
struct LifSetup {
  std::vector<SubSystem> subsystems;
  FusionTopology topology;
};
LifSetup make_lif_setup(const GlobalModel& model, int L);

}  // namespace dkf
