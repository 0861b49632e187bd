#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dkf/band.hpp"
#include "dkf/parallel.hpp"
#include "dkf/rng.hpp"
#include "dkf/simulator.hpp"

namespace dkf {

// Jacobi overrelaxation configuration. With M = diag(Z) the multiplier is
//   P_gamma = (1 - gamma) I + gamma M^{-1} (M - Z) = I - gamma M^{-1} Z.
struct JorConfig {
  double gamma = 0.1;
  double tol = 1e-10;
  int max_iter = 10000;
  int stop_window = 1;  // consecutive rounds below tol required to stop
};

// One dense JOR step S_next = P S + gamma M^{-1}; rows are independent, so
// the OpenMP path is bit-identical to the serial one.
void jor_step(const Eigen::Ref<const Eigen::MatrixXd>& P,
              const Eigen::Ref<const Eigen::VectorXd>& gamma_Minv,
              const Eigen::Ref<const Eigen::MatrixXd>& S, Eigen::Ref<Eigen::MatrixXd> S_next,
              Exec exec);

struct JorResult {
  Eigen::MatrixXd S;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
  std::vector<double> error_norms;  // ||S_t - reference||_2 per iteration, if requested
};

// Iterates S_{t+1} = P_gamma S_t + gamma M^{-1} from S_0 = M^{-1} until the
// Frobenius change drops below tol. Verifies the spectral radius of P_gamma
// up front and suggests a smaller gamma on failure; throws ConvergenceError
// when max_iter is reached. An optional reference inverse enables per-step
// error norms; an optional S_0 override supports matched-start comparisons.
JorResult jor_inverse(const Eigen::Ref<const Eigen::MatrixXd>& Z, const JorConfig& cfg,
                      const Eigen::MatrixXd* reference = nullptr,
                      const Eigen::MatrixXd* S0_override = nullptr,
                      Exec exec = default_exec());

// Sensor windows for the distributed algorithms: sorted global index sets.
// Every in-band pair must lie inside at least one window; the lowest such
// window is the entry's authoritative owner.
class DiciPartition {
 public:
  DiciPartition(std::vector<std::vector<int>> windows, int n, int L);

  int n() const { return n_; }
  int L() const { return L_; }
  int num_windows() const { return static_cast<int>(windows_.size()); }
  const std::vector<int>& window(int l) const { return windows_[l]; }
  const std::vector<std::pair<int, int>>& owned_pairs(int l) const { return owned_[l]; }
  int pair_owner(int i, int j) const;  // -1 when uncovered
  int state_owner(int i) const { return state_owner_[i]; }
  bool window_contains(int l, int v) const;
  // In-band entries within reach of sensor l but outside its window, grouped
  // by owner; fixed given the windows, used for per-round traffic.
  const std::vector<std::pair<int, long long>>& halo_by_owner(int l) const { return halo_[l]; }

 private:
  std::vector<std::vector<int>> windows_;
  std::vector<std::vector<std::pair<int, int>>> owned_;
  std::vector<int> state_owner_;
  std::vector<std::vector<std::pair<int, long long>>> halo_;
  int n_ = 0, L_ = 0;
};

struct DiciOptions {
  JorConfig jor;
  int fixed_rounds = -1;            // >= 0: run exactly this many rounds
  bool count_flops = false;         // per-sensor evaluators and flop counters
  bool recompute_all_owners = false;  // audit: every co-owner recomputes shared entries
  CommNetwork* network = nullptr;   // per-round halo traffic accounting
  const Eigen::MatrixXd* reference = nullptr;  // dense Z^{-1} for error tracking
  Exec exec = default_exec();
};

struct DiciResult {
  BandProfile S;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
  std::vector<long long> sensor_flops;       // total per sensor (count_flops)
  std::vector<double> error_norms;           // ||collapse(S_t) - ref||_2 per round
  double max_shared_entry_gap = 0.0;         // audit mode: bit-agreement check
};

// Distributed iterate-collapse inversion with overrelaxation. Z must be SPD
// and exactly L-banded, held as overlapping local windows. Initial condition
// is S_0^(l) = (Z^(l))^{-1}, computed without communication. Each round
// updates every in-band entry through the JOR row iterate, pulling any
// off-band value it needs from the collapse step instead of iterating on it;
// the update is symmetrized so the iterate stays in the SPD domain of the
// collapse operator. Per-round work at a sensor depends only on its window
// size and L, never on n.
DiciResult dici_or_band_inverse(const BandProfile& Z_band, const DiciPartition& partition,
                                const DiciOptions& options);

// The DICI starting band: every in-band entry taken from the inverse of its
// authoritative owner's local Z window. No communication involved.
BandProfile dici_initial_band(const BandProfile& Z_band, const DiciPartition& partition);

struct DiciVectorResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
};

// Distributed JOR on vectors for Z x = z over the same partition: each sensor
// iterates its own states from neighbor values. No collapse is needed for
// vectors. Starts from x_0 = M^{-1} z.
DiciVectorResult dici_solve_vector(const BandProfile& Z_band, const DiciPartition& partition,
                                   const Eigen::Ref<const Eigen::VectorXd>& z,
                                   const DiciOptions& options);

// Random SPD matrix in the style of the contraction experiment: symmetrize a
// Gaussian matrix, then resample its eigenvalues from Uniform(0, 10].
Eigen::MatrixXd random_spd(int n, Rng& rng);

// The same draw rescaled to unit diagonal. With M = I the multiplier P_gamma
// is symmetric, which makes the spectral-norm decay bound of the JOR
// iteration exact rather than approximate.
Eigen::MatrixXd random_spd_unit_diag(int n, Rng& rng);

// Random SPD exactly L-banded matrix (diagonally dominant draw).
BandProfile random_banded_spd(int n, int L, Rng& rng);

struct ContractionTrial {
  double alpha = 0.0;
  int band = 0;
  int resamples = 0;
};

// One trial of the contraction-quotient experiment: draw a random L-banded
// SPD problem matrix and two random SPD iterates, apply the iterate-collapse
// composition to both and return the spectral-norm quotient
// ||U(X) - U(Y)|| / ||X - Y||. Degenerate draws are resampled.
ContractionTrial contraction_trial(int n, Rng& rng, double gamma = 0.1);

struct ErrorBoundCurves {
  std::vector<double> max_diff;   // per iteration over trials of ||E_jor|| - ||E_dici||
  std::vector<double> min_diff;
  std::vector<double> mean_diff;
  std::vector<double> jor_final;  // final error norms per trial
  std::vector<double> dici_final;
};

// Starting point of the JOR side of the comparison. `own` is each
// algorithm's specified initial condition (M^{-1} for JOR, the local window
// inverses for DICI); the bound claim is about this pairing. `matched`
// starts JOR from the collapse completion of the DICI initial band, under
// which the two iterations are literally the same map when L = n-1.
enum class ErrorBoundInit { own, matched };

// Monte Carlo comparison of the JOR and DICI-OR error processes on the same
// random banded SPD problems.
ErrorBoundCurves error_bound_experiment(int n, int L, int num_windows, int trials,
                                        int iterations, double gamma, std::uint64_t seed,
                                        ErrorBoundInit init = ErrorBoundInit::own);

}  // namespace dkf
