#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dkf/errors.hpp"
#include "dkf/rng.hpp"

namespace dkf {

using SpMat = Eigen::SparseMatrix<double>;

// Global sparse linear dynamical system
//
//   x_{k+1} = F x_k + G u_k,      u_k ~ N(0, Q)
//   y_k     = H x_k + w_k,        w_k ~ N(0, R),  x_0 ~ N(0, S0)
//
// observed by N sensors; H stacks the per-sensor blocks H_l row-wise and R is
// block-diagonal with one block per sensor.
struct GlobalModel {
  int n = 0;  // state dimension
  int p = 0;  // total observation rows
  SpMat F;    // n x n model matrix
  SpMat G;    // n x j' noise input matrix
  SpMat H;    // p x n stacked observation matrix
  Eigen::MatrixXd Q;   // j' x j' state noise covariance (PSD)
  Eigen::MatrixXd R;   // p x p block-diagonal observation noise covariance
  Eigen::MatrixXd S0;  // n x n initial state covariance (SPD)
  std::vector<std::pair<int, int>> sensor_rows;  // per sensor: [begin, end) rows of H

  int num_sensors() const { return static_cast<int>(sensor_rows.size()); }
  Eigen::MatrixXd H_l(int sensor) const;   // dense p_l x n block
  Eigen::MatrixXd R_l(int sensor) const;   // dense p_l x p_l block

  // Checks the structural invariants: sensor_rows partition [0, p), R is
  // block-diagonal and SPD per block, Q PSD, S0 SPD. Throws on violation.
  void validate() const;
};

struct Trajectory {
  std::vector<Eigen::VectorXd> states;        // x_0 .. x_K
  std::vector<Eigen::VectorXd> observations;  // y_0 .. y_K
  std::uint64_t seed = 0;
};

struct EllipticSpec {
  int grid_rows = 2;            // M
  int grid_cols = 2;            // J
  double mu = 0.0;              // diagonal coefficient of B
  double beta_h = 0.0;          // horizontal coupling
  double beta_v = 0.0;          // vertical coupling
  double dt = 1.0;              // sampling interval
  std::vector<int> noise_sites; // grid indices receiving process noise
  double noise_var = 1.0;       // per-site variance q
};

// Discretized elliptic-operator dynamics on an M x J grid:
//   F = I + dt * F_c,  F_c = I (x) B + A (x) C,
//   B = mu I + beta_h A,  C = beta_v I,
// with A tridiagonal (zero diagonal, unit off-diagonals). The boundary term
// is dropped. G gets one column per noise site with entry dt. The returned
// model has no sensors attached; see attach_* helpers or the harness.
GlobalModel build_elliptic_model(const EllipticSpec& spec);

// Draw a trajectory; pure function of (model, k_max, seed). Produces states
// x_0..x_{k_max} and matching observations.
Trajectory simulate(const GlobalModel& model, int k_max, std::uint64_t seed);

// Reverse Cuthill-McKee on the symmetrized pattern of F. Returns the permuted
// model (P F P^T, P G, H P^T, P S0 P^T) and the permutation as old-index ->
// new-index, so estimates can be mapped back.
std::pair<GlobalModel, std::vector<int>> bandwidth_reduce(const GlobalModel& model);

// Half-bandwidth of the structural pattern of A.
int matrix_bandwidth(const SpMat& A);

// Random sparse banded model in the style of the paper's experiments:
// nonzeros chosen at random inside the L-band, F normalized to unit spectral
// norm, G = I with Q = q I, one observation row per sensor with Normal(0,1)
// entries on an overlapping contiguous span, R = r I, S0 = s0 I.
struct RandomModelSpec {
  int n = 100;
  int num_sensors = 10;
  int band = 20;            // half-bandwidth of F
  double density = 0.25;    // fill ratio inside the band
  double q = 0.01;          // process noise variance
  double r = 0.25;          // observation noise variance
  double s0 = 1.0;          // initial covariance scale
  int obs_span = 14;        // states seen by one sensor (with overlap)
  std::uint64_t seed = 1;
};
GlobalModel build_random_model(const RandomModelSpec& spec);

// Structured text (JSON) model round-trip; save(load(f)) is byte-identical.
std::string save_model(const GlobalModel& model);
GlobalModel load_model(const std::string& text);

std::string trajectory_states_csv(const Trajectory& traj, const std::string& metadata);
std::string trajectory_observations_csv(const Trajectory& traj, const std::string& metadata);

}  // namespace dkf
