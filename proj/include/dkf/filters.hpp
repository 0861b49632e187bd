#pragma once

#include <Eigen/Dense>

#include "dkf/band.hpp"
#include "dkf/model.hpp"

namespace dkf {

// Centralized Information filter state. The information pair relates to the
// Kalman-domain pair through Z = S^{-1} and z = Z x.
struct CifState {
  Eigen::VectorXd z;  // information estimate
  Eigen::MatrixXd Z;  // information matrix
  bool predicted = true;  // phase tag: prediction (k|k-1) or filter (k|k)
  int k = 0;
};

// Z_{0|-1} = S0^{-1}, z_{0|-1} = 0.
CifState cif_init(const GlobalModel& model);

// Filter update: Z_{k|k} = Z_{k|k-1} + H^T R^{-1} H, z_{k|k} = z_{k|k-1} + H^T R^{-1} y.
void cif_filter(CifState& state, const GlobalModel& model, const Eigen::VectorXd& y);

// Prediction: Z_{k+1|k} = (F Z^{-1} F^T + G Q G^T)^{-1},
//             z_{k+1|k} = Z_{k+1|k} F Z^{-1} z.
void cif_predict(CifState& state, const GlobalModel& model);

// One full step: filter on y_k, then predict.
void cif_step(CifState& state, const GlobalModel& model, const Eigen::VectorXd& y);

Eigen::VectorXd cif_estimate(const CifState& state);       // x = Z^{-1} z
Eigen::MatrixXd cif_covariance(const CifState& state);     // S = Z^{-1}

// Steady-state trace of the filtered error covariance (the Riccati
// benchmark): iterates the covariance recursion until the trace settles.
double riccati_trace(const GlobalModel& model, double rel_tol = 1e-10, int max_steps = 100000);

// Centralized L-banded Information filter: the CIF with both information
// matrices replaced by their L-banded approximations. The prediction-side
// approximation keeps the band of S and reconstructs the banded inverse; the
// filter-side contribution of the observations is band-projected.
struct ClbifState {
  Eigen::VectorXd z;
  BandProfile Z;  // exactly L-banded
  bool predicted = true;
  int k = 0;
};

ClbifState clbif_init(const GlobalModel& model, int L);

void clbif_filter(ClbifState& state, const GlobalModel& model, const Eigen::VectorXd& y);
void clbif_predict(ClbifState& state, const GlobalModel& model);
void clbif_step(ClbifState& state, const GlobalModel& model, const Eigen::VectorXd& y);

Eigen::VectorXd clbif_estimate(const ClbifState& state);
Eigen::MatrixXd clbif_covariance(const ClbifState& state);  // dense (Z_band)^{-1}

}  // namespace dkf
