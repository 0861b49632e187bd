#include "dkf/filters.hpp"

#include <Eigen/Cholesky>

namespace dkf {

namespace {

Eigen::MatrixXd spd_inverse(const Eigen::Ref<const Eigen::MatrixXd>& A, const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw Error(std::string(who) + ": matrix not SPD");
  return llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

Eigen::MatrixXd obs_information(const GlobalModel& model) {
  if (model.p == 0) return Eigen::MatrixXd::Zero(model.n, model.n);
  const Eigen::MatrixXd Hd(model.H);
  return Hd.transpose() * model.R.llt().solve(Hd);
}

Eigen::VectorXd obs_vector(const GlobalModel& model, const Eigen::VectorXd& y) {
  if (model.p == 0) return Eigen::VectorXd::Zero(model.n);
  const Eigen::MatrixXd Hd(model.H);
  return Hd.transpose() * model.R.llt().solve(y);
}

}  // namespace

CifState cif_init(const GlobalModel& model) {
  CifState s;
  s.Z = spd_inverse(model.S0, "cif_init/S0");
  s.z = Eigen::VectorXd::Zero(model.n);
  s.predicted = true;
  s.k = 0;
  return s;
}

void cif_filter(CifState& state, const GlobalModel& model, const Eigen::VectorXd& y) {
  state.Z += obs_information(model);
  state.z += obs_vector(model, y);
  state.predicted = false;
}

void cif_predict(CifState& state, const GlobalModel& model) {
  const Eigen::MatrixXd S = spd_inverse(state.Z, "cif_predict/Z");
  const Eigen::MatrixXd Fd(model.F);
  const Eigen::MatrixXd Gd(model.G);
  const Eigen::MatrixXd S_pred = Fd * S * Fd.transpose() + Gd * model.Q * Gd.transpose();
  state.Z = spd_inverse(S_pred, "cif_predict/S_pred");
  state.z = state.Z * (Fd * (S * state.z));
  state.predicted = true;
  ++state.k;
}

void cif_step(CifState& state, const GlobalModel& model, const Eigen::VectorXd& y) {
  cif_filter(state, model, y);
  cif_predict(state, model);
}

Eigen::VectorXd cif_estimate(const CifState& state) {
  return state.Z.llt().solve(state.z);
}

Eigen::MatrixXd cif_covariance(const CifState& state) {
  return spd_inverse(state.Z, "cif_covariance");
}

double riccati_trace(const GlobalModel& model, double rel_tol, int max_steps) {
  CifState s = cif_init(model);
  const Eigen::VectorXd y0 = Eigen::VectorXd::Zero(model.p);
  double prev = -1.0;
  for (int k = 0; k < max_steps; ++k) {
    cif_filter(s, model, y0);
    const double tr = cif_covariance(s).trace();
    if (prev >= 0.0 && std::abs(tr - prev) <= rel_tol * std::max(1.0, std::abs(tr))) return tr;
    prev = tr;
    cif_predict(s, model);
  }
  throw ConvergenceError("riccati_trace: no steady state within max_steps", prev);
}

ClbifState clbif_init(const GlobalModel& model, int L) {
  ClbifState s;
  s.Z = lband_invert(band_project(model.S0, L));
  s.z = Eigen::VectorXd::Zero(model.n);
  s.predicted = true;
  s.k = 0;
  return s;
}

void clbif_filter(ClbifState& state, const GlobalModel& model, const Eigen::VectorXd& y) {
  // The L-banded approximation of Z_{k|k}: off-band observation cross terms
  // are dropped by the projection.
  const Eigen::MatrixXd I_glob = obs_information(model);
  const int L = state.Z.half_width();
  const int n = state.Z.dim();
  for (int i = 0; i < n; ++i)
    for (int j = i; j <= std::min(n - 1, i + L); ++j) state.Z.at(i, j) += I_glob(i, j);
  state.z += obs_vector(model, y);
  state.predicted = false;
}

void clbif_predict(ClbifState& state, const GlobalModel& model) {
  const int L = state.Z.half_width();
  const Eigen::MatrixXd S = spd_inverse(state.Z.dense(), "clbif_predict/Z");
  const Eigen::MatrixXd Fd(model.F);
  const Eigen::MatrixXd Gd(model.G);
  const Eigen::MatrixXd S_pred = Fd * S * Fd.transpose() + Gd * model.Q * Gd.transpose();
  const Eigen::VectorXd x = S * state.z;
  state.Z = lband_invert(band_project(S_pred, L));
  // Banded matrix-vector product for the predictor.
  const Eigen::VectorXd fx = Fd * x;
  Eigen::VectorXd zp = Eigen::VectorXd::Zero(state.Z.dim());
  for (int i = 0; i < state.Z.dim(); ++i)
    for (int j = std::max(0, i - L); j <= std::min(state.Z.dim() - 1, i + L); ++j)
      zp(i) += state.Z.at(i, j) * fx(j);
  state.z = zp;
  state.predicted = true;
  ++state.k;
}

void clbif_step(ClbifState& state, const GlobalModel& model, const Eigen::VectorXd& y) {
  clbif_filter(state, model, y);
  clbif_predict(state, model);
}

Eigen::VectorXd clbif_estimate(const ClbifState& state) {
  return state.Z.dense().llt().solve(state.z);
}

Eigen::MatrixXd clbif_covariance(const ClbifState& state) {
  return spd_inverse(state.Z.dense(), "clbif_covariance");
}

}  // namespace dkf
