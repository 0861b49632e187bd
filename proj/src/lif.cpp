#include "dkf/lif.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace dkf {

namespace {

constexpr int kPayloadSlack = 64;

int payload_bound(const std::vector<SubSystem>& subs, int L) {
  int nl_max = 1;
  for (const auto& s : subs) nl_max = std::max(nl_max, s.n_l());
  return 4 * nl_max * std::max(nl_max, L) + kPayloadSlack;
}

}  // namespace

LifSetup make_lif_setup(const GlobalModel& model, int L) {
  const SystemDigraph dg = build_digraph(model);
  auto sets = cut_point_sets(model);
  sets = extend_cutsets(sets, L, dg);
  sets = extend_for_band_coverage(sets, L, model.n);
  LifSetup setup;
  for (int l = 0; l < model.num_sensors(); ++l)
    setup.subsystems.push_back(build_subsystem(model, sets[l], l));
  const CommGraph comm = default_comm_graph(setup.subsystems);
  setup.topology = build_fusion_topology(model, setup.subsystems, comm);
  return setup;
}

LifRunner::LifRunner(const GlobalModel& model, std::vector<SubSystem> subsystems,
                     FusionTopology topology, LifConfig config)
    : model_(model),
      subsystems_(std::move(subsystems)),
      topology_(std::move(topology)),
      config_(config) {
  std::vector<std::vector<int>> windows;
  for (const auto& s : subsystems_) windows.push_back(s.cutset);
  partition_ = std::make_unique<DiciPartition>(windows, model_.n, config_.L);
  network_ = std::make_unique<CommNetwork>(topology_.comm, payload_bound(subsystems_, config_.L));
  F_rows_ = Eigen::SparseMatrix<double, Eigen::RowMajor>(model_.F);
  const Eigen::MatrixXd Gd(model_.G);
  GQGt_ = Gd * model_.Q * Gd.transpose();

  nbhd_span_.resize(subsystems_.size());
  for (std::size_t l = 0; l < subsystems_.size(); ++l) {
    int lo = subsystems_[l].cutset.front(), hi = subsystems_[l].cutset.back();
    for (int nb : topology_.comm.adj[l]) {
      lo = std::min(lo, subsystems_[nb].cutset.front());
      hi = std::max(hi, subsystems_[nb].cutset.back());
    }
    nbhd_span_[l] = {lo, hi};
  }
}

void LifRunner::audit_read_span(int sensor, int lo, int hi) const {
  const auto [nlo, nhi] = nbhd_span_[sensor];
  if (lo < nlo || hi > nhi)
    throw Error("lif: sensor " + std::to_string(sensor) + " needs covariance rows [" +
                std::to_string(lo) + "," + std::to_string(hi) +
                "] outside its neighborhood span [" + std::to_string(nlo) + "," +
                std::to_string(nhi) + "]; the model violates the locality assumption");
}

void LifRunner::record_band_reads(int sensor, int lo, int hi, Phase phase) {
  // In-band entries in rows [lo, hi] the sensor does not hold, grouped by
  // their authoritative owners.
  const int n = model_.n;
  const int L = config_.L;
  std::vector<long long> from(subsystems_.size(), 0);
  for (int i = std::max(0, lo); i <= std::min(n - 1, hi); ++i)
    for (int j = i; j <= std::min({n - 1, hi, i + L}); ++j) {
      if (partition_->window_contains(sensor, i) && partition_->window_contains(sensor, j))
        continue;
      from[partition_->pair_owner(i, j)] += 1;
    }
  for (std::size_t m = 0; m < from.size(); ++m)
    if (static_cast<int>(m) != sensor && from[m] > 0)
      network_->record_bulk(static_cast<int>(m), sensor, phase, 1, from[m]);
}

void LifRunner::init() {
  const int N = static_cast<int>(subsystems_.size());
  const int L = config_.L;
  for (const auto& s : subsystems_)
    if (s.n_l() < L)
      throw ConfigError("lif: sensor " + std::to_string(s.sensor_id) + " has n_l = " +
                        std::to_string(s.n_l()) + " < L = " + std::to_string(L));

  states_.assign(N, InfoState{});
  i_fused_.assign(N, Eigen::VectorXd());
  for (int l = 0; l < N; ++l) i_fused_[l] = Eigen::VectorXd::Zero(subsystems_[l].n_l());

  // One-time fusion of the reduced observation matrices.
  std::vector<Eigen::MatrixXd> I_locals(N);
  for (int l = 0; l < N; ++l) I_locals[l] = reduced_obs_matrix(subsystems_[l]);
  network_->set_phase(Phase::fusion);
  fuse_observation_matrices(subsystems_, topology_, I_locals, config_.consensus, I_fused_,
                            network_.get());

  // Z_{0|-1} from the band of S0 through the banded inversion theorem; each
  // window only needs S0 rows within L of its span.
  Z_pred_band_ = lband_invert(band_project(model_.S0, L));
  for (int l = 0; l < N; ++l) {
    auto& st = states_[l];
    const auto& cs = subsystems_[l].cutset;
    const int nl = subsystems_[l].n_l();
    st.sensor_id = l;
    st.k = 0;
    st.predicted = true;
    st.Z_pred.resize(nl, nl);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) st.Z_pred(a, b) = Z_pred_band_.get(cs[a], cs[b]);
    st.z_pred = Eigen::VectorXd::Zero(nl);
    st.z_filt = Eigen::VectorXd::Zero(nl);
    st.x_filt = Eigen::VectorXd::Zero(nl);
    st.d_hat = Eigen::VectorXd::Zero(subsystems_[l].d_input_states.size());
    record_band_reads(l, cs.front() - L, cs.back() + L, Phase::prediction);
  }

  Z_filt_band_ = BandProfile(model_.n, L);
  S_filt_band_ = BandProfile(model_.n, L);
  z_filt_global_ = Eigen::VectorXd::Zero(model_.n);
  z_pred_global_ = Eigen::VectorXd::Zero(model_.n);
  x_filt_global_ = Eigen::VectorXd::Zero(model_.n);
  k_ = 0;
  initialized_ = true;
}

void LifRunner::fuse_step_vectors(const Eigen::VectorXd& y_k, LifStepDiag& diag) {
  const int N = static_cast<int>(subsystems_.size());
  std::vector<Eigen::VectorXd> i_locals(N);
  for (int l = 0; l < N; ++l) {
    const auto [b, e] = model_.sensor_rows[l];
    i_locals[l] = reduced_obs_vector(subsystems_[l], y_k.segment(b, e - b));
  }
  network_->set_phase(Phase::fusion);
  const FusionDiag fd = fuse_observation_vectors(subsystems_, topology_, i_locals,
                                                 config_.consensus, i_fused_, network_.get());
  diag.consensus_iters = fd.max_iterations;
  diag.consensus_residual = fd.max_residual;
}

void LifRunner::local_filter_update() {
  const int N = static_cast<int>(subsystems_.size());
  for (int l = 0; l < N; ++l) {
    auto& st = states_[l];
    st.Z_filt = st.Z_pred + I_fused_[l];
    st.z_filt = st.z_pred + i_fused_[l];
    st.predicted = false;
    st.k = k_;
  }
  // Authoritative band and vector assembly from the owners' windows. The
  // L-banded approximation keeps only the in-band part of the observation
  // contributions.
  Z_filt_band_ = BandProfile(model_.n, config_.L);
  for (int l = 0; l < N; ++l)
    for (const auto& [i, j] : partition_->owned_pairs(l))
      Z_filt_band_.at(i, j) =
          states_[l].Z_filt(subsystems_[l].local_index(i), subsystems_[l].local_index(j));
  for (int j = 0; j < model_.n; ++j) {
    const int o = partition_->state_owner(j);
    z_filt_global_(j) = states_[o].z_filt(subsystems_[o].local_index(j));
  }
}

void LifRunner::dici_matrix_phase(LifStepDiag& diag) {
  const int N = static_cast<int>(subsystems_.size());
  const bool decoupled = config_.dici_budget == 1;
  network_->set_phase(Phase::dici_matrix);
  if (decoupled) {
    // Block-diagonal treatment: every sensor inverts its own window, no
    // assimilation across windows.
    for (int l = 0; l < N; ++l) {
      auto& st = states_[l];
      Eigen::LLT<Eigen::MatrixXd> llt(st.Z_filt);
      if (llt.info() != Eigen::Success)
        throw SingularWindowError(l, "lif decoupled filter: local Z_filt not SPD");
      st.S_filt = llt.solve(Eigen::MatrixXd::Identity(st.Z_filt.rows(), st.Z_filt.cols()));
    }
    S_filt_band_ = BandProfile(model_.n, config_.L);
    for (int l = 0; l < N; ++l)
      for (const auto& [i, j] : partition_->owned_pairs(l))
        S_filt_band_.at(i, j) = states_[l].S_filt(subsystems_[l].local_index(i),
                                                  subsystems_[l].local_index(j));
    diag.dici_matrix_iters = 1;
  } else {
    DiciOptions opts;
    opts.jor = config_.dici;
    opts.fixed_rounds = config_.dici_budget;
    opts.count_flops = config_.count_flops;
    opts.network = network_.get();
    opts.exec = config_.exec;
    const DiciResult res = dici_or_band_inverse(Z_filt_band_, *partition_, opts);
    S_filt_band_ = res.S;
    diag.dici_matrix_iters = res.iterations;
    // Local windows are the full submatrices of the assimilated S; off-band
    // window entries come from the collapse step.
    CollapseEvaluator eval(S_filt_band_);
    for (int l = 0; l < N; ++l) {
      auto& st = states_[l];
      const auto& cs = subsystems_[l].cutset;
      const int nl = subsystems_[l].n_l();
      st.S_filt.resize(nl, nl);
      for (int a = 0; a < nl; ++a)
        for (int b = a; b < nl; ++b) {
          const double v = eval.value(cs[a], cs[b]);
          st.S_filt(a, b) = v;
          st.S_filt(b, a) = v;
        }
    }
  }
  diag.trace_S_filt = trace_S_filt();
}

void LifRunner::dici_vector_phase(LifStepDiag& diag) {
  const int N = static_cast<int>(subsystems_.size());
  const bool decoupled = config_.dici_budget == 1;
  network_->set_phase(Phase::dici_vector);
  if (decoupled) {
    for (int l = 0; l < N; ++l) states_[l].x_filt = states_[l].S_filt * states_[l].z_filt;
    for (int j = 0; j < model_.n; ++j) {
      const int o = partition_->state_owner(j);
      x_filt_global_(j) = states_[o].x_filt(subsystems_[o].local_index(j));
    }
    diag.dici_vector_iters = 0;
  } else {
    DiciOptions opts;
    opts.jor = config_.dici;
    opts.network = network_.get();
    opts.exec = config_.exec;
    const DiciVectorResult res =
        dici_solve_vector(Z_filt_band_, *partition_, z_filt_global_, opts);
    x_filt_global_ = res.x;
    diag.dici_vector_iters = res.iterations;
    for (int l = 0; l < N; ++l)
      for (int a = 0; a < subsystems_[l].n_l(); ++a)
        states_[l].x_filt(a) = x_filt_global_(subsystems_[l].cutset[a]);
  }
}

LifRunner::PredictionOutput LifRunner::prediction_covariance() {
  const int N = static_cast<int>(subsystems_.size());
  const bool decoupled = config_.dici_budget == 1;
  network_->set_phase(Phase::prediction);
  PredictionOutput out;
  out.S_pred_loc.resize(N);

  if (decoupled) {
    for (int l = 0; l < N; ++l) {
      const auto& sub = subsystems_[l];
      // No covariance assimilation: internal inputs treated as exact.
      Eigen::MatrixXd Q_l(sub.noise_ids.size(), sub.noise_ids.size());
      for (std::size_t a = 0; a < sub.noise_ids.size(); ++a)
        for (std::size_t b = 0; b < sub.noise_ids.size(); ++b)
          Q_l(a, b) = model_.Q(sub.noise_ids[a], sub.noise_ids[b]);
      out.S_pred_loc[l] = sub.F_loc * states_[l].S_filt * sub.F_loc.transpose() +
                          sub.G_loc * Q_l * sub.G_loc.transpose();
    }
    return out;
  }

  // S_{k+1|k} windows by expanding F_l S_{k|k} F_l^T + G Q G^T row-wise:
  // in-band covariance values come from the assimilated band, out-of-band
  // ones (the S^{xd} and S^{dd} cross blocks) from the collapse step over
  // neighbor-held band entries.
  out.S_pred_band = BandProfile(model_.n, config_.L);
  std::vector<std::pair<int, int>> spans(N, {model_.n, -1});
#pragma omp parallel for schedule(dynamic) if (use_openmp(config_.exec))
  for (int l = 0; l < N; ++l) {
    const auto& sub = subsystems_[l];
    const int nl = sub.n_l();
    CollapseEvaluator eval(S_filt_band_);
    auto& span = spans[l];
    auto S_val = [&](int a, int b) {
      span.first = std::min(span.first, std::min(a, b));
      span.second = std::max(span.second, std::max(a, b));
      return S_filt_band_.in_band(a, b) ? S_filt_band_.at(a, b) : eval.value(a, b);
    };
    Eigen::MatrixXd Sp(nl, nl);
    for (int rl = 0; rl < nl; ++rl) {
      const int r = sub.cutset[rl];
      for (int cl = rl; cl < nl; ++cl) {
        const int c = sub.cutset[cl];
        double acc = GQGt_(r, c);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator ir(F_rows_, r); ir;
             ++ir) {
          const double fr = ir.value();
          if (fr == 0.0) continue;
          for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator ic(F_rows_, c); ic;
               ++ic) {
            const double fc = ic.value();
            if (fc == 0.0) continue;
            acc += fr * fc * S_val(static_cast<int>(ir.col()), static_cast<int>(ic.col()));
          }
        }
        Sp(rl, cl) = acc;
        Sp(cl, rl) = acc;
      }
    }
    out.S_pred_loc[l] = std::move(Sp);
  }
  for (int l = 0; l < N; ++l) {
    if (spans[l].second >= 0) {
      audit_read_span(l, spans[l].first, spans[l].second);
      record_band_reads(l, spans[l].first, spans[l].second, Phase::prediction);
    }
    for (const auto& [i, j] : partition_->owned_pairs(l))
      out.S_pred_band.at(i, j) =
          out.S_pred_loc[l](subsystems_[l].local_index(i), subsystems_[l].local_index(j));
  }
  return out;
}

void LifRunner::prediction_information(const PredictionOutput& pred) {
  const int N = static_cast<int>(subsystems_.size());
  const bool decoupled = config_.dici_budget == 1;
  if (decoupled) {
    for (int l = 0; l < N; ++l) {
      auto& st = states_[l];
      st.S_pred = pred.S_pred_loc[l];
      Eigen::LLT<Eigen::MatrixXd> llt(st.S_pred);
      if (llt.info() != Eigen::Success)
        throw SingularWindowError(l, "lif decoupled prediction: S_pred not SPD");
      st.Z_pred = llt.solve(Eigen::MatrixXd::Identity(st.S_pred.rows(), st.S_pred.cols()));
    }
    return;
  }
  Z_pred_band_ = lband_invert(pred.S_pred_band);
  for (int l = 0; l < N; ++l) {
    auto& st = states_[l];
    const auto& cs = subsystems_[l].cutset;
    const int nl = subsystems_[l].n_l();
    st.S_pred = pred.S_pred_loc[l];
    st.Z_pred.resize(nl, nl);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) st.Z_pred(a, b) = Z_pred_band_.get(cs[a], cs[b]);
    record_band_reads(l, cs.front() - config_.L, cs.back() + config_.L, Phase::prediction);
  }
}

void LifRunner::predictor_banded(const BandProfile& Z_next) {
  // Row-wise expansion of z_{k+1|k} = Z_{k+1|k} F x_{k|k}: each sensor
  // computes its cutset rows, pulling out-of-cutset estimates from their
  // owners. This carries both the local term Z^(l)(F^(l) x + D^(l) d) and
  // the banded cross correction.
  const int N = static_cast<int>(subsystems_.size());
  const int L = config_.L;
  network_->set_phase(Phase::exchange);
  for (int l = 0; l < N; ++l) {
    auto& st = states_[l];
    const auto& sub = subsystems_[l];
    const int nl = sub.n_l();
    std::set<int> fetched;
    auto x_val = [&](int m) {
      if (sub.local_index(m) < 0 && fetched.insert(m).second)
        network_->record(partition_->state_owner(m), l, Phase::exchange, 1);
      return x_filt_global_(m);
    };
    st.z_pred.resize(nl);
    for (int rl = 0; rl < nl; ++rl) {
      const int r = sub.cutset[rl];
      double acc = 0.0;
      for (int c = std::max(0, r - L); c <= std::min(model_.n - 1, r + L); ++c) {
        const double zrc = Z_next.at(r, c);
        if (zrc == 0.0) continue;
        double fx = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator ic(F_rows_, c); ic; ++ic)
          fx += ic.value() * x_val(static_cast<int>(ic.col()));
        acc += zrc * fx;
      }
      st.z_pred(rl) = acc;
    }
    for (std::size_t q = 0; q < sub.d_input_states.size(); ++q)
      st.d_hat(q) = x_filt_global_(sub.d_input_states[q]);
    st.predicted = true;
  }
  for (int j = 0; j < model_.n; ++j) {
    const int o = partition_->state_owner(j);
    z_pred_global_(j) = states_[o].z_pred(subsystems_[o].local_index(j));
  }
}

void LifRunner::predictor_decoupled(const std::vector<Eigen::MatrixXd>& Z_next_loc) {
  const int N = static_cast<int>(subsystems_.size());
  network_->set_phase(Phase::exchange);
  for (int l = 0; l < N; ++l) {
    auto& st = states_[l];
    const auto& sub = subsystems_[l];
    for (std::size_t q = 0; q < sub.d_input_states.size(); ++q) {
      const int g = sub.d_input_states[q];
      st.d_hat(q) = x_filt_global_(g);
      network_->record(partition_->state_owner(g), l, Phase::exchange, 1);
    }
    st.z_pred = Z_next_loc[l] * (sub.F_loc * st.x_filt + sub.D_loc * st.d_hat);
    st.predicted = true;
  }
  for (int j = 0; j < model_.n; ++j) {
    const int o = partition_->state_owner(j);
    z_pred_global_(j) = states_[o].z_pred(subsystems_[o].local_index(j));
  }
}

double LifRunner::trace_S_filt() const {
  double tr = 0.0;
  for (int i = 0; i < model_.n; ++i) tr += S_filt_band_.at(i, i);
  return tr;
}

std::vector<double> LifRunner::check_estimate_consensus() const {
  std::vector<double> dev(model_.n, std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < model_.n; ++j) {
    const auto& holders = topology_.participants[j];
    if (holders.size() < 2) continue;
    double lo = 1e300, hi = -1e300;
    for (int l : holders) {
      const double v = states_[l].z_filt(subsystems_[l].local_index(j));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    dev[j] = hi - lo;
  }
  return dev;
}

LifStepDiag LifRunner::step(const Eigen::VectorXd& y_k) {
  if (!initialized_) throw Error("lif: step before init");
  LifStepDiag diag;
  fuse_step_vectors(y_k, diag);
  local_filter_update();
  dici_matrix_phase(diag);
  dici_vector_phase(diag);
  const PredictionOutput pred = prediction_covariance();
  prediction_information(pred);
  if (config_.dici_budget == 1) {
    std::vector<Eigen::MatrixXd> zp(subsystems_.size());
    for (std::size_t l = 0; l < subsystems_.size(); ++l) zp[l] = states_[l].Z_pred;
    predictor_decoupled(zp);
  } else {
    predictor_banded(Z_pred_band_);
  }
  if (config_.track_deviation) {
    for (double d : check_estimate_consensus())
      if (!std::isnan(d)) diag.max_estimate_deviation = std::max(diag.max_estimate_deviation, d);
  }
  ++k_;
  for (auto& st : states_) st.k = k_;
  return diag;
}

LifSchedule LifRunner::run_covariance_schedule(int k_max) {
  init();
  LifSchedule sched;
  sched.L = config_.L;
  sched.decoupled = config_.dici_budget == 1;
  sched.Z_pred0 = Z_pred_band_;
  const int N = static_cast<int>(subsystems_.size());
  for (int k = 0; k < k_max; ++k) {
    LifStepDiag diag;
    local_filter_update();
    dici_matrix_phase(diag);
    const PredictionOutput pred = prediction_covariance();
    prediction_information(pred);
    if (sched.decoupled) {
      std::vector<Eigen::MatrixXd> zf(N), sf(N), zp(N);
      for (int l = 0; l < N; ++l) {
        zf[l] = states_[l].Z_filt;
        sf[l] = states_[l].S_filt;
        zp[l] = states_[l].Z_pred;
      }
      sched.loc_Z_filt.push_back(std::move(zf));
      sched.loc_S_filt.push_back(std::move(sf));
      sched.loc_Z_pred_next.push_back(std::move(zp));
    }
    sched.Z_filt.push_back(Z_filt_band_);
    sched.S_filt.push_back(S_filt_band_);
    sched.Z_pred_next.push_back(Z_pred_band_);
    sched.trace_filt.push_back(diag.trace_S_filt);
    sched.diag.push_back(diag);
    ++k_;
  }
  return sched;
}

std::vector<Eigen::VectorXd> LifRunner::run_trial(const LifSchedule& schedule,
                                                  const Trajectory& traj,
                                                  std::vector<LifStepDiag>* diags) {
  if (!initialized_) init();
  const int N = static_cast<int>(subsystems_.size());
  const int k_max = static_cast<int>(schedule.Z_filt.size());
  if (static_cast<int>(traj.observations.size()) < k_max)
    throw ConfigError("lif trial: trajectory shorter than the schedule");

  // Reset the estimate side; covariance objects come from the schedule.
  for (int l = 0; l < N; ++l) {
    states_[l].z_pred.setZero();
    states_[l].z_filt.setZero();
    states_[l].x_filt.setZero();
    states_[l].d_hat.setZero();
  }
  x_filt_global_.setZero();
  z_pred_global_.setZero();
  k_ = 0;

  std::vector<Eigen::VectorXd> estimates;
  estimates.reserve(k_max);
  for (int k = 0; k < k_max; ++k) {
    LifStepDiag diag;
    fuse_step_vectors(traj.observations[k], diag);
    for (int l = 0; l < N; ++l) {
      states_[l].z_filt = states_[l].z_pred + i_fused_[l];
      states_[l].k = k;
      states_[l].predicted = false;
    }
    for (int j = 0; j < model_.n; ++j) {
      const int o = partition_->state_owner(j);
      z_filt_global_(j) = states_[o].z_filt(subsystems_[o].local_index(j));
    }

    network_->set_phase(Phase::dici_vector);
    if (schedule.decoupled) {
      for (int l = 0; l < N; ++l)
        states_[l].x_filt = schedule.loc_S_filt[k][l] * states_[l].z_filt;
      for (int j = 0; j < model_.n; ++j) {
        const int o = partition_->state_owner(j);
        x_filt_global_(j) = states_[o].x_filt(subsystems_[o].local_index(j));
      }
    } else {
      DiciOptions opts;
      opts.jor = config_.dici;
      opts.network = network_.get();
      opts.exec = config_.exec;
      const DiciVectorResult res =
          dici_solve_vector(schedule.Z_filt[k], *partition_, z_filt_global_, opts);
      x_filt_global_ = res.x;
      diag.dici_vector_iters = res.iterations;
      for (int l = 0; l < N; ++l)
        for (int a = 0; a < subsystems_[l].n_l(); ++a)
          states_[l].x_filt(a) = x_filt_global_(subsystems_[l].cutset[a]);
    }
    estimates.push_back(x_filt_global_);

    if (schedule.decoupled)
      predictor_decoupled(schedule.loc_Z_pred_next[k]);
    else
      predictor_banded(schedule.Z_pred_next[k]);

    if (config_.track_deviation) {
      for (double d : check_estimate_consensus())
        if (!std::isnan(d)) diag.max_estimate_deviation = std::max(diag.max_estimate_deviation, d);
    }
    if (diags) diags->push_back(diag);
    ++k_;
  }
  return estimates;
}

}  // namespace dkf
