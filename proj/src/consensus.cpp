#include "dkf/consensus.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <map>

#include "dkf/errors.hpp"

namespace dkf {

namespace {

double second_eigenvalue_magnitude(const Eigen::Ref<const Eigen::MatrixXd>& W) {
  if (W.rows() < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
  const auto& ev = es.eigenvalues();
  double second = 0.0;
  for (int i = 0; i < ev.size() - 1; ++i) second = std::max(second, std::abs(ev(i)));
  return second;
}

long long directed_edges(const Eigen::Ref<const Eigen::MatrixXd>& W) {
  long long e = 0;
  for (int a = 0; a < W.rows(); ++a)
    for (int b = 0; b < W.cols(); ++b)
      if (a != b && W(a, b) != 0.0) ++e;
  return e;
}

// One scalar per directed subgraph edge per iteration, recorded in bulk.
void record_traffic(CommNetwork* network, const std::vector<int>& members,
                    const Eigen::Ref<const Eigen::MatrixXd>& W, int iterations) {
  if (!network || iterations == 0) return;
  for (std::size_t a = 0; a < members.size(); ++a)
    for (std::size_t b = 0; b < members.size(); ++b)
      if (a != b && W(a, b) != 0.0)
        network->record_bulk(members[a], members[b], Phase::fusion, 1, iterations);
}

}  // namespace

ConsensusSumResult consensus_sum(const std::vector<double>& values,
                                 const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                 const ConsensusConfig& cfg, int subgraph_id) {
  const int m = static_cast<int>(values.size());
  ConsensusSumResult out;
  out.run.subgraph_id = subgraph_id;
  out.run.spectral_gap = 1.0 - second_eigenvalue_magnitude(weights);

  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), m);
  const long long edges = directed_edges(weights);

  // Already in agreement (covers the single-participant case): 0 iterations.
  const double spread = m > 0 ? v.maxCoeff() - v.minCoeff() : 0.0;
  if (cfg.fixed_iters >= 0) {
    for (int it = 0; it < cfg.fixed_iters && spread > 0.0; ++it) {
      Eigen::VectorXd next = weights * v;
      out.run.residual = (next - v).cwiseAbs().maxCoeff();
      v = next;
      ++out.run.iterations;
      out.run.messages += edges;
    }
  } else if (spread >= cfg.tol) {
    double change = spread;
    while (change >= cfg.tol) {
      if (out.run.iterations >= cfg.max_iter)
        throw ConvergenceError("consensus_sum: max_iter reached", change);
      Eigen::VectorXd next = weights * v;
      change = (next - v).cwiseAbs().maxCoeff();
      v = next;
      ++out.run.iterations;
      out.run.messages += edges;
      out.run.residual = change;
    }
  }

  out.fused.resize(m);
  for (int i = 0; i < m; ++i) out.fused[i] = v(i) * m;  // average -> sum
  return out;
}

Eigen::VectorXd reduced_obs_vector(const SubSystem& sub, const Eigen::VectorXd& y_l) {
  return sub.H_red.transpose() * sub.R_l.llt().solve(y_l);
}

Eigen::MatrixXd reduced_obs_matrix(const SubSystem& sub) {
  return sub.H_red.transpose() * sub.R_l.llt().solve(sub.H_red);
}

FusionDiag fuse_observation_vectors(const std::vector<SubSystem>& subsystems,
                                    const FusionTopology& topology,
                                    const std::vector<Eigen::VectorXd>& i_locals,
                                    const ConsensusConfig& cfg,
                                    std::vector<Eigen::VectorXd>& i_fused,
                                    CommNetwork* network) {
  const int N = static_cast<int>(subsystems.size());
  const int n = static_cast<int>(topology.participants.size());
  FusionDiag diag;
  i_fused.resize(N);
  for (int l = 0; l < N; ++l) i_fused[l] = Eigen::VectorXd::Zero(subsystems[l].n_l());

  for (int j = 0; j < n; ++j) {
    const auto& members = topology.participants[j];
    if (members.empty()) continue;
    std::vector<double> vals(members.size());
    for (std::size_t a = 0; a < members.size(); ++a)
      vals[a] = i_locals[members[a]](subsystems[members[a]].local_index(j));
    auto res = consensus_sum(vals, topology.weights[j], cfg, j);
    for (std::size_t a = 0; a < members.size(); ++a)
      i_fused[members[a]](subsystems[members[a]].local_index(j)) = res.fused[a];
    diag.max_iterations = std::max(diag.max_iterations, res.run.iterations);
    diag.max_residual = std::max(diag.max_residual, res.run.residual);
    diag.messages += res.run.messages;
    record_traffic(network, members, topology.weights[j], res.run.iterations);
  }
  return diag;
}

FusionDiag fuse_observation_matrices(const std::vector<SubSystem>& subsystems,
                                     const FusionTopology& topology,
                                     const std::vector<Eigen::MatrixXd>& I_locals,
                                     const ConsensusConfig& cfg,
                                     std::vector<Eigen::MatrixXd>& I_fused,
                                     CommNetwork* network) {
  const int N = static_cast<int>(subsystems.size());
  FusionDiag diag;
  I_fused.resize(N);
  for (int l = 0; l < N; ++l)
    I_fused[l] = Eigen::MatrixXd::Zero(subsystems[l].n_l(), subsystems[l].n_l());

  // Group state pairs by the set of sensors modeling both.
  std::map<std::pair<int, int>, std::vector<int>> pair_members;
  for (int l = 0; l < N; ++l) {
    const auto& cs = subsystems[l].cutset;
    for (std::size_t a = 0; a < cs.size(); ++a)
      for (std::size_t b = a; b < cs.size(); ++b) pair_members[{cs[a], cs[b]}].push_back(l);
  }

  const int n = static_cast<int>(topology.participants.size());
  for (const auto& [pair, members] : pair_members) {
    std::vector<double> vals(members.size());
    bool any = false;
    for (std::size_t a = 0; a < members.size(); ++a) {
      const auto& sub = subsystems[members[a]];
      vals[a] = I_locals[members[a]](sub.local_index(pair.first), sub.local_index(pair.second));
      any = any || vals[a] != 0.0;
    }
    if (!any) continue;  // structurally zero entry
    const Eigen::MatrixXd W = metropolis_weights(members, topology.comm);
    auto res = consensus_sum(vals, W, cfg, pair.first * n + pair.second);
    for (std::size_t a = 0; a < members.size(); ++a) {
      const auto& sub = subsystems[members[a]];
      const int li = sub.local_index(pair.first), lj = sub.local_index(pair.second);
      I_fused[members[a]](li, lj) = res.fused[a];
      I_fused[members[a]](lj, li) = res.fused[a];
    }
    diag.max_iterations = std::max(diag.max_iterations, res.run.iterations);
    diag.max_residual = std::max(diag.max_residual, res.run.residual);
    diag.messages += res.run.messages;
    record_traffic(network, members, W, res.run.iterations);
  }
  return diag;
}

FusedObservations fuse_observation_variables(const std::vector<SubSystem>& subsystems,
                                             const FusionTopology& topology,
                                             const std::vector<Eigen::VectorXd>& i_locals,
                                             const std::vector<Eigen::MatrixXd>& I_locals,
                                             const ConsensusConfig& cfg, CommNetwork* network) {
  FusedObservations out;
  const FusionDiag dv =
      fuse_observation_vectors(subsystems, topology, i_locals, cfg, out.i_fused, network);
  const FusionDiag dm =
      fuse_observation_matrices(subsystems, topology, I_locals, cfg, out.I_fused, network);
  out.diag.max_iterations = std::max(dv.max_iterations, dm.max_iterations);
  out.diag.max_residual = std::max(dv.max_residual, dm.max_residual);
  out.diag.messages = dv.messages + dm.messages;
  return out;
}

}  // namespace dkf
