#include "dkf/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <deque>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "dkf/csv.hpp"

namespace dkf {

using json = nlohmann::ordered_json;

Eigen::MatrixXd GlobalModel::H_l(int sensor) const {
  const auto [b, e] = sensor_rows.at(sensor);
  return Eigen::MatrixXd(H).middleRows(b, e - b);
}

Eigen::MatrixXd GlobalModel::R_l(int sensor) const {
  const auto [b, e] = sensor_rows.at(sensor);
  return R.block(b, b, e - b, e - b);
}

void GlobalModel::validate() const {
  if (F.rows() != n || F.cols() != n) throw ConfigError("model: F must be n x n");
  if (G.rows() != n) throw ConfigError("model: G row count mismatch");
  if (Q.rows() != G.cols() || Q.cols() != G.cols()) throw ConfigError("model: Q/G mismatch");
  if (H.rows() != p || H.cols() != n) throw ConfigError("model: H shape mismatch");
  if (R.rows() != p || R.cols() != p) throw ConfigError("model: R shape mismatch");
  if (S0.rows() != n || S0.cols() != n) throw ConfigError("model: S0 shape mismatch");

  int cursor = 0;
  for (const auto& [b, e] : sensor_rows) {
    if (b != cursor || e <= b) throw ConfigError("model: sensor rows must partition [0, p)");
    cursor = e;
  }
  if (cursor != p) throw ConfigError("model: sensor rows must cover all observation rows");

  const double rs = std::max(1.0, R.cwiseAbs().maxCoeff());
  for (int l = 0; l < num_sensors(); ++l) {
    const auto [b, e] = sensor_rows[l];
    for (int r = b; r < e; ++r)
      for (int c = 0; c < p; ++c)
        if ((c < b || c >= e) && std::abs(R(r, c)) > 1e-14 * rs)
          throw ConfigError("model: R is not block-diagonal per sensor");
    if (Eigen::LLT<Eigen::MatrixXd>(R_l(l)).info() != Eigen::Success)
      throw ConfigError("model: R block " + std::to_string(l) + " is not positive definite");
  }
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
    throw ConfigError("model: Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qe(Q);
  if (qe.eigenvalues().minCoeff() < -1e-12) throw ConfigError("model: Q must be PSD");
  if (Eigen::LLT<Eigen::MatrixXd>(S0).info() != Eigen::Success)
    throw ConfigError("model: S0 must be positive definite");
}

GlobalModel build_elliptic_model(const EllipticSpec& spec) {
  const int M = spec.grid_rows, J = spec.grid_cols;
  if (M < 2 || J < 2) throw ConfigError("elliptic model: need M, J >= 2");
  if (spec.dt <= 0.0) throw ConfigError("elliptic model: sampling interval must be positive");
  const int n = M * J;
  for (int s : spec.noise_sites)
    if (s < 0 || s >= n) throw ConfigError("elliptic model: noise site out of range");

  // F_c = I (x) B + A (x) C; grid cell (i, j) lives at flat index i*J + j.
  std::vector<Eigen::Triplet<double>> trips;
  auto add = [&](int r, int c, double v) {
    if (v != 0.0) trips.emplace_back(r, c, v);
  };
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < J; ++j) {
      const int r = i * J + j;
      add(r, r, spec.mu);
      if (j > 0) add(r, r - 1, spec.beta_h);
      if (j + 1 < J) add(r, r + 1, spec.beta_h);
      if (i > 0) add(r, r - J, spec.beta_v);
      if (i + 1 < M) add(r, r + J, spec.beta_v);
    }
  SpMat Fc(n, n);
  Fc.setFromTriplets(trips.begin(), trips.end());

  GlobalModel m;
  m.n = n;
  SpMat I(n, n);
  I.setIdentity();
  m.F = I + spec.dt * Fc;
  m.F.prune(0.0);

  const int js = static_cast<int>(spec.noise_sites.size());
  m.G.resize(n, js);
  std::vector<Eigen::Triplet<double>> gt;
  for (int c = 0; c < js; ++c) gt.emplace_back(spec.noise_sites[c], c, spec.dt);
  m.G.setFromTriplets(gt.begin(), gt.end());
  m.Q = spec.noise_var * Eigen::MatrixXd::Identity(js, js);

  m.p = 0;
  m.H.resize(0, n);
  m.R.resize(0, 0);
  m.S0 = Eigen::MatrixXd::Identity(n, n);
  return m;
}

namespace {

// Square-root factor for sampling; PSD inputs get eigenvalue clipping at 0
// with a 1e-12 tolerance, PD inputs a Cholesky factor.
Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& C, const char* who) {
  if (C.rows() == 0) return C;
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw ConfigError(std::string(who) + ": covariance has negative eigenvalues");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::VectorXd draw(const Eigen::MatrixXd& factor, Rng& rng) {
  Eigen::VectorXd z(factor.cols());
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return factor * z;
}

}  // namespace

Trajectory simulate(const GlobalModel& model, int k_max, std::uint64_t seed) {
  const Eigen::MatrixXd Ls = sampling_factor(model.S0, "simulate/S0");
  const Eigen::MatrixXd Lq = sampling_factor(model.Q, "simulate/Q");
  const Eigen::MatrixXd Lr = sampling_factor(model.R, "simulate/R");

  Trajectory traj;
  traj.seed = seed;
  Rng rng = Rng::fork(seed, 0x51u);
  Eigen::VectorXd x = draw(Ls, rng);
  for (int k = 0; k <= k_max; ++k) {
    traj.states.push_back(x);
    Eigen::VectorXd y = model.H * x;
    if (model.p > 0) y += draw(Lr, rng);
    traj.observations.push_back(y);
    if (k < k_max) {
      Eigen::VectorXd xn = model.F * x;
      if (model.G.cols() > 0) xn += model.G * draw(Lq, rng);
      x = xn;
    }
  }
  return traj;
}

int matrix_bandwidth(const SpMat& A) {
  int bw = 0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (it.value() != 0.0) bw = std::max(bw, std::abs(static_cast<int>(it.row() - it.col())));
  return bw;
}

namespace {

std::vector<std::vector<int>> symmetrized_adjacency(const SpMat& F) {
  const int n = static_cast<int>(F.rows());
  std::vector<std::vector<int>> adj(n);
  for (int k = 0; k < F.outerSize(); ++k)
    for (SpMat::InnerIterator it(F, k); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (r != c && it.value() != 0.0) {
        adj[r].push_back(c);
        adj[c].push_back(r);
      }
    }
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return adj;
}

}  // namespace

std::pair<GlobalModel, std::vector<int>> bandwidth_reduce(const GlobalModel& model) {
  const int n = model.n;
  const auto adj = symmetrized_adjacency(model.F);

  // Cuthill-McKee: start each component from a minimum-degree vertex, BFS
  // visiting neighbors by increasing degree, then reverse the whole order.
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> seen(n, 0);
  std::vector<int> deg(n);
  for (int i = 0; i < n; ++i) deg[i] = static_cast<int>(adj[i].size());

  std::vector<int> by_degree(n);
  std::iota(by_degree.begin(), by_degree.end(), 0);
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](int a, int b) { return deg[a] < deg[b]; });

  for (int start : by_degree) {
    if (seen[start]) continue;
    std::deque<int> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      std::vector<int> next;
      for (int u : adj[v])
        if (!seen[u]) {
          seen[u] = 1;
          next.push_back(u);
        }
      std::stable_sort(next.begin(), next.end(), [&](int a, int b) { return deg[a] < deg[b]; });
      for (int u : next) queue.push_back(u);
    }
  }
  std::reverse(order.begin(), order.end());

  // order[k] = old index placed at new position k; perm maps old -> new.
  std::vector<int> perm(n);
  for (int k = 0; k < n; ++k) perm[order[k]] = k;

  GlobalModel out = model;
  std::vector<Eigen::Triplet<double>> ft;
  for (int k = 0; k < model.F.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.F, k); it; ++it)
      ft.emplace_back(perm[it.row()], perm[it.col()], it.value());
  out.F.resize(n, n);
  out.F.setFromTriplets(ft.begin(), ft.end());

  std::vector<Eigen::Triplet<double>> gt;
  for (int k = 0; k < model.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.G, k); it; ++it)
      gt.emplace_back(perm[it.row()], it.col(), it.value());
  out.G.resize(n, model.G.cols());
  out.G.setFromTriplets(gt.begin(), gt.end());

  std::vector<Eigen::Triplet<double>> ht;
  for (int k = 0; k < model.H.outerSize(); ++k)
    for (SpMat::InnerIterator it(model.H, k); it; ++it)
      ht.emplace_back(it.row(), perm[it.col()], it.value());
  out.H.resize(model.p, n);
  out.H.setFromTriplets(ht.begin(), ht.end());

  Eigen::MatrixXd S0p(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) S0p(perm[i], perm[j]) = model.S0(i, j);
  out.S0 = S0p;

  if (matrix_bandwidth(out.F) > matrix_bandwidth(model.F)) {
    // RCM never helps on this pattern; keep the original ordering.
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    return {model, identity};
  }
  return {out, perm};
}

GlobalModel build_random_model(const RandomModelSpec& spec) {
  if (spec.n < 2 || spec.num_sensors < 1) throw ConfigError("random model: bad dimensions");
  if (spec.band < 1 || spec.band >= spec.n) throw ConfigError("random model: bad band");
  Rng rng = Rng::fork(spec.seed, 0x4du);

  GlobalModel m;
  m.n = spec.n;
  std::vector<Eigen::Triplet<double>> ft;
  for (int i = 0; i < spec.n; ++i) {
    ft.emplace_back(i, i, rng.normal());  // keep the diagonal structurally full
    for (int j = std::max(0, i - spec.band); j <= std::min(spec.n - 1, i + spec.band); ++j)
      if (j != i && rng.uniform() < spec.density) ft.emplace_back(i, j, rng.normal());
  }
  m.F.resize(spec.n, spec.n);
  m.F.setFromTriplets(ft.begin(), ft.end());

  // Normalize to unit spectral norm via power iteration on F^T F.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(spec.n).normalized();
  double s2 = 1.0;
  for (int it = 0; it < 200; ++it) {
    v = (m.F.transpose() * (m.F * v)).eval();
    s2 = v.norm();
    if (s2 == 0.0) throw ConfigError("random model: F degenerated to zero");
    v /= s2;
  }
  m.F = m.F * (1.0 / std::sqrt(s2));

  SpMat I(spec.n, spec.n);
  I.setIdentity();
  m.G = I;
  m.Q = spec.q * Eigen::MatrixXd::Identity(spec.n, spec.n);

  // One observation row per sensor on an overlapping contiguous span,
  // normalized to unit gain.
  const int N = spec.num_sensors;
  m.p = N;
  const int span = std::min(spec.obs_span, spec.n);
  std::vector<Eigen::Triplet<double>> ht;
  for (int l = 0; l < N; ++l) {
    int start = N == 1 ? 0 : static_cast<int>(std::llround(double(l) * (spec.n - span) / (N - 1)));
    start = std::clamp(start, 0, spec.n - span);
    Eigen::VectorXd row(span);
    for (int c = 0; c < span; ++c) row(c) = rng.normal();
    row /= row.norm();
    for (int c = 0; c < span; ++c) ht.emplace_back(l, start + c, row(c));
    m.sensor_rows.emplace_back(l, l + 1);
  }
  m.H.resize(N, spec.n);
  m.H.setFromTriplets(ht.begin(), ht.end());
  m.R = spec.r * Eigen::MatrixXd::Identity(N, N);
  m.S0 = spec.s0 * Eigen::MatrixXd::Identity(spec.n, spec.n);
  m.validate();
  return m;
}

namespace {

json sparse_to_triples(const SpMat& A) {
  json arr = json::array();
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  for (const auto& e : t) arr.push_back(json::array({e.row(), e.col(), e.value()}));
  return arr;
}

SpMat triples_to_sparse(const json& arr, int rows, int cols) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& e : arr)
    t.emplace_back(e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>());
  SpMat A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

json dense_to_json(const Eigen::MatrixXd& A) {
  json rows = json::array();
  for (int i = 0; i < A.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < A.cols(); ++j) r.push_back(A(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd dense_from_json(const json& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows.at(0).size());
  Eigen::MatrixXd A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = rows.at(i).at(j).get<double>();
  return A;
}

}  // namespace

std::string save_model(const GlobalModel& model) {
  json j;
  j["n"] = model.n;
  j["p"] = model.p;
  j["noise_inputs"] = static_cast<int>(model.G.cols());
  j["F"] = sparse_to_triples(model.F);
  j["G"] = sparse_to_triples(model.G);
  j["H"] = sparse_to_triples(model.H);
  j["Q"] = dense_to_json(model.Q);
  j["R"] = dense_to_json(model.R);
  j["S0"] = dense_to_json(model.S0);
  json sr = json::array();
  for (const auto& [b, e] : model.sensor_rows) sr.push_back(json::array({b, e}));
  j["sensor_rows"] = sr;
  return j.dump(2) + "\n";
}

GlobalModel load_model(const std::string& text) {
  json j = json::parse(text);
  GlobalModel m;
  m.n = j.at("n").get<int>();
  m.p = j.at("p").get<int>();
  const int ni = j.at("noise_inputs").get<int>();
  m.F = triples_to_sparse(j.at("F"), m.n, m.n);
  m.G = triples_to_sparse(j.at("G"), m.n, ni);
  m.H = triples_to_sparse(j.at("H"), m.p, m.n);
  m.Q = dense_from_json(j.at("Q"));
  m.R = dense_from_json(j.at("R"));
  m.S0 = dense_from_json(j.at("S0"));
  for (const auto& e : j.at("sensor_rows"))
    m.sensor_rows.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return m;
}

namespace {

std::string vectors_csv(const std::vector<Eigen::VectorXd>& rows, const std::string& metadata,
                        char prefix) {
  std::ostringstream os;
  os << "# " << metadata << "\n";
  const int dim = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  os << 'k';
  for (int i = 0; i < dim; ++i) os << ',' << prefix << '_' << i;
  os << '\n';
  for (std::size_t k = 0; k < rows.size(); ++k) {
    os << k;
    for (int i = 0; i < dim; ++i) os << ',' << CsvWriter::format(rows[k](i));
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string trajectory_states_csv(const Trajectory& traj, const std::string& metadata) {
  return vectors_csv(traj.states, metadata, 'x');
}

std::string trajectory_observations_csv(const Trajectory& traj, const std::string& metadata) {
  return vectors_csv(traj.observations, metadata, 'y');
}

}  // namespace dkf
