#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <set>

#include "dkf/decomposition.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;
using Eigen::MatrixXi;

TEST_CASE("digraph of the five-state example matches the interconnection matrix") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const dkf::SystemDigraph dg = dkf::build_digraph(m);
  MatrixXi E(5, 7);
  E << 1, 1, 0, 0, 0, 0, 0,  //
      1, 1, 0, 1, 0, 0, 0,   //
      1, 0, 1, 0, 0, 0, 1,   //
      0, 0, 1, 0, 1, 0, 0,   //
      0, 0, 0, 1, 1, 1, 0;
  CHECK(dg.E == E);
}

TEST_CASE("digraph of a diagonal system is [I | 0]") {
  dkf::GlobalModel m;
  m.n = 3;
  m.p = 0;
  std::vector<Eigen::Triplet<double>> f{{0, 0, 1.0}, {1, 1, 2.0}, {2, 2, 3.0}};
  m.F.resize(3, 3);
  m.F.setFromTriplets(f.begin(), f.end());
  m.G.resize(3, 1);  // structurally empty noise column
  m.H.resize(0, 3);
  const dkf::SystemDigraph dg = dkf::build_digraph(m);
  CHECK(dg.E.leftCols(3) == MatrixXi::Identity(3, 3));
  CHECK(dg.E.rightCols(1).isZero());
}

TEST_CASE("digraph pattern equals the structural nonzero mask") {
  dkf::RandomModelSpec spec;
  spec.n = 25;
  spec.band = 4;
  spec.num_sensors = 3;
  spec.obs_span = 9;
  spec.seed = 10;
  const dkf::GlobalModel m = dkf::build_random_model(spec);
  const dkf::SystemDigraph dg = dkf::build_digraph(m);
  const MatrixXd F(m.F), G(m.G);
  for (int r = 0; r < m.n; ++r) {
    for (int c = 0; c < m.n; ++c) CHECK(dg.E(r, c) == (F(r, c) != 0.0 ? 1 : 0));
    for (int c = 0; c < G.cols(); ++c) CHECK(dg.E(r, m.n + c) == (G(r, c) != 0.0 ? 1 : 0));
  }
}

TEST_CASE("cut-point sets of the paper example") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto sets = dkf::cut_point_sets(m);
  CHECK(sets[0] == std::vector<int>{0, 1, 2});
  CHECK(sets[1] == std::vector<int>{1, 2, 3});
  CHECK(sets[2] == std::vector<int>{3, 4});
}

TEST_CASE("identity observation gives disjoint singletons") {
  dkf::GlobalModel m;
  m.n = 4;
  m.p = 4;
  std::vector<Eigen::Triplet<double>> f;
  for (int i = 0; i < 4; ++i) f.emplace_back(i, i, 0.5);
  m.F.resize(4, 4);
  m.F.setFromTriplets(f.begin(), f.end());
  m.G.resize(4, 0);
  m.Q.resize(0, 0);
  std::vector<Eigen::Triplet<double>> h;
  for (int i = 0; i < 4; ++i) h.emplace_back(i, i, 1.0);
  m.H.resize(4, 4);
  m.H.setFromTriplets(h.begin(), h.end());
  m.R = MatrixXd::Identity(4, 4);
  m.S0 = MatrixXd::Identity(4, 4);
  m.sensor_rows = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  const auto sets = dkf::cut_point_sets(m);
  for (int l = 0; l < 4; ++l) CHECK(sets[l] == std::vector<int>{l});
}

TEST_CASE("unobserved state lands in exactly one extended cut-point set") {
  dkf::GlobalModel m = oracle::five_state_example();
  // Wipe state 4 out of every observation row: x5 becomes unobserved.
  MatrixXd H(m.H);
  H.col(4).setZero();
  m.H = H.sparseView();
  const auto sets = dkf::cut_point_sets(m);
  int holders = 0;
  for (const auto& s : sets) holders += std::count(s.begin(), s.end(), 4);
  CHECK(holders == 1);
  std::set<int> uni;
  for (const auto& s : sets) uni.insert(s.begin(), s.end());
  CHECK(uni.size() == 5);
}

TEST_CASE("extend_cutsets") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const dkf::SystemDigraph dg = dkf::build_digraph(m);
  const auto sets = dkf::cut_point_sets(m);
  SUBCASE("already large enough: unchanged") {
    CHECK(dkf::extend_cutsets(sets, 2, dg) == sets);
  }
  SUBCASE("L > n throws") { CHECK_THROWS_AS(dkf::extend_cutsets(sets, 6, dg), dkf::ConfigError); }
  SUBCASE("singleton grows over a chain to its nearest states") {
    dkf::GlobalModel chain;
    chain.n = 6;
    chain.p = 0;
    std::vector<Eigen::Triplet<double>> f;
    for (int i = 0; i < 6; ++i) f.emplace_back(i, i, 0.9);
    for (int i = 0; i + 1 < 6; ++i) f.emplace_back(i, i + 1, 0.1);
    chain.F.resize(6, 6);
    chain.F.setFromTriplets(f.begin(), f.end());
    chain.G.resize(6, 0);
    chain.H.resize(0, 6);
    const dkf::SystemDigraph cd = dkf::build_digraph(chain);
    const auto grown = dkf::extend_cutsets({{3}}, 3, cd);
    CHECK(grown[0] == std::vector<int>{2, 3, 4});
  }
}

TEST_CASE("extend_for_band_coverage covers every in-band pair") {
  const int n = 12, L = 2;
  std::vector<std::vector<int>> sets{{0, 1, 2, 3}, {6, 7, 8}, {9, 10, 11}};
  const auto fixed = dkf::extend_for_band_coverage(sets, L, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j <= std::min(n - 1, i + L); ++j) {
      bool covered = false;
      for (const auto& s : fixed)
        covered = covered || (std::count(s.begin(), s.end(), i) &&
                              std::count(s.begin(), s.end(), j));
      CHECK(covered);
    }
}

TEST_CASE("subsystem extraction on the paper example") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto sets = dkf::cut_point_sets(m);
  const MatrixXd F(m.F), G(m.G);

  SUBCASE("sensor 1") {
    const dkf::SubSystem sub = dkf::build_subsystem(m, sets[0], 0);
    MatrixXd F1(3, 3);
    F1 << F(0, 0), F(0, 1), 0, F(1, 0), F(1, 1), 0, F(2, 0), 0, F(2, 2);
    CHECK(sub.F_loc.isApprox(F1));
    CHECK(sub.d_input_states == std::vector<int>{3});
    MatrixXd D1(3, 1);
    D1 << 0, F(1, 3), 0;
    CHECK(sub.D_loc.isApprox(D1));
    CHECK(sub.noise_ids == std::vector<int>{1});
    MatrixXd G1(3, 1);
    G1 << 0, 0, G(2, 1);
    CHECK(sub.G_loc.isApprox(G1));
    // T_1 selects the first three states; H^(1) = [1 1 1].
    MatrixXd T(sub.T);
    CHECK(T.rows() == 3);
    CHECK(T.leftCols(3).isApprox(MatrixXd::Identity(3, 3)));
    CHECK(T.rightCols(2).isZero());
    CHECK(sub.H_red.isApprox(MatrixXd::Ones(1, 3)));
  }
  SUBCASE("sensor 2 internal inputs are x1 and x5") {
    const dkf::SubSystem sub = dkf::build_subsystem(m, sets[1], 1);
    CHECK(sub.d_input_states == std::vector<int>{0, 4});
    MatrixXd D2(3, 2);
    D2 << F(1, 0), 0, F(2, 0), 0, 0, F(3, 4);
    CHECK(sub.D_loc.isApprox(D2));
  }
  SUBCASE("whole-state cutset gives back F with no internal inputs") {
    const dkf::SubSystem sub = dkf::build_subsystem(m, {0, 1, 2, 3, 4}, 0);
    CHECK(sub.F_loc.isApprox(F));
    CHECK(sub.d_input_states.empty());
    CHECK(sub.D_loc.cols() == 0);
  }
  SUBCASE("empty cutset throws") {
    CHECK_THROWS_AS(dkf::build_subsystem(m, {}, 0), dkf::ConfigError);
  }
}

TEST_CASE("row reconstruction and H-consistency invariants") {
  dkf::RandomModelSpec spec;
  spec.n = 30;
  spec.band = 4;
  spec.num_sensors = 4;
  spec.obs_span = 10;
  spec.seed = 17;
  const dkf::GlobalModel m = dkf::build_random_model(spec);
  const auto sets = dkf::cut_point_sets(m);
  const MatrixXd F(m.F);
  for (int l = 0; l < 4; ++l) {
    const dkf::SubSystem sub = dkf::build_subsystem(m, sets[l], l);
    // Every dynamics coefficient of a cutset row is in F_loc or D_loc,
    // exactly once.
    for (int rl = 0; rl < sub.n_l(); ++rl) {
      const int r = sub.cutset[rl];
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m.n);
      for (int cl = 0; cl < sub.n_l(); ++cl) row(sub.cutset[cl]) = sub.F_loc(rl, cl);
      for (std::size_t q = 0; q < sub.d_input_states.size(); ++q)
        row(sub.d_input_states[q]) = sub.D_loc(rl, static_cast<int>(q));
      CHECK((row - F.row(r)).cwiseAbs().maxCoeff() == 0.0);
    }
    // Zero-padding H^(l) through T_l reproduces H_l.
    CHECK((sub.H_red * MatrixXd(sub.T) - m.H_l(l)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fusion topology on the paper example") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto sets = dkf::cut_point_sets(m);
  std::vector<dkf::SubSystem> subs;
  for (int l = 0; l < 3; ++l) subs.push_back(dkf::build_subsystem(m, sets[l], l));
  const dkf::CommGraph comm = dkf::default_comm_graph(subs);
  const dkf::FusionTopology topo = dkf::build_fusion_topology(m, subs, comm);

  CHECK(topo.observers[0] == std::vector<int>{0});
  CHECK(topo.observers[1] == std::vector<int>{0, 1});
  CHECK(topo.observers[2] == std::vector<int>{0, 1});
  CHECK(topo.observers[3] == std::vector<int>{1, 2});
  CHECK(topo.observers[4] == std::vector<int>{2});
  for (int j = 0; j < 5; ++j) {
    const auto& W = topo.weights[j];
    CHECK((W - W.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    for (int r = 0; r < W.rows(); ++r) CHECK(W.row(r).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("fusion subgraph vertex sets match a column-scan oracle") {
  dkf::RandomModelSpec spec;
  spec.n = 20;
  spec.band = 3;
  spec.num_sensors = 5;
  spec.obs_span = 8;
  spec.seed = 23;
  const dkf::GlobalModel m = dkf::build_random_model(spec);
  const auto sets = dkf::cut_point_sets(m);
  std::vector<dkf::SubSystem> subs;
  for (int l = 0; l < 5; ++l) subs.push_back(dkf::build_subsystem(m, sets[l], l));
  const dkf::FusionTopology topo =
      dkf::build_fusion_topology(m, subs, dkf::default_comm_graph(subs));
  const MatrixXd H(m.H);
  for (int j = 0; j < m.n; ++j) {
    std::vector<int> scan;
    for (int l = 0; l < 5; ++l) {
      const auto [b, e] = m.sensor_rows[l];
      bool nz = false;
      for (int r = b; r < e; ++r) nz = nz || H(r, j) != 0.0;
      if (nz) scan.push_back(l);
    }
    CHECK(topo.observers[j] == scan);
  }
}

TEST_CASE("disconnected fusion subgraph is reported with the state id") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto sets = dkf::cut_point_sets(m);
  std::vector<dkf::SubSystem> subs;
  for (int l = 0; l < 3; ++l) subs.push_back(dkf::build_subsystem(m, sets[l], l));
  dkf::CommGraph none;
  none.num_sensors = 3;
  none.adj.resize(3);
  CHECK_THROWS_WITH_AS(dkf::build_fusion_topology(m, subs, none),
                       doctest::Contains("state 1"), dkf::ConfigError);
}

TEST_CASE("report and edge list exports") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto sets = dkf::cut_point_sets(m);
  std::vector<dkf::SubSystem> subs;
  for (int l = 0; l < 3; ++l) subs.push_back(dkf::build_subsystem(m, sets[l], l));
  const dkf::CommGraph comm = dkf::default_comm_graph(subs);
  const std::string rep = dkf::decomposition_report(subs, comm);
  CHECK(rep.find("sensor 0") != std::string::npos);
  CHECK(rep.find("cutset: 0 1 2") != std::string::npos);
  const std::string csv = dkf::fusion_edges_csv(dkf::build_fusion_topology(m, subs, comm));
  CHECK(csv.find("sensor,state") == 0);
  CHECK(csv.find("0,0") != std::string::npos);
}
