#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "dkf/model.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;

TEST_CASE("elliptic builder: zero operator gives the identity") {
  dkf::EllipticSpec spec;
  spec.grid_rows = 2;
  spec.grid_cols = 2;
  spec.dt = 1.0;
  const dkf::GlobalModel m = dkf::build_elliptic_model(spec);
  CHECK(m.n == 4);
  CHECK(MatrixXd(m.F).isApprox(MatrixXd::Identity(4, 4)));
}

TEST_CASE("elliptic builder: 3x3 grid center row matches the 5-point stencil") {
  dkf::EllipticSpec spec;
  spec.grid_rows = 3;
  spec.grid_cols = 3;
  spec.mu = -1.0;
  spec.beta_h = 0.25;
  spec.beta_v = 0.25;
  spec.dt = 1.0;
  const dkf::GlobalModel m = dkf::build_elliptic_model(spec);
  // F = I + dt F_c, so F_c = F - I; center cell is flat index 4.
  const MatrixXd Fc = MatrixXd(m.F) - MatrixXd::Identity(9, 9);
  CHECK(Fc(4, 4) == doctest::Approx(-1.0));
  for (int nb : {1, 3, 5, 7}) CHECK(Fc(4, nb) == doctest::Approx(0.25));
  CHECK(Fc(4, 0) == doctest::Approx(0.0));
  CHECK(Fc(4, 8) == doctest::Approx(0.0));
  // Every row touches at most 5 grid positions.
  for (int r = 0; r < 9; ++r) {
    int nnz = 0;
    for (int c = 0; c < 9; ++c) nnz += Fc(r, c) != 0.0 || r == c ? 1 : 0;
    CHECK(nnz <= 5);
  }
}

TEST_CASE("elliptic builder: bandwidth equals the column count") {
  dkf::EllipticSpec spec;
  spec.grid_rows = 4;
  spec.grid_cols = 5;
  spec.mu = -0.8;
  spec.beta_h = 0.2;
  spec.beta_v = 0.3;
  spec.dt = 0.1;
  const dkf::GlobalModel m = dkf::build_elliptic_model(spec);
  CHECK(dkf::matrix_bandwidth(m.F) == 5);
}

TEST_CASE("elliptic builder: noise wiring and errors") {
  dkf::EllipticSpec spec;
  spec.grid_rows = 3;
  spec.grid_cols = 3;
  spec.dt = 0.5;
  spec.noise_sites = {2, 7};
  const dkf::GlobalModel m = dkf::build_elliptic_model(spec);
  const MatrixXd G(m.G);
  CHECK(G(2, 0) == doctest::Approx(0.5));
  CHECK(G(7, 1) == doctest::Approx(0.5));
  CHECK(G.cwiseAbs().sum() == doctest::Approx(1.0));

  spec.dt = 0.0;
  CHECK_THROWS_AS(dkf::build_elliptic_model(spec), dkf::ConfigError);
  spec.dt = 0.5;
  spec.noise_sites = {9};
  CHECK_THROWS_AS(dkf::build_elliptic_model(spec), dkf::ConfigError);
}

TEST_CASE("simulate: deterministic in the seed, zero noise gives zeros") {
  dkf::GlobalModel m = oracle::five_state_example();
  SUBCASE("zero covariances give identically zero sequences") {
    dkf::GlobalModel z = m;
    z.Q.setZero();
    z.R.setZero();
    z.S0.setZero();
    const auto traj = dkf::simulate(z, 10, 3);
    for (const auto& x : traj.states) CHECK(x.norm() == 0.0);
    for (const auto& y : traj.observations) CHECK(y.norm() == 0.0);
  }
  SUBCASE("bit-identical regeneration") {
    const auto a = dkf::simulate(m, 20, 99);
    const auto b = dkf::simulate(m, 20, 99);
    const auto c = dkf::simulate(m, 20, 100);
    bool differs = false;
    for (int k = 0; k <= 20; ++k) {
      CHECK(a.states[k] == b.states[k]);
      CHECK(a.observations[k] == b.observations[k]);
      differs = differs || a.states[k] != c.states[k];
    }
    CHECK(differs);
  }
}

TEST_CASE("simulate: noiseless geometric decay") {
  dkf::GlobalModel m;
  m.n = 2;
  m.p = 0;
  std::vector<Eigen::Triplet<double>> f{{0, 0, 0.5}, {1, 1, 0.5}};
  m.F.resize(2, 2);
  m.F.setFromTriplets(f.begin(), f.end());
  m.G.resize(2, 0);
  m.Q.resize(0, 0);
  m.H.resize(0, 2);
  m.R.resize(0, 0);
  m.S0 = MatrixXd::Identity(2, 2);
  const auto traj = dkf::simulate(m, 12, 5);
  for (int k = 0; k <= 12; ++k)
    CHECK((traj.states[k] - std::pow(0.5, k) * traj.states[0]).norm() <
          1e-12 * traj.states[0].norm());
}

TEST_CASE("simulate: initial-state sample covariance approaches S0") {
  dkf::RandomModelSpec spec;
  spec.seed = 21;
  const dkf::GlobalModel m = dkf::build_random_model(spec);
  const int draws = 10000;
  MatrixXd acc = MatrixXd::Zero(m.n, m.n);
  for (int t = 0; t < draws; ++t) {
    const auto traj = dkf::simulate(m, 0, 1000 + t);
    acc += traj.states[0] * traj.states[0].transpose();
  }
  acc /= draws;
  // Wishart noise level: E||C - S0||_F^2 = (tr(S0)^2 + tr(S0^2)) / draws.
  const double expected =
      std::sqrt((std::pow(m.S0.trace(), 2) + (m.S0 * m.S0).trace()) / draws) / m.S0.norm();
  CHECK((acc - m.S0).norm() / m.S0.norm() < 1.5 * expected);
}

TEST_CASE("random model: unit spectral norm and valid structure") {
  dkf::RandomModelSpec spec;
  spec.seed = 4;
  const dkf::GlobalModel m = dkf::build_random_model(spec);
  CHECK(dkf::matrix_bandwidth(m.F) <= spec.band);
  Eigen::JacobiSVD<MatrixXd> svd(MatrixXd(m.F));
  CHECK(svd.singularValues()(0) == doctest::Approx(1.0).epsilon(1e-6));
  m.validate();
}

TEST_CASE("bandwidth_reduce") {
  SUBCASE("already banded is not made worse") {
    dkf::RandomModelSpec spec;
    spec.n = 30;
    spec.band = 3;
    spec.num_sensors = 3;
    spec.obs_span = 10;
    const dkf::GlobalModel m = dkf::build_random_model(spec);
    const auto [reduced, perm] = dkf::bandwidth_reduce(m);
    CHECK(dkf::matrix_bandwidth(reduced.F) <= dkf::matrix_bandwidth(m.F));
  }
  SUBCASE("arrow matrix gets a strictly smaller bandwidth") {
    dkf::GlobalModel m;
    m.n = 10;
    m.p = 0;
    std::vector<Eigen::Triplet<double>> f;
    for (int i = 0; i < 10; ++i) f.emplace_back(i, i, 1.0);
    for (int i = 1; i < 10; ++i) {
      f.emplace_back(0, i, 0.5);
      f.emplace_back(i, 0, 0.5);
    }
    m.F.resize(10, 10);
    m.F.setFromTriplets(f.begin(), f.end());
    m.G.resize(10, 0);
    m.Q.resize(0, 0);
    m.H.resize(0, 10);
    m.R.resize(0, 0);
    m.S0 = MatrixXd::Identity(10, 10);
    CHECK(dkf::matrix_bandwidth(m.F) == 9);
    const auto [reduced, perm] = dkf::bandwidth_reduce(m);
    CHECK(dkf::matrix_bandwidth(reduced.F) < 9);
    // Permutation maps values consistently: P F P^T at (perm[i], perm[j]).
    const MatrixXd Fo(m.F), Fr(reduced.F);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) CHECK(Fr(perm[i], perm[j]) == doctest::Approx(Fo(i, j)));
  }
}

TEST_CASE("model save/load round trip is byte identical") {
  const dkf::GlobalModel m = oracle::five_state_example(false);
  const std::string a = dkf::save_model(m);
  const dkf::GlobalModel back = dkf::load_model(a);
  const std::string b = dkf::save_model(back);
  CHECK(a == b);
  CHECK(MatrixXd(back.F).isApprox(MatrixXd(m.F)));
  CHECK(back.S0.isApprox(m.S0));
  back.validate();
}

TEST_CASE("validate rejects broken structure") {
  dkf::GlobalModel m = oracle::five_state_example();
  SUBCASE("non-block-diagonal R") {
    m.R(0, 2) = 0.1;
    m.R(2, 0) = 0.1;
    CHECK_THROWS_AS(m.validate(), dkf::ConfigError);
  }
  SUBCASE("rows not partitioned") {
    m.sensor_rows = {{0, 1}, {1, 3}, {2, 3}};
    CHECK_THROWS_AS(m.validate(), dkf::ConfigError);
  }
  SUBCASE("S0 not positive definite") {
    m.S0.setZero();
    CHECK_THROWS_AS(m.validate(), dkf::ConfigError);
  }
}

TEST_CASE("trajectory CSV export has the documented header") {
  const dkf::GlobalModel m = oracle::five_state_example();
  const auto traj = dkf::simulate(m, 3, 8);
  const std::string sx = dkf::trajectory_states_csv(traj, "seed=8");
  CHECK(sx.find("# seed=8") == 0);
  CHECK(sx.find("k,x_0,x_1,x_2,x_3,x_4") != std::string::npos);
  const std::string sy = dkf::trajectory_observations_csv(traj, "seed=8");
  CHECK(sy.find("k,y_0,y_1,y_2") != std::string::npos);
}
