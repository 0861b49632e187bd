#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "dkf/band.hpp"
#include "dkf/rng.hpp"
#include "oracles.hpp"

using dkf::BandProfile;
using Eigen::MatrixXd;

TEST_CASE("band_project keeps the band and rejects bad input") {
  dkf::Rng rng(1);
  MatrixXd A(4, 4);
  A << 2, 1, 0.5, 0.1, 1, 3, 1, 0.5, 0.5, 1, 4, 1, 0.1, 0.5, 1, 5;

  SUBCASE("identity stays identity") {
    const BandProfile b = dkf::band_project(MatrixXd::Identity(4, 4), 2);
    CHECK(b.dense().isApprox(MatrixXd::Identity(4, 4)));
  }
  SUBCASE("L = n-1 is lossless") {
    const BandProfile b = dkf::band_project(A, 3);
    CHECK(b.dense().isApprox(A));
  }
  SUBCASE("tridiagonal input round-trips at L=1") {
    MatrixXd T = MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4; ++i) T(i, i) = 2.0;
    for (int i = 0; i + 1 < 4; ++i) T(i, i + 1) = T(i + 1, i) = -0.5;
    CHECK(dkf::band_project(T, 1).dense().isApprox(T));
  }
  SUBCASE("off-band entries are dropped") {
    const BandProfile b = dkf::band_project(A, 1);
    CHECK(b.get(0, 2) == 0.0);
    CHECK(b.at(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("L >= n throws") { CHECK_THROWS_AS(dkf::band_project(A, 4), dkf::ConfigError); }
  SUBCASE("asymmetric input throws") {
    MatrixXd B = A;
    B(0, 1) += 1.0;
    CHECK_THROWS_AS(dkf::band_project(B, 1), dkf::ConfigError);
  }
}

TEST_CASE("lband_invert on diagonal matrices") {
  for (int L : {0, 1, 3}) {
    BandProfile band(5, L);
    for (int i = 0; i < 5; ++i) band.at(i, i) = 1.0 + i;
    const BandProfile Z = dkf::lband_invert(band);
    for (int i = 0; i < 5; ++i) CHECK(Z.at(i, i) == doctest::Approx(1.0 / (1.0 + i)));
    CHECK(Z.dense().isApprox(band.dense().inverse(), 1e-12));
  }
}

TEST_CASE("lband_invert recovers a banded inverse from the band of S") {
  dkf::Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + static_cast<int>(rng.uniform_int(10));
    const int L = 1 + static_cast<int>(rng.uniform_int(3));
    MatrixXd Z, S;
    oracle::random_banded_inverse_pair(n, L, rng, Z, S);
    const BandProfile recovered = dkf::lband_invert(dkf::band_project(S, L));
    const double rel = (recovered.dense() - Z).norm() / Z.norm();
    CHECK(rel < dkf::tol::kReconstructRel);
    // Exactly banded and symmetric by construction of the profile.
    const MatrixXd Zd = recovered.dense();
    for (int i = 0; i < n; ++i)
      for (int j = i + L + 1; j < n; ++j) CHECK(Zd(i, j) == 0.0);
  }
}

TEST_CASE("lband_invert window chain uses only neighboring submatrices") {
  // The alternating-window formula touches windows [a, a+L] only; feeding a
  // band whose far-away entries are poisoned must not change a middle block.
  dkf::Rng rng(5);
  MatrixXd Z, S;
  oracle::random_banded_inverse_pair(40, 2, rng, Z, S);
  BandProfile band = dkf::band_project(S, 2);
  BandProfile poisoned = band;
  for (int i = 30; i < 40; ++i)
    for (int j = i; j <= std::min(39, i + 2); ++j) poisoned.at(i, j) += 3.0 + i - j;
  const BandProfile a = dkf::lband_invert(band);
  const BandProfile b = dkf::lband_invert(poisoned);
  for (int i = 0; i < 20; ++i)
    for (int j = i; j <= std::min(39, i + 2); ++j)
      CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-12));
}

TEST_CASE("lband_invert reports the singular window") {
  BandProfile band(6, 1);
  for (int i = 0; i < 6; ++i) band.at(i, i) = 1.0;
  band.at(3, 3) = 0.0;  // window containing index 3 loses definiteness
  try {
    dkf::lband_invert(band);
    FAIL("expected SingularWindowError");
  } catch (const dkf::SingularWindowError& e) {
    CHECK(e.index >= 2);
    CHECK(e.index <= 3);
  }
}

TEST_CASE("collapse_offband reproduces off-band entries of a banded inverse") {
  dkf::Rng rng(7);
  SUBCASE("5x5 tridiagonal example entry") {
    MatrixXd Z, S;
    oracle::random_banded_inverse_pair(5, 1, rng, Z, S);
    const BandProfile band = dkf::band_project(S, 1);
    // s_35 = s_34 s_44^{-1} s_45 in 1-based indexing.
    const double via_formula = S(2, 3) / S(3, 3) * S(3, 4);
    const double collapsed = dkf::collapse_offband(band, 2, 4);
    CHECK(collapsed == doctest::Approx(via_formula).epsilon(1e-12));
    CHECK(collapsed == doctest::Approx(S(2, 4)).epsilon(1e-10));
  }
  SUBCASE("every off-band entry, several L") {
    for (int L : {1, 2, 3}) {
      const int n = 14;
      MatrixXd Z, S;
      oracle::random_banded_inverse_pair(n, L, rng, Z, S);
      const BandProfile band = dkf::band_project(S, L);
      dkf::CollapseEvaluator eval(band);
      const double scale = S.cwiseAbs().maxCoeff();
      for (int i = 0; i < n; ++i)
        for (int j = i + L + 1; j < n; ++j)
          CHECK(std::abs(eval.value(i, j) - S(i, j)) < 1e-10 * scale);
    }
  }
  SUBCASE("diagonal band gives zero off-band") {
    BandProfile band(6, 1);
    for (int i = 0; i < 6; ++i) band.at(i, i) = 2.0 + i;
    CHECK(dkf::collapse_offband(band, 0, 4) == doctest::Approx(0.0));
  }
  SUBCASE("in-band query is rejected") {
    BandProfile band(6, 2);
    for (int i = 0; i < 6; ++i) band.at(i, i) = 1.0;
    CHECK_THROWS_AS(dkf::collapse_offband(band, 0, 1), dkf::ConfigError);
  }
}

TEST_CASE("collapse_complete produces a matrix with L-banded inverse") {
  dkf::Rng rng(9);
  for (int L : {1, 2}) {
    MatrixXd Z, S;
    oracle::random_banded_inverse_pair(12, L, rng, Z, S);
    const MatrixXd completed = dkf::collapse_complete(dkf::band_project(S, L));
    CHECK((completed - S).norm() / S.norm() < 1e-10);
    // Off-band mass of the inverse vanishes.
    const MatrixXd Zr = oracle::dense_inverse(completed);
    double off = 0.0;
    for (int i = 0; i < 12; ++i)
      for (int j = i + L + 1; j < 12; ++j) off = std::max(off, std::abs(Zr(i, j)));
    CHECK(off < dkf::tol::kCollapseAbs * Zr.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("reconstruction round trip at tight tolerance") {
  dkf::Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd Z, S;
    oracle::random_banded_inverse_pair(20, 2, rng, Z, S);
    const BandProfile rec = dkf::lband_invert(dkf::band_project(S, 2));
    CHECK((rec.dense() - Z).norm() / Z.norm() < dkf::tol::kReconstructRel);
  }
}

TEST_CASE("kl divergence basics") {
  dkf::Rng rng(13);
  MatrixXd Z, S;
  oracle::random_banded_inverse_pair(8, 2, rng, Z, S);

  SUBCASE("zero at equality") {
    const auto d = dkf::kl_divergence(Z, Z);
    CHECK(d.divergence == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("bounded by the eigenvalue bound on random pairs") {
    for (int t = 0; t < 100; ++t) {
      MatrixXd Za, Sa, Zb, Sb;
      oracle::random_banded_inverse_pair(6, 2, rng, Za, Sa);
      oracle::random_banded_inverse_pair(6, 2, rng, Zb, Sb);
      const auto d = dkf::kl_divergence(Za, Zb);
      CHECK(d.divergence >= 0.0);
      CHECK(d.divergence <= d.upper_bound * (1.0 + 1e-12));
    }
  }
  SUBCASE("nonincreasing over nested band approximations") {
    const int n = 12;
    MatrixXd X(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) X(i, j) = rng.normal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(X + X.transpose());
    Eigen::VectorXd lam(n);
    for (int i = 0; i < n; ++i) lam(i) = rng.uniform(0.5, 10.0);
    const MatrixXd Zex = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    const MatrixXd Sex = oracle::dense_inverse(Zex);
    double prev = 1e300;
    for (int L = 1; L < n; ++L) {
      const MatrixXd Zl = dkf::lband_invert(dkf::band_project(Sex, L)).dense();
      const double div = dkf::kl_divergence(Zex, Zl).divergence;
      CHECK(div <= prev + 1e-9);
      prev = div;
    }
    CHECK(prev == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("non-SPD input throws") {
    MatrixXd bad = Z;
    bad(0, 0) = -5.0;
    CHECK_THROWS(dkf::kl_divergence(bad, Z));
  }
}

TEST_CASE("band CSV round trip") {
  dkf::Rng rng(17);
  MatrixXd Z, S;
  oracle::random_banded_inverse_pair(7, 2, rng, Z, S);
  const BandProfile band = dkf::band_project(S, 2);
  const BandProfile back = dkf::band_from_csv(dkf::band_to_csv(band));
  CHECK(back.dim() == band.dim());
  CHECK(band.max_abs_diff(back) == doctest::Approx(0.0));
}
