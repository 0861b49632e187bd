// Timing comparison of the serial reference kernels against their OpenMP
// counterparts: dense JOR steps, DICI band rounds, and contraction trials.

#include <chrono>
#include <cstdio>

#include "dkf/dici.hpp"
#include "dkf/experiments.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double bench_jor(int n, int reps, dkf::Exec exec) {
  dkf::Rng rng(7);
  const Eigen::MatrixXd Z = dkf::random_spd(n, rng);
  const Eigen::VectorXd Minv = Z.diagonal().cwiseInverse();
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) - 0.1 * Minv.asDiagonal() * Z;
  const Eigen::VectorXd gMinv = 0.1 * Minv;
  Eigen::MatrixXd S = Eigen::MatrixXd(Minv.asDiagonal());
  Eigen::MatrixXd next(n, n);
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    dkf::jor_step(P, gMinv, S, next, exec);
    S.swap(next);
  }
  return seconds_since(t0);
}

double bench_dici(int n, int L, int rounds, dkf::Exec exec) {
  dkf::Rng rng(11);
  const dkf::BandProfile Z = dkf::random_banded_spd(n, L, rng);
  std::vector<std::vector<int>> windows;
  const int span = 2 * L + 10;
  for (int start = 0; start + span <= n; start += span - 2 * L) {
    std::vector<int> w(span);
    for (int i = 0; i < span; ++i) w[i] = start + i;
    windows.push_back(w);
  }
  if (windows.empty() || windows.back().back() != n - 1) {
    std::vector<int> w;
    for (int i = std::max(0, n - span); i < n; ++i) w.push_back(i);
    windows.push_back(w);
  }
  dkf::DiciPartition part(windows, n, L);
  dkf::DiciOptions opt;
  opt.fixed_rounds = rounds;
  opt.count_flops = true;  // per-sensor path is the parallel one
  opt.exec = exec;
  const auto t0 = Clock::now();
  dkf::dici_or_band_inverse(Z, part, opt);
  return seconds_since(t0);
}

double bench_contraction(int n, int trials, dkf::Exec exec) {
  const auto t0 = Clock::now();
  if (exec == dkf::Exec::serial) {
    for (int t = 0; t < trials; ++t) {
      dkf::Rng rng = dkf::Rng::fork(3, 0xc0u, t);
      dkf::contraction_trial(n, rng);
    }
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < trials; ++t) {
      dkf::Rng rng = dkf::Rng::fork(3, 0xc0u, t);
      dkf::contraction_trial(n, rng);
    }
  }
  return seconds_since(t0);
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", dkf::hardware_threads());
  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial[s]", "openmp[s]", "speedup");

  {
    const double ts = bench_jor(400, 50, dkf::Exec::serial);
    const double tp = bench_jor(400, 50, dkf::Exec::openmp);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "jor_step n=400 x50", ts, tp, ts / tp);
  }
  {
    const double ts = bench_dici(600, 8, 40, dkf::Exec::serial);
    const double tp = bench_dici(600, 8, 40, dkf::Exec::openmp);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "dici round n=600 L=8 x40", ts, tp, ts / tp);
  }
  {
    const double ts = bench_contraction(60, 40, dkf::Exec::serial);
    const double tp = bench_contraction(60, 40, dkf::Exec::openmp);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "contraction n=60 x40", ts, tp, ts / tp);
  }
  return 0;
}
