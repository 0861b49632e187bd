#include "dkf/dici.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>

#include "dkf/errors.hpp"

namespace dkf {

void jor_step(const Eigen::Ref<const Eigen::MatrixXd>& P,
              const Eigen::Ref<const Eigen::VectorXd>& gamma_Minv,
              const Eigen::Ref<const Eigen::MatrixXd>& S, Eigen::Ref<Eigen::MatrixXd> S_next,
              Exec exec) {
  const int n = static_cast<int>(P.rows());
  if (use_openmp(exec)) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      S_next.row(i).noalias() = P.row(i) * S;
      S_next(i, i) += gamma_Minv(i);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      S_next.row(i).noalias() = P.row(i) * S;
      S_next(i, i) += gamma_Minv(i);
    }
  }
}

namespace {

// Largest eigenvalue of M^{-1/2} Z M^{-1/2}; P_gamma is similar to
// I - gamma * that matrix, so its spectrum is real.
double scaled_lambda_max(const Eigen::Ref<const Eigen::MatrixXd>& Z) {
  const Eigen::VectorXd d = Z.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.asDiagonal() * Z * d.asDiagonal());
  return es.eigenvalues().maxCoeff();
}

double spectral_norm_sym(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

JorResult jor_inverse(const Eigen::Ref<const Eigen::MatrixXd>& Z, const JorConfig& cfg,
                      const Eigen::MatrixXd* reference, const Eigen::MatrixXd* S0_override,
                      Exec exec) {
  const int n = static_cast<int>(Z.rows());
  if (cfg.gamma <= 0.0) throw ConfigError("jor_inverse: gamma must be positive");
  if (Z.diagonal().minCoeff() <= 0.0) throw Error("jor_inverse: Z has a non-positive diagonal");

  const double lmax = scaled_lambda_max(Z);
  const double rho = std::max(std::abs(1.0 - cfg.gamma * lmax), std::abs(1.0 - cfg.gamma));
  if (1.0 - cfg.gamma * lmax <= -1.0)
    throw Error("jor_inverse: spectral radius of P_gamma is >= 1; use gamma < " +
                std::to_string(2.0 / lmax));
  (void)rho;

  const Eigen::VectorXd Minv = Z.diagonal().cwiseInverse();
  const Eigen::MatrixXd P =
      Eigen::MatrixXd::Identity(n, n) - cfg.gamma * Minv.asDiagonal() * Z;
  const Eigen::VectorXd gMinv = cfg.gamma * Minv;

  JorResult out;
  out.S = S0_override ? *S0_override : Eigen::MatrixXd(Minv.asDiagonal());
  Eigen::MatrixXd next(n, n);
  int below = 0;
  if (reference) out.error_norms.push_back(spectral_norm_sym(out.S - *reference));
  while (true) {
    if (out.iterations >= cfg.max_iter)
      throw ConvergenceError("jor_inverse: max_iter reached", out.residual);
    jor_step(P, gMinv, out.S, next, exec);
    out.residual = (next - out.S).norm();
    out.S.swap(next);
    ++out.iterations;
    if (reference) out.error_norms.push_back(spectral_norm_sym(out.S - *reference));
    below = out.residual < cfg.tol ? below + 1 : 0;
    if (below >= cfg.stop_window) break;
  }
  out.converged = true;
  return out;
}

DiciPartition::DiciPartition(std::vector<std::vector<int>> windows, int n, int L)
    : windows_(std::move(windows)), n_(n), L_(L) {
  for (auto& w : windows_) std::sort(w.begin(), w.end());
  const int N = num_windows();
  owned_.resize(N);
  state_owner_.assign(n, -1);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < N && state_owner_[i] < 0; ++l)
      if (window_contains(l, i)) state_owner_[i] = l;
  for (int i = 0; i < n; ++i)
    if (state_owner_[i] < 0)
      throw ConfigError("dici partition: state " + std::to_string(i) + " is in no window");

  for (int i = 0; i < n; ++i)
    for (int j = i; j <= std::min(n - 1, i + L); ++j) {
      const int o = pair_owner(i, j);
      if (o < 0)
        throw ConfigError("dici partition: in-band entry (" + std::to_string(i) + "," +
                          std::to_string(j) + ") is covered by no window");
      owned_[o].emplace_back(i, j);
    }

  // Halo: in-band entries a sensor's round may read but does not hold,
  // grouped by their owners. Reads reach 2L past the window span (direct
  // iterate reads plus collapse recursions, which stay within the row span of
  // their query).
  halo_.resize(N);
  for (int l = 0; l < N; ++l) {
    if (windows_[l].empty()) continue;
    const int lo = std::max(0, windows_[l].front() - 2 * L);
    const int hi = std::min(n - 1, windows_[l].back() + 2 * L);
    std::vector<long long> from(N, 0);
    for (int i = lo; i <= hi; ++i)
      for (int j = i; j <= std::min(hi, i + L); ++j) {
        if (window_contains(l, i) && window_contains(l, j)) continue;
        from[pair_owner(i, j)] += 1;
      }
    for (int m = 0; m < N; ++m)
      if (m != l && from[m] > 0) halo_[l].emplace_back(m, from[m]);
  }
}

bool DiciPartition::window_contains(int l, int v) const {
  const auto& w = windows_[l];
  return std::binary_search(w.begin(), w.end(), v);
}

int DiciPartition::pair_owner(int i, int j) const {
  for (int l = 0; l < num_windows(); ++l)
    if (window_contains(l, i) && window_contains(l, j)) return l;
  return -1;
}

namespace {

// P_gamma row entries for the banded iterate: P(i,i) = 1 - gamma, off-band
// zero, otherwise -gamma * z_ik / z_ii.
inline double p_entry(const BandProfile& Z, double gamma, int i, int k) {
  if (i == k) return 1.0 - gamma;
  if (!Z.in_band(i, k)) return 0.0;
  const double z = Z.at(i, k);
  return z == 0.0 ? 0.0 : -gamma * z / Z.at(i, i);
}

// Symmetrized JOR row update of one in-band entry from the previous band
// state (off-band reads resolved by the collapse evaluator).
double iterate_entry(const BandProfile& Z, const BandProfile& S, CollapseEvaluator& eval,
                     double gamma, int i, int j, long long* flops) {
  const int n = Z.dim();
  const int L = Z.half_width();
  double up = 0.0;
  for (int k = std::max(0, i - L); k <= std::min(n - 1, i + L); ++k) {
    const double p = p_entry(Z, gamma, i, k);
    if (p != 0.0) up += p * (S.in_band(k, j) ? S.at(k, j) : eval.value(k, j));
  }
  double v;
  if (i == j) {
    v = up + gamma / Z.at(i, i);
  } else {
    double down = 0.0;
    for (int k = std::max(0, j - L); k <= std::min(n - 1, j + L); ++k) {
      const double p = p_entry(Z, gamma, j, k);
      if (p != 0.0) down += p * (S.in_band(k, i) ? S.at(k, i) : eval.value(k, i));
    }
    v = 0.5 * (up + down);
  }
  if (flops) *flops += 4LL * (2 * L + 1) + 2;
  return v;
}

}  // namespace

BandProfile dici_initial_band(const BandProfile& Z_band, const DiciPartition& part) {
  const int n = Z_band.dim();
  const int L = Z_band.half_width();
  BandProfile S0(n, L);
  std::vector<Eigen::MatrixXd> wins(part.num_windows());
  for (int l = 0; l < part.num_windows(); ++l) {
    const auto& w = part.window(l);
    const int m = static_cast<int>(w.size());
    Eigen::MatrixXd Zl(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) Zl(a, b) = Z_band.get(w[a], w[b]);
    Eigen::LLT<Eigen::MatrixXd> llt(Zl);
    if (llt.info() != Eigen::Success)
      throw SingularWindowError(l, "dici initial condition: local Z window not SPD");
    wins[l] = llt.solve(Eigen::MatrixXd::Identity(m, m));
  }
  for (int l = 0; l < part.num_windows(); ++l) {
    const auto& w = part.window(l);
    for (const auto& [i, j] : part.owned_pairs(l)) {
      const int a = static_cast<int>(std::lower_bound(w.begin(), w.end(), i) - w.begin());
      const int b = static_cast<int>(std::lower_bound(w.begin(), w.end(), j) - w.begin());
      S0.at(i, j) = wins[l](a, b);
    }
  }
  return S0;
}

DiciResult dici_or_band_inverse(const BandProfile& Z_band, const DiciPartition& partition,
                                const DiciOptions& options) {
  const int n = Z_band.dim();
  const int L = Z_band.half_width();
  const double gamma = options.jor.gamma;
  if (gamma <= 0.0) throw ConfigError("dici: gamma must be positive");
  for (int i = 0; i < n; ++i)
    if (Z_band.at(i, i) <= 0.0) throw Error("dici: Z has a non-positive diagonal");

  DiciResult out;
  out.S = dici_initial_band(Z_band, partition);
  out.sensor_flops.assign(partition.num_windows(), 0);

  const int N = partition.num_windows();
  BandProfile next(n, L);
  int below = 0;
  int round = 0;
  if (options.reference)
    out.error_norms.push_back(spectral_norm_sym(collapse_complete(out.S) - *options.reference));

  while (true) {
    const bool budget_mode = options.fixed_rounds >= 0;
    if (budget_mode && round >= options.fixed_rounds) {
      out.converged = true;
      break;
    }
    if (!budget_mode && round >= options.jor.max_iter)
      throw ConvergenceError("dici_or_band_inverse: max_iter reached", out.residual);

    double delta = 0.0;
    if (options.count_flops || options.recompute_all_owners) {
      // Accounting path: per-sensor evaluators, owners recompute, exact flops.
      std::vector<double> deltas(N, 0.0);
      std::vector<BandProfile> shadow;
      if (options.recompute_all_owners) shadow.assign(N, next);
#pragma omp parallel for schedule(dynamic) if (use_openmp(options.exec))
      for (int l = 0; l < N; ++l) {
        CollapseEvaluator eval(out.S);
        long long f0 = eval.flops();
        for (const auto& [i, j] : partition.owned_pairs(l)) {
          const double v = iterate_entry(Z_band, out.S, eval, gamma, i, j, &out.sensor_flops[l]);
          next.at(i, j) = v;
          deltas[l] = std::max(deltas[l], std::abs(v - out.S.at(i, j)));
        }
        if (options.recompute_all_owners) {
          // Every co-owner recomputes its window's in-band pairs; shared
          // values must agree bit-for-bit.
          const auto& w = partition.window(l);
          for (int a : w)
            for (int b : w)
              if (a <= b && Z_band.in_band(a, b))
                shadow[l].at(a, b) = iterate_entry(Z_band, out.S, eval, gamma, a, b, nullptr);
        }
        out.sensor_flops[l] += eval.flops() - f0;
      }
      for (int l = 0; l < N; ++l) delta = std::max(delta, deltas[l]);
      if (options.recompute_all_owners) {
        for (int l = 0; l < N; ++l) {
          const auto& w = partition.window(l);
          for (int a : w)
            for (int b : w)
              if (a <= b && Z_band.in_band(a, b))
                out.max_shared_entry_gap = std::max(
                    out.max_shared_entry_gap, std::abs(shadow[l].at(a, b) - next.at(a, b)));
        }
      }
    } else {
      // Fast path: one shared evaluator, each entry computed by its owner.
      CollapseEvaluator eval(out.S);
      for (int l = 0; l < N; ++l)
        for (const auto& [i, j] : partition.owned_pairs(l)) {
          const double v = iterate_entry(Z_band, out.S, eval, gamma, i, j, nullptr);
          next.at(i, j) = v;
          delta = std::max(delta, std::abs(v - out.S.at(i, j)));
        }
    }

    if (options.network) {
      for (int l = 0; l < N; ++l)
        for (const auto& [owner, count] : partition.halo_by_owner(l))
          options.network->record_bulk(owner, l, Phase::dici_matrix, 1, count);
    }

    std::swap(out.S, next);
    ++round;
    out.residual = delta;
    if (options.reference)
      out.error_norms.push_back(spectral_norm_sym(collapse_complete(out.S) - *options.reference));
    if (options.fixed_rounds < 0) {
      below = delta < options.jor.tol ? below + 1 : 0;
      if (below >= options.jor.stop_window) {
        out.converged = true;
        break;
      }
    }
  }
  out.iterations = round;
  return out;
}

DiciVectorResult dici_solve_vector(const BandProfile& Z_band, const DiciPartition& partition,
                                   const Eigen::Ref<const Eigen::VectorXd>& z,
                                   const DiciOptions& options) {
  const int n = Z_band.dim();
  const int L = Z_band.half_width();
  const double gamma = options.jor.gamma;

  DiciVectorResult out;
  Eigen::VectorXd diag(n);
  for (int i = 0; i < n; ++i) diag(i) = Z_band.at(i, i);
  out.x = z.cwiseQuotient(diag);  // x_0 = M^{-1} z

  Eigen::VectorXd next(n);
  int below = 0;
  while (true) {
    const bool budget_mode = options.fixed_rounds >= 0;
    if (budget_mode && out.iterations >= options.fixed_rounds) {
      out.converged = true;
      break;
    }
    if (!budget_mode && out.iterations >= options.jor.max_iter)
      throw ConvergenceError("dici_solve_vector: max_iter reached", out.residual);

    for (int i = 0; i < n; ++i) {
      double acc = gamma * z(i) / diag(i);
      for (int k = std::max(0, i - L); k <= std::min(n - 1, i + L); ++k) {
        const double p = p_entry(Z_band, gamma, i, k);
        if (p != 0.0) acc += p * out.x(k);
      }
      next(i) = acc;
    }
    if (options.network) {
      // Each sensor pulls the halo states of its own entries from their
      // owners: at most 2L values per boundary.
      for (int l = 0; l < partition.num_windows(); ++l) {
        const auto& w = partition.window(l);
        if (w.empty()) continue;
        std::vector<long long> from(partition.num_windows(), 0);
        for (int i = std::max(0, w.front() - L); i <= std::min(n - 1, w.back() + L); ++i)
          if (!partition.window_contains(l, i)) from[partition.state_owner(i)] += 1;
        for (int m = 0; m < partition.num_windows(); ++m)
          if (m != l && from[m] > 0)
            options.network->record_bulk(m, l, Phase::dici_vector, 1, from[m]);
      }
    }
    out.residual = (next - out.x).cwiseAbs().maxCoeff();
    out.x.swap(next);
    ++out.iterations;
    if (options.fixed_rounds < 0) {
      below = out.residual < options.jor.tol ? below + 1 : 0;
      if (below >= options.jor.stop_window) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

Eigen::MatrixXd random_spd(int n, Rng& rng) {
  Eigen::MatrixXd X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = rng.normal();
  Eigen::MatrixXd sym = X + X.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd lam(n);
  for (int i = 0; i < n; ++i) lam(i) = rng.uniform_pos() * 10.0;  // Uniform(0, 10]
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd random_spd_unit_diag(int n, Rng& rng) {
  const Eigen::MatrixXd A = random_spd(n, rng);
  const Eigen::VectorXd d = A.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * A * d.asDiagonal();
}

BandProfile random_banded_spd(int n, int L, Rng& rng) {
  BandProfile Z(n, L);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j <= std::min(n - 1, i + L); ++j) Z.at(i, j) = rng.normal();
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = std::max(0, i - L); j <= std::min(n - 1, i + L); ++j)
      if (j != i) row += std::abs(Z.at(i, j));
    Z.at(i, i) = row + rng.uniform(0.5, 2.0);  // strict diagonal dominance
  }
  return Z;
}

ContractionTrial contraction_trial(int n, Rng& rng, double gamma) {
  ContractionTrial out;
  for (;;) {
    const int L = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n / 2)));
    out.band = L;
    try {
      const BandProfile Zb = random_banded_spd(n, L, rng);
      Eigen::VectorXd diag(n);
      for (int i = 0; i < n; ++i) diag(i) = Zb.at(i, i);

      const Eigen::MatrixXd X = random_spd(n, rng);
      const Eigen::MatrixXd Y = random_spd(n, rng);
      const double denom = spectral_norm_sym(X - Y);
      if (denom == 0.0) {
        ++out.resamples;
        continue;
      }

      auto apply = [&](const Eigen::MatrixXd& A) {
        Eigen::MatrixXd W(n, n);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = std::max(0, i - L); k <= std::min(n - 1, i + L); ++k) {
              const double p = p_entry(Zb, gamma, i, k);
              if (p != 0.0) acc += p * A(k, j);
            }
            W(i, j) = acc;
          }
          W(i, i) += gamma / diag(i);
        }
        Eigen::MatrixXd sym = 0.5 * (W + W.transpose());
        return collapse_complete(band_project(sym, L));
      };

      out.alpha = spectral_norm_sym(apply(X) - apply(Y)) / denom;
      return out;
    } catch (const CollapsePivotError&) {
      ++out.resamples;  // iterate left the SPD domain; draw a fresh trial
    } catch (const SingularWindowError&) {
      ++out.resamples;
    }
  }
}

namespace {

std::vector<std::vector<int>> contiguous_windows(int n, int L, int num_windows) {
  // Overlapping contiguous spans; consecutive starts differ by at most
  // span - L so every in-band pair is covered.
  const int span = std::max(2 * L + 1, (n + num_windows - 1) / num_windows + L);
  std::vector<std::vector<int>> wins;
  for (int w = 0; w < num_windows; ++w) {
    int start = num_windows == 1
                    ? 0
                    : static_cast<int>(std::llround(double(w) * (n - span) / (num_windows - 1)));
    start = std::clamp(start, 0, std::max(0, n - span));
    std::vector<int> idx(std::min(span, n));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = start + static_cast<int>(k);
    wins.push_back(std::move(idx));
  }
  return wins;
}

}  // namespace

ErrorBoundCurves error_bound_experiment(int n, int L, int num_windows, int trials,
                                        int iterations, double gamma, std::uint64_t seed,
                                        ErrorBoundInit init) {
  ErrorBoundCurves out;
  out.max_diff.assign(iterations, -1e300);
  out.min_diff.assign(iterations, 1e300);
  out.mean_diff.assign(iterations, 0.0);

  std::vector<std::vector<double>> diffs(static_cast<std::size_t>(trials));
  std::vector<double> jor_final(trials, 0.0), dici_final(trials, 0.0);
#pragma omp parallel for schedule(dynamic) if (use_openmp(default_exec()))
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::fork(seed, 0xebu, t);
    const BandProfile Zb = random_banded_spd(n, L, rng);
    const Eigen::MatrixXd Z = Zb.dense();
    const Eigen::MatrixXd S_true = Z.llt().solve(Eigen::MatrixXd::Identity(n, n));

    DiciPartition part(contiguous_windows(n, L, num_windows), n, L);
    DiciOptions dopt;
    dopt.jor.gamma = gamma;
    dopt.fixed_rounds = iterations;
    dopt.reference = &S_true;
    dopt.exec = Exec::serial;
    const DiciResult dici = dici_or_band_inverse(Zb, part, dopt);

    // Each JOR step is followed by the same symmetrization the band iterate
    // applies.
    const Eigen::VectorXd Minv = Z.diagonal().cwiseInverse();
    Eigen::MatrixXd S = init == ErrorBoundInit::matched
                            ? collapse_complete(dici_initial_band(Zb, part))
                            : Eigen::MatrixXd(Minv.asDiagonal());
    std::vector<double> jor_norms{spectral_norm_sym(S - S_true)};
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) - gamma * Minv.asDiagonal() * Z;
    const Eigen::VectorXd gMinv = gamma * Minv;
    Eigen::MatrixXd next(n, n);
    for (int it = 0; it < iterations; ++it) {
      jor_step(P, gMinv, S, next, Exec::serial);
      S = 0.5 * (next + next.transpose());
      jor_norms.push_back(spectral_norm_sym(S - S_true));
    }

    std::vector<double> d(iterations);
    for (int it = 1; it <= iterations; ++it) d[it - 1] = jor_norms[it] - dici.error_norms[it];
    diffs[t] = std::move(d);
    jor_final[t] = jor_norms.back();
    dici_final[t] = dici.error_norms.back();
  }

  out.jor_final = std::move(jor_final);
  out.dici_final = std::move(dici_final);
  for (int t = 0; t < trials; ++t)
    for (int it = 0; it < iterations; ++it) {
      out.max_diff[it] = std::max(out.max_diff[it], diffs[t][it]);
      out.min_diff[it] = std::min(out.min_diff[it], diffs[t][it]);
      out.mean_diff[it] += diffs[t][it] / trials;
    }
  return out;
}

}  // namespace dkf
