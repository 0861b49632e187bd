#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dkf/filters.hpp"
#include "dkf/lif.hpp"
#include "dkf/model.hpp"

namespace dkf {

// Settings shared by the CLI subcommands; every field has a matching flag and
// the whole struct round-trips through JSON.
struct ExperimentConfig {
  std::string experiment = "run";
  std::string filter = "lif";  // cif | clbif | lif
  std::string model_file;      // when set, load instead of generating
  std::string model_type = "random";  // random | random_rcm | elliptic
  std::string out_dir = "out";

  // Model generation.
  int n = 100;
  int num_sensors = 10;
  int band = 20;
  double density = 0.25;
  int obs_span = 14;
  double q = 0.01;
  double r = 0.25;
  double s0 = 1.0;
  int grid_rows = 10;
  int grid_cols = 10;
  double mu = -1.0;
  double beta_h = 0.25;
  double beta_v = 0.25;
  double dt = 0.01;

  // Run settings.
  std::vector<int> L_values = {20};
  double gamma = 0.1;
  int trials = 100;
  int k_max = 50;
  std::uint64_t seed = 1;
  double consensus_tol = 1e-10;
  int consensus_max_iter = 100000;
  double dici_tol = 1e-10;
  int dici_max_iter = 100000;
  int stop_window = 1;
  std::vector<int> dici_budgets = {1, 10, 30, 100, 200};

  // Contraction / error-bound experiments.
  int bins = 1000;
  int eb_n = 50;
  int eb_L = 5;
  int eb_windows = 5;
  int eb_iterations = 120;
  bool eb_matched_init = false;  // JOR start: own (paper) vs matched

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  std::string metadata() const;  // config hash + seed + version line
};

GlobalModel make_experiment_model(const ExperimentConfig& cfg);

LifConfig make_lif_config(const ExperimentConfig& cfg, int L, int budget = -1);

// Internal trace plus Monte Carlo mean squared estimation error per step.
struct TraceCurves {
  std::vector<double> internal_trace;  // filter's own tr(S_{k|k})
  std::vector<double> mse;             // mean ||x_k - xhat_{k|k}||^2 over trials
  double riccati = 0.0;                // CIF steady-state benchmark
  std::vector<LifStepDiag> diag;       // LIF only
};

TraceCurves run_cif_traces(const GlobalModel& model, int k_max, int trials, std::uint64_t seed);
TraceCurves run_clbif_traces(const GlobalModel& model, int L, int k_max, int trials,
                             std::uint64_t seed);
TraceCurves run_lif_traces(const GlobalModel& model, const ExperimentConfig& cfg, int L,
                           int budget = -1);

struct ContractionSummary {
  std::vector<double> alphas;
  double max_alpha = 0.0;
  double min_alpha = 1.0;
  long long resamples = 0;
};
ContractionSummary run_contraction_experiment(int n, int trials, double gamma,
                                              std::uint64_t seed);

// Steady-state value of a trace curve: mean over the last quarter of steps.
double steady_state(const std::vector<double>& curve);

// CLI entry points; each writes CSV artifacts into cfg.out_dir and returns
// the list of files written.
std::vector<std::string> cmd_generate(const ExperimentConfig& cfg);
std::vector<std::string> cmd_decompose(const ExperimentConfig& cfg);
std::vector<std::string> cmd_run(const ExperimentConfig& cfg);
std::vector<std::string> cmd_exp_contraction(const ExperimentConfig& cfg);
std::vector<std::string> cmd_exp_error_bound(const ExperimentConfig& cfg);
std::vector<std::string> cmd_exp_dici_sweep(const ExperimentConfig& cfg);

}  // namespace dkf
