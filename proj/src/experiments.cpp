#include "dkf/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "dkf/csv.hpp"
#include "dkf/dici.hpp"

namespace dkf {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {
constexpr const char* kVersion = "dkf-0.1.0";

std::string write_file(const std::string& dir, const std::string& name,
                       const std::string& content) {
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / name).string();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
  return path;
}
}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["filter"] = filter;
  j["model_file"] = model_file;
  j["model_type"] = model_type;
  j["out_dir"] = out_dir;
  j["n"] = n;
  j["num_sensors"] = num_sensors;
  j["band"] = band;
  j["density"] = density;
  j["obs_span"] = obs_span;
  j["q"] = q;
  j["r"] = r;
  j["s0"] = s0;
  j["grid_rows"] = grid_rows;
  j["grid_cols"] = grid_cols;
  j["mu"] = mu;
  j["beta_h"] = beta_h;
  j["beta_v"] = beta_v;
  j["dt"] = dt;
  j["L_values"] = L_values;
  j["gamma"] = gamma;
  j["trials"] = trials;
  j["k_max"] = k_max;
  j["seed"] = seed;
  j["consensus_tol"] = consensus_tol;
  j["consensus_max_iter"] = consensus_max_iter;
  j["dici_tol"] = dici_tol;
  j["dici_max_iter"] = dici_max_iter;
  j["stop_window"] = stop_window;
  j["dici_budgets"] = dici_budgets;
  j["bins"] = bins;
  j["eb_n"] = eb_n;
  j["eb_L"] = eb_L;
  j["eb_windows"] = eb_windows;
  j["eb_iterations"] = eb_iterations;
  j["eb_matched_init"] = eb_matched_init;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("experiment", c.experiment);
  get("filter", c.filter);
  get("model_file", c.model_file);
  get("model_type", c.model_type);
  get("out_dir", c.out_dir);
  get("n", c.n);
  get("num_sensors", c.num_sensors);
  get("band", c.band);
  get("density", c.density);
  get("obs_span", c.obs_span);
  get("q", c.q);
  get("r", c.r);
  get("s0", c.s0);
  get("grid_rows", c.grid_rows);
  get("grid_cols", c.grid_cols);
  get("mu", c.mu);
  get("beta_h", c.beta_h);
  get("beta_v", c.beta_v);
  get("dt", c.dt);
  get("L_values", c.L_values);
  get("gamma", c.gamma);
  get("trials", c.trials);
  get("k_max", c.k_max);
  get("seed", c.seed);
  get("consensus_tol", c.consensus_tol);
  get("consensus_max_iter", c.consensus_max_iter);
  get("dici_tol", c.dici_tol);
  get("dici_max_iter", c.dici_max_iter);
  get("stop_window", c.stop_window);
  get("dici_budgets", c.dici_budgets);
  get("bins", c.bins);
  get("eb_n", c.eb_n);
  get("eb_L", c.eb_L);
  get("eb_windows", c.eb_windows);
  get("eb_iterations", c.eb_iterations);
  get("eb_matched_init", c.eb_matched_init);
  return c;
}

std::string ExperimentConfig::metadata() const {
  std::ostringstream os;
  os << "config_hash=" << std::hex << fnv1a(to_json()) << std::dec << " seed=" << seed
     << " version=" << kVersion;
  return os.str();
}

GlobalModel make_experiment_model(const ExperimentConfig& cfg) {
  if (!cfg.model_file.empty()) {
    std::ifstream in(cfg.model_file);
    if (!in) throw ConfigError("cannot open model file " + cfg.model_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_model(ss.str());
  }
  if (cfg.model_type == "elliptic") {
    EllipticSpec es;
    es.grid_rows = cfg.grid_rows;
    es.grid_cols = cfg.grid_cols;
    es.mu = cfg.mu;
    es.beta_h = cfg.beta_h;
    es.beta_v = cfg.beta_v;
    es.dt = cfg.dt;
    const int n = cfg.grid_rows * cfg.grid_cols;
    for (int s = 0; s < n; s += std::max(1, n / 8)) es.noise_sites.push_back(s);
    es.noise_var = cfg.q;
    GlobalModel m = build_elliptic_model(es);
    // Attach one observation row per sensor over an overlapping span.
    RandomModelSpec rs;
    rs.n = n;
    rs.num_sensors = cfg.num_sensors;
    rs.obs_span = cfg.obs_span;
    rs.seed = cfg.seed;
    Rng rng = Rng::fork(cfg.seed, 0x0bu);
    const int span = std::min(cfg.obs_span, n);
    std::vector<Eigen::Triplet<double>> ht;
    for (int l = 0; l < cfg.num_sensors; ++l) {
      int start = cfg.num_sensors == 1 ? 0
                                       : static_cast<int>(std::llround(
                                             double(l) * (n - span) / (cfg.num_sensors - 1)));
      start = std::clamp(start, 0, n - span);
      for (int c = start; c < start + span; ++c) ht.emplace_back(l, c, rng.normal());
      m.sensor_rows.emplace_back(l, l + 1);
    }
    m.p = cfg.num_sensors;
    m.H.resize(m.p, n);
    m.H.setFromTriplets(ht.begin(), ht.end());
    m.R = cfg.r * Eigen::MatrixXd::Identity(m.p, m.p);
    m.S0 = cfg.s0 * Eigen::MatrixXd::Identity(n, n);
    m.validate();
    return m;
  }
  RandomModelSpec rs;
  rs.n = cfg.n;
  rs.num_sensors = cfg.num_sensors;
  rs.band = cfg.band;
  rs.density = cfg.density;
  rs.q = cfg.q;
  rs.r = cfg.r;
  rs.s0 = cfg.s0;
  rs.obs_span = cfg.obs_span;
  rs.seed = cfg.seed;
  if (cfg.model_type == "random_rcm") {
    // Sparse pattern scattered over the full matrix, then reordered.
    rs.band = cfg.n - 1;
    rs.density = cfg.density * cfg.band / cfg.n;
    GlobalModel m = build_random_model(rs);
    return bandwidth_reduce(m).first;
  }
  return build_random_model(rs);
}

LifConfig make_lif_config(const ExperimentConfig& cfg, int L, int budget) {
  LifConfig lc;
  lc.L = std::min(L, cfg.n - 1);
  lc.consensus.tol = cfg.consensus_tol;
  lc.consensus.max_iter = cfg.consensus_max_iter;
  lc.dici.gamma = cfg.gamma;
  lc.dici.tol = cfg.dici_tol;
  lc.dici.max_iter = cfg.dici_max_iter;
  lc.dici.stop_window = cfg.stop_window;
  lc.dici_budget = budget;
  return lc;
}

namespace {

// Gain-schedule form of the centralized filters: the covariance pipeline is
// data independent, so trials only propagate estimates.
struct GainSchedule {
  std::vector<Eigen::MatrixXd> A;  // xhat_filt = A_k xhat_prev_filt + B_k y_k
  std::vector<Eigen::MatrixXd> B;
  std::vector<double> trace;
};

GainSchedule cif_schedule(const GlobalModel& model, int k_max) {
  GainSchedule g;
  CifState s = cif_init(model);
  const Eigen::MatrixXd Hd(model.H);
  const Eigen::MatrixXd Fd(model.F);
  const Eigen::MatrixXd HtRinv = Hd.transpose() * model.R.llt().solve(Eigen::MatrixXd::Identity(model.p, model.p));
  for (int k = 0; k < k_max; ++k) {
    const Eigen::MatrixXd Z_pred = s.Z;
    cif_filter(s, model, Eigen::VectorXd::Zero(model.p));
    const Eigen::MatrixXd S_filt = cif_covariance(s);
    g.A.push_back(S_filt * Z_pred * Fd);
    g.B.push_back(S_filt * HtRinv);
    g.trace.push_back(S_filt.trace());
    cif_predict(s, model);
  }
  return g;
}

GainSchedule clbif_schedule(const GlobalModel& model, int L, int k_max) {
  GainSchedule g;
  ClbifState s = clbif_init(model, L);
  const Eigen::MatrixXd Hd(model.H);
  const Eigen::MatrixXd Fd(model.F);
  const Eigen::MatrixXd HtRinv = Hd.transpose() * model.R.llt().solve(Eigen::MatrixXd::Identity(model.p, model.p));
  for (int k = 0; k < k_max; ++k) {
    const Eigen::MatrixXd Z_pred = s.Z.dense();
    clbif_filter(s, model, Eigen::VectorXd::Zero(model.p));
    const Eigen::MatrixXd S_filt = clbif_covariance(s);
    g.A.push_back(S_filt * Z_pred * Fd);
    g.B.push_back(S_filt * HtRinv);
    g.trace.push_back(S_filt.trace());
    clbif_predict(s, model);
  }
  return g;
}

std::vector<double> gain_schedule_mse(const GlobalModel& model, const GainSchedule& g,
                                      int trials, std::uint64_t seed) {
  const int k_max = static_cast<int>(g.A.size());
  // Per-trial results are reduced in trial order so reruns are byte-identical
  // regardless of scheduling.
  std::vector<std::vector<double>> per_trial(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(dynamic) if (use_openmp(default_exec()))
  for (int t = 0; t < trials; ++t) {
    const Trajectory traj = simulate(model, k_max, Rng::fork(seed, 0x7au, t).next_u64());
    Eigen::VectorXd xf = Eigen::VectorXd::Zero(model.n);
    std::vector<double> local(k_max);
    for (int k = 0; k < k_max; ++k) {
      xf = (g.A[k] * xf + g.B[k] * traj.observations[k]).eval();
      local[k] = (traj.states[k] - xf).squaredNorm();
    }
    per_trial[t] = std::move(local);
  }
  std::vector<double> mse(k_max, 0.0);
  for (int t = 0; t < trials; ++t)
    for (int k = 0; k < k_max; ++k) mse[k] += per_trial[t][k] / trials;
  return mse;
}

}  // namespace

TraceCurves run_cif_traces(const GlobalModel& model, int k_max, int trials, std::uint64_t seed) {
  TraceCurves out;
  const GainSchedule g = cif_schedule(model, k_max);
  out.internal_trace = g.trace;
  out.mse = gain_schedule_mse(model, g, trials, seed);
  out.riccati = riccati_trace(model);
  return out;
}

TraceCurves run_clbif_traces(const GlobalModel& model, int L, int k_max, int trials,
                             std::uint64_t seed) {
  TraceCurves out;
  const GainSchedule g = clbif_schedule(model, L, k_max);
  out.internal_trace = g.trace;
  out.mse = gain_schedule_mse(model, g, trials, seed);
  out.riccati = riccati_trace(model);
  return out;
}

TraceCurves run_lif_traces(const GlobalModel& model, const ExperimentConfig& cfg, int L,
                           int budget) {
  TraceCurves out;
  LifSetup setup = make_lif_setup(model, std::min(L, model.n - 1));
  LifConfig lc = make_lif_config(cfg, L, budget);
  LifRunner runner(model, setup.subsystems, setup.topology, lc);
  const LifSchedule sched = runner.run_covariance_schedule(cfg.k_max);
  out.internal_trace = sched.trace_filt;
  out.diag = sched.diag;

  out.mse.assign(cfg.k_max, 0.0);
  for (int t = 0; t < cfg.trials; ++t) {
    const Trajectory traj =
        simulate(model, cfg.k_max, Rng::fork(cfg.seed, 0x7au, t).next_u64());
    const auto estimates = runner.run_trial(sched, traj);
    for (int k = 0; k < cfg.k_max; ++k)
      out.mse[k] += (traj.states[k] - estimates[k]).squaredNorm() / cfg.trials;
  }
  out.riccati = riccati_trace(model);
  return out;
}

ContractionSummary run_contraction_experiment(int n, int trials, double gamma,
                                              std::uint64_t seed) {
  ContractionSummary out;
  out.alphas.assign(trials, 0.0);
  long long resamples = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : resamples) \
    if (use_openmp(default_exec()))
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::fork(seed, 0xc0u, t);
    const ContractionTrial trial = contraction_trial(n, rng, gamma);
    out.alphas[t] = trial.alpha;
    resamples += trial.resamples;
  }
  out.resamples = resamples;
  for (double a : out.alphas) {
    out.max_alpha = std::max(out.max_alpha, a);
    out.min_alpha = std::min(out.min_alpha, a);
  }
  return out;
}

double steady_state(const std::vector<double>& curve) {
  if (curve.empty()) return 0.0;
  const std::size_t from = curve.size() - std::max<std::size_t>(1, curve.size() / 4);
  double acc = 0.0;
  for (std::size_t k = from; k < curve.size(); ++k) acc += curve[k];
  return acc / static_cast<double>(curve.size() - from);
}

std::vector<std::string> cmd_generate(const ExperimentConfig& cfg) {
  const GlobalModel model = make_experiment_model(cfg);
  std::vector<std::string> files;
  files.push_back(write_file(cfg.out_dir, "model.json", save_model(model)));
  files.push_back(write_file(cfg.out_dir, "config.json", cfg.to_json()));
  const int L = cfg.L_values.empty() ? 1 : cfg.L_values.front();
  const LifSetup setup = make_lif_setup(model, std::min(L, model.n - 1));
  files.push_back(write_file(cfg.out_dir, "decomposition.txt",
                             decomposition_report(setup.subsystems, setup.topology.comm)));
  files.push_back(write_file(cfg.out_dir, "fusion_edges.csv", fusion_edges_csv(setup.topology)));
  return files;
}

std::vector<std::string> cmd_decompose(const ExperimentConfig& cfg) {
  const GlobalModel model = make_experiment_model(cfg);
  const int L = cfg.L_values.empty() ? 1 : cfg.L_values.front();
  const LifSetup setup = make_lif_setup(model, std::min(L, model.n - 1));
  std::vector<std::string> files;
  files.push_back(write_file(cfg.out_dir, "decomposition.txt",
                             decomposition_report(setup.subsystems, setup.topology.comm)));
  files.push_back(write_file(cfg.out_dir, "fusion_edges.csv", fusion_edges_csv(setup.topology)));
  return files;
}

namespace {

std::string trace_csv(const ExperimentConfig& cfg, const TraceCurves& c, bool lif_diag) {
  std::ostringstream os;
  os << "# " << cfg.metadata() << " riccati=" << CsvWriter::format(c.riccati) << "\n";
  os << "k,trace_internal,trace_mc";
  if (lif_diag) os << ",consensus_iters,dici_iters";
  os << '\n';
  for (std::size_t k = 0; k < c.internal_trace.size(); ++k) {
    os << k << ',' << CsvWriter::format(c.internal_trace[k]) << ','
       << CsvWriter::format(k < c.mse.size() ? c.mse[k] : 0.0);
    if (lif_diag)
      os << ',' << (k < c.diag.size() ? c.diag[k].consensus_iters : 0) << ','
         << (k < c.diag.size() ? c.diag[k].dici_matrix_iters : 0);
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::vector<std::string> cmd_run(const ExperimentConfig& cfg) {
  const GlobalModel model = make_experiment_model(cfg);
  std::vector<std::string> files;
  for (int L : cfg.L_values) {
    const int Lc = std::min(L, model.n - 1);
    TraceCurves curves;
    bool lif = false;
    if (cfg.filter == "cif") {
      curves = run_cif_traces(model, cfg.k_max, cfg.trials, cfg.seed);
    } else if (cfg.filter == "clbif") {
      curves = run_clbif_traces(model, Lc, cfg.k_max, cfg.trials, cfg.seed);
    } else if (cfg.filter == "lif") {
      curves = run_lif_traces(model, cfg, Lc);
      lif = true;
    } else {
      throw ConfigError("unknown filter: " + cfg.filter);
    }
    for (std::size_t k = 0; k < curves.internal_trace.size(); ++k)
      if (!std::isfinite(curves.internal_trace[k]) || curves.internal_trace[k] > 1e12)
        throw ConvergenceError("filter divergence (trace overflow) at step " + std::to_string(k),
                               curves.internal_trace[k]);
    files.push_back(write_file(cfg.out_dir,
                               cfg.filter + "_L" + std::to_string(Lc) + "_trace.csv",
                               trace_csv(cfg, curves, lif)));
  }
  return files;
}

std::vector<std::string> cmd_exp_contraction(const ExperimentConfig& cfg) {
  const ContractionSummary sum =
      run_contraction_experiment(cfg.n, cfg.trials, cfg.gamma, cfg.seed);
  std::ostringstream alphas;
  alphas << "# " << cfg.metadata() << " max_alpha=" << CsvWriter::format(sum.max_alpha)
         << " min_alpha=" << CsvWriter::format(sum.min_alpha) << " resamples=" << sum.resamples
         << "\nalpha\n";
  for (double a : sum.alphas) alphas << CsvWriter::format(a) << '\n';

  std::vector<long long> hist(cfg.bins, 0);
  for (double a : sum.alphas) {
    int b = static_cast<int>(a * cfg.bins);
    b = std::clamp(b, 0, cfg.bins - 1);
    ++hist[b];
  }
  std::ostringstream hcsv;
  hcsv << "# " << cfg.metadata() << "\nbin_lo,bin_hi,count\n";
  for (int b = 0; b < cfg.bins; ++b)
    hcsv << CsvWriter::format(double(b) / cfg.bins) << ','
         << CsvWriter::format(double(b + 1) / cfg.bins) << ',' << hist[b] << '\n';

  std::vector<std::string> files;
  files.push_back(write_file(cfg.out_dir, "contraction_alpha.csv", alphas.str()));
  files.push_back(write_file(cfg.out_dir, "contraction_hist.csv", hcsv.str()));
  return files;
}

std::vector<std::string> cmd_exp_error_bound(const ExperimentConfig& cfg) {
  const ErrorBoundCurves curves = error_bound_experiment(
      cfg.eb_n, cfg.eb_L, cfg.eb_windows, cfg.trials, cfg.eb_iterations, cfg.gamma, cfg.seed,
      cfg.eb_matched_init ? ErrorBoundInit::matched : ErrorBoundInit::own);
  std::ostringstream os;
  os << "# " << cfg.metadata() << " gamma=" << CsvWriter::format(cfg.gamma) << "\n"
     << "iter,max_diff,min_diff,mean_diff\n";
  for (std::size_t it = 0; it < curves.max_diff.size(); ++it)
    os << (it + 1) << ',' << CsvWriter::format(curves.max_diff[it]) << ','
       << CsvWriter::format(curves.min_diff[it]) << ','
       << CsvWriter::format(curves.mean_diff[it]) << '\n';
  return {write_file(cfg.out_dir, "error_bound.csv", os.str())};
}

std::vector<std::string> cmd_exp_dici_sweep(const ExperimentConfig& cfg) {
  const GlobalModel model = make_experiment_model(cfg);
  const int L = std::min(cfg.L_values.empty() ? 20 : cfg.L_values.front(), model.n - 1);

  std::vector<std::string> files;
  std::ostringstream sum;
  sum << "# " << cfg.metadata() << "\nbudget,steady_internal,steady_mc\n";
  for (int t : cfg.dici_budgets) {
    const TraceCurves curves = run_lif_traces(model, cfg, L, t);
    files.push_back(write_file(cfg.out_dir, "dici_sweep_t" + std::to_string(t) + ".csv",
                               trace_csv(cfg, curves, true)));
    sum << t << ',' << CsvWriter::format(steady_state(curves.internal_trace)) << ','
        << CsvWriter::format(steady_state(curves.mse)) << '\n';
  }

  // Reference curves: direct banded inverse (CLBIF) and the exact CIF.
  const TraceCurves clbif = run_clbif_traces(model, L, cfg.k_max, cfg.trials, cfg.seed);
  files.push_back(
      write_file(cfg.out_dir, "dici_sweep_direct.csv", trace_csv(cfg, clbif, false)));
  const TraceCurves cif = run_cif_traces(model, cfg.k_max, cfg.trials, cfg.seed);
  files.push_back(write_file(cfg.out_dir, "dici_sweep_cif.csv", trace_csv(cfg, cif, false)));
  sum << "direct," << CsvWriter::format(steady_state(clbif.internal_trace)) << ','
      << CsvWriter::format(steady_state(clbif.mse)) << '\n';
  sum << "riccati," << CsvWriter::format(cif.riccati) << ','
      << CsvWriter::format(cif.riccati) << '\n';
  files.push_back(write_file(cfg.out_dir, "dici_sweep_summary.csv", sum.str()));
  return files;
}

}  // namespace dkf
