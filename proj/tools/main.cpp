#include <kflearn/bounds.hpp>
#include <kflearn/experiments.hpp>
#include <kflearn/filtering.hpp>
#include <kflearn/io.hpp>
#include <kflearn/lti.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace kflearn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitWarning = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out_dir = ".";
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : read_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

fs::path out_path(const Globals& g, const std::string& explicit_path, const char* name) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(g.out_dir) / name;
}

void print_pairs(const std::vector<std::pair<std::string, double>>& kv, const char* indent) {
  for (const auto& [k, v] : kv) std::printf("%s%-18s %.10g\n", indent, k.c_str(), v);
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string model, out;
  Index samples = 1000;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const ExperimentConfig cfg = load_config(g);
  const Model model = a.model.empty() ? cfg.model : read_model(a.model);
  if (a.samples < 1) throw ConfigError("--samples must be >= 1");
  const Trajectory traj = simulate(model, a.samples, cfg.seed);
  const fs::path out = out_path(g, a.out, "trajectory.csv");
  write_trajectory_csv(out, traj);
  std::printf("wrote %lld samples (seed %llu) to %s\n", static_cast<long long>(a.samples),
              static_cast<unsigned long long>(cfg.seed), out.c_str());
  return kExitOk;
}

// identify ------------------------------------------------------------------

struct IdentifyArgs {
  std::string data, true_model, out;
  std::optional<int> order, past, future;
  std::string weighting;
};

int run_identify(const Globals& g, const IdentifyArgs& a) {
  ExperimentConfig cfg = load_config(g);
  if (a.past) cfg.hankel.past = *a.past;
  if (a.future) cfg.hankel.future = *a.future;
  if (a.order) cfg.order = *a.order;
  if (!a.weighting.empty()) cfg.hankel.weighting = parse_weighting(a.weighting);
  cfg.hankel.validate();

  const Trajectory traj = read_trajectory_csv(a.data);
  const IdentResult ident = identify(traj, cfg.hankel, cfg.order);
  const Model model_hat = ident.model();

  std::vector<std::pair<std::string, double>> extras = {
      {"columns", static_cast<double>(ident.columns)},
      {"rho_a_hat", spectral_radius(model_hat.A)},
      {"rho_k_hat", spectral_radius(model_hat.closed_loop())},
      {"largest_gap_index", static_cast<double>(largest_singular_gap(ident.singular_values))}};
  if (!a.true_model.empty()) {
    const Model truth = read_model(a.true_model);
    const TrueHankel th = true_hankel(truth, cfg.hankel);
    extras.emplace_back("hankel_error", spectral_norm(ident.G_hat - th.G));
    const BasisAlignment al = align_basis(truth, ident.O_hat, cfg.hankel.future);
    const Model aligned = to_reference_basis(model_hat, al);
    extras.emplace_back("eps_a", spectral_norm(aligned.A - truth.A));
    extras.emplace_back("eps_c", spectral_norm(aligned.C - truth.C));
    extras.emplace_back("eps_k", spectral_norm(aligned.K - truth.K));
    extras.emplace_back("eps_r", spectral_norm(aligned.R - truth.R));
    extras.emplace_back("alignment_condition", al.condition);
  }

  const fs::path model_out = out_path(g, a.out, "model_hat.json");
  write_model(model_out, model_hat);
  const fs::path diag_out = model_out.parent_path() / "ident_diagnostics.csv";
  write_ident_diagnostics_csv(diag_out, ident, extras);
  std::printf("identified order-%d model from %lld regression columns\n", ident.n_used,
              static_cast<long long>(ident.columns));
  std::printf("  sigma_n(G W) = %.6g\n", ident.singular_values(ident.n_used - 1));
  print_pairs(extras, "  ");
  std::printf("wrote %s and %s\n", model_out.c_str(), diag_out.c_str());
  return kExitOk;
}

// synthesize ----------------------------------------------------------------

struct SynthesizeArgs {
  std::string model, mode = "ce", terminal, out;
  std::optional<double> creg;
  std::optional<int> horizon;
};

int run_synthesize(const Globals& g, const SynthesizeArgs& a) {
  ExperimentConfig cfg = load_config(g);
  if (a.creg) cfg.creg = *a.creg;
  if (a.horizon) cfg.horizon = *a.horizon;
  if (!a.terminal.empty()) cfg.terminal = parse_terminal(a.terminal);
  const Model model_hat = a.model.empty() ? cfg.model : read_model(a.model);

  FilterFile f;
  f.mode = parse_filter_mode(a.mode);
  if (f.mode == FilterMode::Ce) {
    const CeResult ce = ce_synthesize(model_hat);
    f.spec = FilterSpec::ce(model_hat, ce.L);
    f.diagnostics = {{"closed_loop_rho", ce.closed_loop_rho},
                     {"iterations", static_cast<double>(ce.iterations)},
                     {"trivial_branch", ce.branch == CeBranch::StableTrivial ? 1.0 : 0.0}};
    std::printf("CE filter (%s branch)\n", std::string(to_string(ce.branch)).c_str());
  } else {
    SlsOptions opts;
    opts.terminal = cfg.terminal;
    const SlsResult sls = sls_synthesize(model_hat, cfg.creg, cfg.horizon, opts);
    f.spec = FilterSpec::fir(model_hat, sls.filter.coeffs);
    f.diagnostics = {{"creg", cfg.creg},
                     {"horizon", static_cast<double>(cfg.horizon)},
                     {"objective", sls.filter.objective_value},
                     {"constraint_norm", sls.filter.constraint_norm},
                     {"lambda", sls.lambda},
                     {"constraint_active", sls.constraint_active ? 1.0 : 0.0},
                     {"tail_residual", sls.tail_residual}};
    std::printf("robust FIR filter, T = %d, terminal = %s\n", cfg.horizon,
                std::string(to_string(cfg.terminal)).c_str());
  }
  print_pairs(f.diagnostics, "  ");
  const fs::path out = out_path(g, a.out, "filter.json");
  write_filter(out, f);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

// evaluate ------------------------------------------------------------------

struct EvaluateArgs {
  std::string filter, data, true_model, basis, out;
  std::optional<Index> burn_in;
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  ExperimentConfig cfg = load_config(g);
  if (!a.basis.empty()) cfg.basis = parse_basis(a.basis);
  if (a.burn_in) cfg.burn_in = *a.burn_in;

  const FilterFile f = read_filter(a.filter);
  const Trajectory traj = read_trajectory_csv(a.data);
  if (!traj.has_states()) throw ConfigError("evaluation data needs x_ columns (simulated states)");

  std::optional<BasisAlignment> alignment;
  std::optional<Model> truth;
  if (!a.true_model.empty()) {
    truth = read_model(a.true_model);
    const Matrix O_hat = observability_matrix(f.spec.model_hat.A, f.spec.model_hat.C,
                                              cfg.hankel.future);
    alignment = align_basis(*truth, O_hat, cfg.hankel.future);
  }
  const MseReport rep = empirical_mse(f.spec, traj, alignment, cfg.basis, cfg.burn_in);
  std::printf("%s filter: J~ = %.10g over %lld samples (burn-in %lld, %s basis)\n",
              std::string(to_string(f.mode)).c_str(), rep.j_tilde,
              static_cast<long long>(rep.horizon_used), static_cast<long long>(rep.burn_in),
              std::string(to_string(rep.basis)).c_str());
  if (truth) {
    const Model aligned = to_reference_basis(f.spec.model_hat, *alignment);
    const FirResponse resp = transform_response(filter_response(f.spec), *alignment);
    const AnalyticMse an = analytic_mse(*truth, aligned, resp);
    std::printf("  analytic J = %.10g (tail bound %.3g)\n", an.j_tilde, an.tail_bound);
  }
  const fs::path out = out_path(g, a.out, "mse.csv");
  write_mse_csv(out, rep, to_string(f.mode));
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

// bounds --------------------------------------------------------------------

struct BoundsArgs {
  std::string model, out;
  double eps_a = 0.0, eps_c = 0.0, eps_k = 0.0, eps_r = 0.0;
  std::optional<double> rho, creg;
  std::optional<Index> samples;
  std::optional<int> past, future;
  double delta = 0.05;
};

int run_bounds(const Globals& g, const BoundsArgs& a) {
  ExperimentConfig cfg = load_config(g);
  if (a.creg) cfg.creg = *a.creg;
  if (a.past) cfg.hankel.past = *a.past;
  if (a.future) cfg.hankel.future = *a.future;
  cfg.hankel.validate();
  const Model truth = a.model.empty() ? cfg.model : read_model(a.model);
  truth.validate();
  const ParameterErrors eps{a.eps_a, a.eps_c, a.eps_k, a.eps_r};
  const double rho_kf = spectral_radius(truth.closed_loop());
  const double rho = a.rho ? *a.rho : 0.5 * (rho_kf + 1.0);
  const Index N = a.samples ? *a.samples : cfg.n_grid.back();
  if (!(a.delta > 0.0 && a.delta < 1.0)) throw ConfigError("--delta must lie in (0, 1)");

  std::vector<BoundReport> reports;
  reports.push_back(ce_suboptimality_bound(truth, eps, rho));
  reports.push_back(robust_suboptimality_bound(truth, eps, cfg.creg));
  reports.push_back(regression_error_bound(truth, cfg.hankel, N, a.delta));
  {
    const DeltaN d = delta_n(N, cfg.hankel.past, static_cast<int>(truth.m()));
    BoundReport r;
    r.name = "delta_n";
    r.value = d.value;
    r.inputs = {{"N", static_cast<double>(N)}, {"p", static_cast<double>(cfg.hankel.past)}};
    r.components = {{"log_value", d.log_value}, {"log10_value", d.log10_value}};
    reports.push_back(r);
  }
  for (FilterMode mode : {FilterMode::Ce, FilterMode::Robust}) {
    try {
      reports.push_back(end_to_end_constants(truth, cfg.hankel, mode));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      std::fprintf(stderr, "end-to-end constants (%s): %s\n",
                   std::string(to_string(mode)).c_str(), e.what());
    }
  }
  for (const BoundReport& r : reports) {
    std::printf("%-24s %.10g%s\n", r.name.c_str(), r.value,
                r.condition_satisfied ? "" : "  (condition violated, non-binding)");
    print_pairs(r.components, "    ");
  }
  const fs::path out = out_path(g, a.out, "bounds.csv");
  write_bounds_csv(out, reports);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

// montecarlo ----------------------------------------------------------------

struct MonteCarloArgs {
  std::optional<int> trials;
  std::vector<Index> n_grid;
  std::optional<double> tail_threshold;
  bool perfect_knowledge = false;
};

int run_montecarlo(const Globals& g, const MonteCarloArgs& a) {
  ExperimentConfig cfg = load_config(g);
  if (a.trials) cfg.trials = *a.trials;
  if (!a.n_grid.empty()) cfg.n_grid = a.n_grid;
  if (a.tail_threshold) cfg.tail_threshold = *a.tail_threshold;
  if (a.perfect_knowledge) cfg.perfect_knowledge = true;
  cfg.validate();
  if (g.workers < 1) throw ConfigError("--workers must be >= 1");

  const GridResult grid = run_grid(cfg, g.workers);
  const TailReport tail = tail_analysis(grid.trials, cfg.tail_threshold);

  const fs::path dir = g.out_dir;
  fs::create_directories(dir / "plots");
  write_trials_csv(dir / "trials.csv", grid.trials);
  write_summary_csv(dir / "summary.csv", grid.summary);
  write_tail_csv(dir / "tail.csv", tail);
  {
    std::ofstream out(dir / "config.json");
    out << config_to_json(cfg) << '\n';
  }
  write_error_plot_svg(dir / "plots" / "error_vs_n.svg", grid.summary,
                       "prediction error vs samples");
  write_error_plot_svg(dir / "plots" / "tail_error_vs_n.svg", tail.summary,
                       "prediction error, rho(A^ - L C^) > " + std::to_string(cfg.tail_threshold));

  std::printf("%-8s %-7s %5s %5s %12s %12s %12s %12s\n", "N", "filter", "ok", "fail", "median",
              "p95", "p97.5", "max");
  for (const SummaryRow& r : grid.summary)
    std::printf("%-8lld %-7s %5d %5d %12.5g %12.5g %12.5g %12.5g%s\n",
                static_cast<long long>(r.n_samples), r.filter.c_str(), r.ok, r.failed, r.median,
                r.p95, r.p975, r.max, r.warning ? "  WARNING: failure rate > 50%" : "");
  for (const char* filter : {"ce", "robust"}) {
    try {
      std::printf("median slope (%s): %.4f\n", filter, median_slope(grid.summary, filter));
    } catch (const Error& e) {
      std::printf("median slope (%s): n/a (%s)\n", filter, e.what());
    }
  }
  std::printf("tail (rho > %.3g): %s\n", tail.threshold, tail.message.c_str());
  if (!tail.empty)
    std::printf("  worst CE %.5g (seed %llu), worst robust %.5g (seed %llu), ratio %.4f\n",
                tail.worst_ce, static_cast<unsigned long long>(tail.worst_ce_seed),
                tail.worst_robust, static_cast<unsigned long long>(tail.worst_robust_seed),
                tail.worst_ratio);
  std::printf("wrote %s\n", (dir / "trials.csv").c_str());

  if (grid.failure_warning) {
    std::fprintf(stderr, "warning: failure rate above 50%% for at least one N\n");
    return kExitWarning;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-based Kalman filter synthesis: identification, CE and robust filters"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (overrides config)");
  app.add_option("--workers", g.workers, "worker threads for montecarlo")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.fallthrough();

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "simulate the innovations model");
  s_sim->add_option("--model", sim.model, "model JSON (default: config model)");
  s_sim->add_option("--samples", sim.samples, "trajectory length");
  s_sim->add_option("--out", sim.out, "output CSV");

  IdentifyArgs id;
  auto* s_id = app.add_subcommand("identify", "subspace identification from output data");
  s_id->add_option("--data", id.data, "trajectory CSV")->required()->check(CLI::ExistingFile);
  s_id->add_option("--true-model", id.true_model, "reference model for error diagnostics");
  s_id->add_option("--order", id.order, "model order");
  s_id->add_option("--past", id.past, "past horizon p");
  s_id->add_option("--future", id.future, "future horizon f");
  s_id->add_option("--weighting", id.weighting, "identity | moesp");
  s_id->add_option("--out", id.out, "output model JSON");

  SynthesizeArgs syn;
  auto* s_syn = app.add_subcommand("synthesize", "CE or robust filter from a model");
  s_syn->add_option("--model", syn.model, "estimated model JSON (default: config model)");
  s_syn->add_option("--mode", syn.mode, "ce | robust");
  s_syn->add_option("--creg", syn.creg, "regularization level");
  s_syn->add_option("--horizon", syn.horizon, "FIR length T");
  s_syn->add_option("--terminal", syn.terminal, "fir | free");
  s_syn->add_option("--out", syn.out, "output filter JSON");

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "empirical MSE of a filter on simulated data");
  s_ev->add_option("--filter", ev.filter, "filter JSON")->required()->check(CLI::ExistingFile);
  s_ev->add_option("--data", ev.data, "trajectory CSV with states")->required()->check(CLI::ExistingFile);
  s_ev->add_option("--true-model", ev.true_model, "reference model; aligns the state basis");
  s_ev->add_option("--basis", ev.basis, "original | identified");
  s_ev->add_option("--burn-in", ev.burn_in, "samples discarded before averaging");
  s_ev->add_option("--out", ev.out, "output CSV");

  BoundsArgs bd;
  auto* s_bd = app.add_subcommand("bounds", "suboptimality and identification bounds");
  s_bd->add_option("--model", bd.model, "true model JSON (default: config model)");
  s_bd->add_option("--eps-a", bd.eps_a, "||A^ - A||");
  s_bd->add_option("--eps-c", bd.eps_c, "||C^ - C||");
  s_bd->add_option("--eps-k", bd.eps_k, "||K^ - K||");
  s_bd->add_option("--eps-r", bd.eps_r, "||R^ - R||");
  s_bd->add_option("--rho", bd.rho, "decay rate for the CE bound");
  s_bd->add_option("--creg", bd.creg, "regularization level");
  s_bd->add_option("--n-samples", bd.samples, "N for the regression bound");
  s_bd->add_option("--past", bd.past, "past horizon p");
  s_bd->add_option("--future", bd.future, "future horizon f");
  s_bd->add_option("--delta", bd.delta, "failure probability for the regression bound");
  s_bd->add_option("--out", bd.out, "output CSV");

  MonteCarloArgs mc;
  auto* s_mc = app.add_subcommand("montecarlo", "Monte Carlo grid over sample sizes");
  s_mc->add_option("--trials", mc.trials, "trials per N");
  s_mc->add_option("--n-grid", mc.n_grid, "sample sizes")->delimiter(',');
  s_mc->add_option("--tail-threshold", mc.tail_threshold, "rho(A^ - L C^) threshold");
  s_mc->add_flag("--perfect-knowledge", mc.perfect_knowledge, "skip identification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*s_sim) return run_simulate(g, sim);
    if (*s_id) return run_identify(g, id);
    if (*s_syn) return run_synthesize(g, syn);
    if (*s_ev) return run_evaluate(g, ev);
    if (*s_bd) return run_bounds(g, bd);
    if (*s_mc) return run_montecarlo(g, mc);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
