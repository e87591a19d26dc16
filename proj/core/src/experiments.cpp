#include <kflearn/experiments.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

namespace kflearn {

Model reference_system() {
  Model m;
  m.A.resize(3, 3);
  m.A << 0.8, 1.0, 0.0,
         0.0, 0.9, 1.0,
         0.0, 0.0, 0.9;
  m.C.resize(1, 3);
  m.C << 1.0, 0.0, 0.0;
  m.K.resize(3, 1);
  m.K << 1.5320, 0.9401, 0.1923;
  m.R.resize(1, 1);
  m.R << 10.6414;
  return m;
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (n_grid.empty()) throw ConfigError("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw ConfigError("n_grid entries must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid must be strictly increasing");
  }
  if (hankel.past < 1 || hankel.future < 2) throw ConfigError("need past >= 1 and future >= 2");
  if (order < 1 || order > model.n() * 10) throw ConfigError("order must be >= 1");
  if (!(creg > 0.0) || !std::isfinite(creg)) throw ConfigError("creg must be positive");
  if (horizon < 2) throw ConfigError("horizon must be >= 2");
  if (eval_horizon < 2) throw ConfigError("eval_horizon must be >= 2");
  if (burn_in && (*burn_in < 0 || *burn_in >= eval_horizon))
    throw ConfigError("burn_in must lie in [0, eval_horizon)");
  if (!std::isfinite(tail_threshold)) throw ConfigError("tail_threshold must be finite");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master, Index samples, int trial) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(samples));
  return splitmix64(h ^ (static_cast<std::uint64_t>(trial) << 1 | 1ULL));
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) + stream);
}

TrialRecord run_trial(const ExperimentConfig& cfg, Index samples, int trial) {
  return run_trial(cfg, samples, trial, trial_seed(cfg.seed, samples, trial));
}

TrialRecord run_trial(const ExperimentConfig& cfg, Index samples, int trial, std::uint64_t seed) {
  TrialRecord rec;
  rec.n_samples = samples;
  rec.trial = trial;
  rec.seed = seed;
  const Model& truth = cfg.model;

  Model model_hat;
  std::optional<BasisAlignment> alignment;
  if (cfg.perfect_knowledge) {
    model_hat = truth;
    const Index n = truth.n();
    alignment = BasisAlignment{Matrix::Identity(n, n), Matrix::Identity(n, n), 1.0};
    rec.rho_a_hat = spectral_radius(truth.A);
    rec.rho_k_hat = spectral_radius(truth.closed_loop());
  } else {
    try {
      const Index length = samples + cfg.hankel.past + cfg.hankel.future - 1;
      const Trajectory data = simulate(truth, length, substream_seed(seed, 1));
      const IdentResult ident = identify(data, cfg.hankel, cfg.order);
      rec.sigma_n_G = ident.singular_values(cfg.order - 1);
      const TrueHankel th = true_hankel(truth, cfg.hankel);
      rec.hankel_error = spectral_norm(ident.G_hat - th.G);
      model_hat = ident.model();
      rec.rho_a_hat = spectral_radius(model_hat.A);
      rec.rho_k_hat = spectral_radius(model_hat.closed_loop());
      alignment = align_basis(truth, ident.O_hat, cfg.hankel.future);
    } catch (const Error& e) {
      rec.ident_status = e.what();
      rec.ce_status = "skipped: identification failed";
      rec.robust_status = "skipped: identification failed";
      return rec;
    }
  }

  const Trajectory eval = simulate(truth, cfg.eval_horizon, substream_seed(seed, 2));

  try {
    const CeResult ce = ce_synthesize(model_hat);
    rec.rho_ce_closed_loop = ce.closed_loop_rho;
    const FilterSpec spec = FilterSpec::ce(model_hat, ce.L);
    rec.j_ce = empirical_mse(spec, eval, alignment, cfg.basis, cfg.burn_in).j_tilde;
    if (!std::isfinite(rec.j_ce)) rec.ce_status = "non-finite prediction error";
  } catch (const Error& e) {
    rec.ce_status = e.what();
  }

  try {
    SlsOptions opts;
    opts.terminal = cfg.terminal;
    const SlsResult sls = sls_synthesize(model_hat, cfg.creg, cfg.horizon, opts);
    rec.robust_objective = sls.filter.objective_value;
    rec.robust_constraint = sls.filter.constraint_norm;
    const FilterSpec spec = FilterSpec::fir(model_hat, sls.filter.coeffs);
    rec.j_robust = empirical_mse(spec, eval, alignment, cfg.basis, cfg.burn_in).j_tilde;
    if (!std::isfinite(rec.j_robust)) rec.robust_status = "non-finite prediction error";
  } catch (const Error& e) {
    rec.robust_status = e.what();
  }
  return rec;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty sample");
  if (!(q > 0.0 && q <= 100.0)) throw Error("percentile rank must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // Guard against q/100*n landing a hair above an integer.
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-9));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

SummaryRow summarize_column(Index N, const std::string& filter, const std::vector<double>& ok,
                            int failed) {
  SummaryRow row;
  row.n_samples = N;
  row.filter = filter;
  row.ok = static_cast<int>(ok.size());
  row.failed = failed;
  const int total = row.ok + failed;
  row.failure_rate = total > 0 ? static_cast<double>(failed) / total : 0.0;
  row.warning = row.failure_rate > 0.5;
  if (ok.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.mean = row.median = row.p95 = row.p975 = row.max = nan;
    return row;
  }
  double sum = 0.0;
  for (double v : ok) sum += v;
  row.mean = sum / static_cast<double>(ok.size());
  row.median = percentile(ok, 50.0);
  row.p95 = percentile(ok, 95.0);
  row.p975 = percentile(ok, 97.5);
  row.max = *std::max_element(ok.begin(), ok.end());
  return row;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& trials) {
  struct Columns {
    std::vector<double> ce, robust;
    int ce_failed = 0, robust_failed = 0;
  };
  std::map<Index, Columns> by_n;
  for (const TrialRecord& r : trials) {
    Columns& c = by_n[r.n_samples];
    if (r.ce_ok()) c.ce.push_back(r.j_ce); else ++c.ce_failed;
    if (r.robust_ok()) c.robust.push_back(r.j_robust); else ++c.robust_failed;
  }
  std::vector<SummaryRow> rows;
  for (const auto& [N, c] : by_n) {
    rows.push_back(summarize_column(N, "ce", c.ce, c.ce_failed));
    rows.push_back(summarize_column(N, "robust", c.robust, c.robust_failed));
  }
  return rows;
}

GridResult run_grid(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  struct Task {
    Index n;
    int trial;
  };
  std::vector<Task> tasks;
  for (Index N : cfg.n_grid)
    for (int t = 0; t < cfg.trials; ++t) tasks.push_back({N, t});

  GridResult out;
  out.trials.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      try {
        out.trials[i] = run_trial(cfg, tasks[i].n, tasks[i].trial);
      } catch (const std::exception& e) {
        TrialRecord rec;
        rec.n_samples = tasks[i].n;
        rec.trial = tasks[i].trial;
        rec.seed = trial_seed(cfg.seed, tasks[i].n, tasks[i].trial);
        rec.ident_status = std::string("internal error: ") + e.what();
        rec.ce_status = rec.robust_status = "skipped: trial aborted";
        out.trials[i] = std::move(rec);
      }
    }
  };

  const int count = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < count; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  out.summary = summarize(out.trials);
  out.failure_warning = std::any_of(out.summary.begin(), out.summary.end(),
                                    [](const SummaryRow& r) { return r.warning; });
  return out;
}

TailReport tail_analysis(const std::vector<TrialRecord>& trials, double threshold) {
  TailReport rep;
  rep.threshold = threshold;
  std::vector<TrialRecord> event;
  for (const TrialRecord& r : trials) {
    if (!r.ce_ok() || !(r.rho_ce_closed_loop > threshold)) continue;
    event.push_back(r);
    ++rep.conditioned;
    if (!r.robust_ok()) continue;
    ++rep.paired;
    if (rep.paired == 1 || r.j_ce > rep.worst_ce) {
      rep.worst_ce = r.j_ce;
      rep.worst_ce_seed = r.seed;
    }
    if (rep.paired == 1 || r.j_robust > rep.worst_robust) {
      rep.worst_robust = r.j_robust;
      rep.worst_robust_seed = r.seed;
    }
    rep.max_pair_ratio = std::max(rep.max_pair_ratio, r.j_robust / r.j_ce);
  }
  rep.summary = summarize(event);
  if (rep.paired == 0) {
    rep.empty = true;
    rep.message = "no marginally-stable trials";
    return rep;
  }
  rep.empty = false;
  rep.worst_ratio = rep.worst_robust / rep.worst_ce;
  std::ostringstream os;
  os << rep.paired << " of " << rep.conditioned << " conditioned trials paired";
  rep.message = os.str();
  return rep;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope fit needs at least two points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error("log-log fit needs positive data");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw Error("log-log fit needs distinct x values");
  return sxy / sxx;
}

double median_slope(const std::vector<SummaryRow>& summary, const std::string& filter) {
  std::vector<double> x, y;
  for (const SummaryRow& r : summary) {
    if (r.filter != filter || r.ok == 0) continue;
    x.push_back(static_cast<double>(r.n_samples));
    y.push_back(r.median);
  }
  return loglog_slope(x, y);
}

}  // namespace kflearn
