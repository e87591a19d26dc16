#include <doctest.h>

#include <kflearn/experiments.hpp>

#include "oracles.hpp"

#include <cmath>
#include <set>

using namespace kflearn;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.n_grid = {500, 1000};
  cfg.trials = 4;
  cfg.eval_horizon = 3000;
  return cfg;
}

TrialRecord record(Index n, double ce, double robust, double rho, std::uint64_t seed = 0) {
  TrialRecord r;
  r.n_samples = n;
  r.j_ce = ce;
  r.j_robust = robust;
  r.rho_ce_closed_loop = rho;
  r.seed = seed;
  return r;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("reference system") {
  const Model md = reference_system();
  CHECK(md.admissible());
  CHECK(spectral_radius(md.closed_loop()) == doctest::Approx(0.4475).epsilon(1e-3));
  CHECK(md.R(0, 0) == 10.6414);
  CHECK(lyapunov_solve(md.A, md.K * md.R * md.K.transpose()).trace() == doctest::Approx(6089.6).epsilon(1e-4));
}

TEST_CASE("seeds") {
  std::set<std::uint64_t> seen;
  for (Index n : {500, 2000})
    for (int t = 0; t < 100; ++t) seen.insert(trial_seed(1, n, t));
  CHECK(seen.size() == 200);
  CHECK(trial_seed(1, 500, 3) == trial_seed(1, 500, 3));
  CHECK(trial_seed(1, 500, 3) != trial_seed(2, 500, 3));
  const std::uint64_t s = trial_seed(1, 500, 0);
  CHECK(substream_seed(s, 1) != substream_seed(s, 2));
  CHECK(substream_seed(s, 1) != s);
}

TEST_CASE("trials are deterministic") {
  const ExperimentConfig cfg = small_config();
  const TrialRecord a = run_trial(cfg, 500, 0);
  const TrialRecord b = run_trial(cfg, 500, 0);
  CHECK(a.seed == trial_seed(cfg.seed, 500, 0));
  CHECK(a.j_ce == b.j_ce);
  CHECK(a.j_robust == b.j_robust);
  CHECK(a.hankel_error == b.hankel_error);
  CHECK(a.ident_status == kStageOk);
  CHECK(a.ce_ok());
  CHECK(a.robust_ok());
  CHECK(std::isfinite(a.sigma_n_G));
  CHECK(a.robust_constraint <= cfg.creg * (1.0 + 1e-6));
  const TrialRecord c = run_trial(cfg, 500, 0, a.seed + 1);
  CHECK(c.j_ce != a.j_ce);
}

TEST_CASE("perfect knowledge gives the Kalman filter") {
  ExperimentConfig cfg = small_config();
  cfg.perfect_knowledge = true;
  const TrialRecord r = run_trial(cfg, 500, 0);
  CHECK(r.j_ce < 1e-8);
  CHECK(r.rho_k_hat == doctest::Approx(spectral_radius(cfg.model.closed_loop())));
  CHECK(r.robust_ok());
  CHECK(r.j_robust > 0.0);
}

TEST_CASE("more data reduces the Hankel error") {
  ExperimentConfig cfg = small_config();
  double e_small = 0.0, e_large = 0.0;
  for (int t = 0; t < 4; ++t) {
    e_small += run_trial(cfg, 500, t).hankel_error;
    e_large += run_trial(cfg, 20000, t).hankel_error;
  }
  CHECK(e_large < e_small);
}

TEST_CASE("nearest-rank percentile") {
  const std::vector<double> v{7, 1, 9, 3, 10, 2, 8, 4, 6, 5};
  CHECK(percentile(v, 50) == 5.0);
  CHECK(percentile(v, 95) == 10.0);
  CHECK(percentile(v, 90) == 9.0);
  CHECK(percentile(v, 10) == 1.0);
  CHECK(percentile(v, 100) == 10.0);
  CHECK(percentile(v, 97.5) == 10.0);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> w(1 + rep * 7);
    for (double& x : w) x = nd(rng);
    for (double q : {1.0, 50.0, 95.0, 97.5, 100.0}) CHECK(percentile(w, q) == oracle::percentile_by_count(w, q));
  }
  CHECK_THROWS(percentile({}, 50));
  CHECK_THROWS(percentile(v, 0));
}

TEST_CASE("summary counts failures") {
  std::vector<TrialRecord> t;
  for (int i = 0; i < 4; ++i) t.push_back(record(100, 1.0 + i, 2.0 + i, 0.5));
  t[1].ce_status = "ce: no stabilizing solution";
  t[2].ce_status = "ident: failed";
  t[3].ce_status = "ce: failed";
  t.push_back(record(200, 0.5, 0.4, 0.5));
  const auto rows = summarize(t);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].n_samples == 100);
  CHECK(rows[0].filter == "ce");
  CHECK(rows[0].ok == 1);
  CHECK(rows[0].failed == 3);
  CHECK(rows[0].failure_rate == 0.75);
  CHECK(rows[0].warning);
  CHECK(rows[1].filter == "robust");
  CHECK_FALSE(rows[1].warning);
  CHECK(rows[1].mean == doctest::Approx(3.5));
  CHECK(rows[1].median == 3.0);
  CHECK(rows[1].max == 5.0);
  CHECK(rows[2].n_samples == 200);
}

TEST_CASE("failure rate of exactly one half does not warn") {
  std::vector<TrialRecord> t{record(100, 1.0, 1.0, 0.5), record(100, 1.0, 1.0, 0.5)};
  t[0].robust_status = "robust: regularization too tight";
  const auto rows = summarize(t);
  CHECK(rows[1].failure_rate == 0.5);
  CHECK_FALSE(rows[1].warning);
}

TEST_CASE("tail analysis") {
  std::vector<TrialRecord> t{record(100, 5.0, 1.0, 0.99, 11), record(100, 50.0, 2.0, 0.98, 12),
                             record(200, 3.0, 4.0, 0.5, 13), record(200, 8.0, 3.0, 0.999, 14)};
  const TailReport rep = tail_analysis(t, 0.97);
  CHECK(rep.conditioned == 3);
  CHECK(rep.paired == 3);
  CHECK_FALSE(rep.empty);
  CHECK(rep.worst_ce == 50.0);
  CHECK(rep.worst_ce_seed == 12);
  CHECK(rep.worst_robust == 3.0);
  CHECK(rep.worst_robust_seed == 14);
  CHECK(rep.worst_ratio == doctest::Approx(3.0 / 50.0));
  CHECK(rep.max_pair_ratio == doctest::Approx(3.0 / 8.0));

  const TailReport none = tail_analysis(t, 1.5);
  CHECK(none.empty);
  CHECK(none.conditioned == 0);
  CHECK(none.message == "no marginally-stable trials");

  t[1].robust_status = "robust: failed";
  const TailReport unpaired = tail_analysis(t, 0.97);
  CHECK(unpaired.conditioned == 3);
  CHECK(unpaired.paired == 2);
  CHECK(unpaired.worst_ce == 8.0);
}

TEST_CASE("grid output does not depend on the worker count") {
  const ExperimentConfig cfg = small_config();
  const GridResult one = run_grid(cfg, 1);
  const GridResult three = run_grid(cfg, 3);
  REQUIRE(one.trials.size() == 8);
  REQUIRE(three.trials.size() == 8);
  for (std::size_t i = 0; i < one.trials.size(); ++i) {
    CHECK(one.trials[i].n_samples == cfg.n_grid[i / 4]);
    CHECK(one.trials[i].trial == static_cast<int>(i % 4));
    CHECK(same(one.trials[i].j_ce, three.trials[i].j_ce));
    CHECK(same(one.trials[i].j_robust, three.trials[i].j_robust));
    CHECK(one.trials[i].robust_status == three.trials[i].robust_status);
  }
  CHECK(one.summary.size() == 4);
  CHECK_FALSE(one.failure_warning);

  const TailReport all = tail_analysis(one.trials, 0.0);
  REQUIRE(all.summary.size() == one.summary.size());
  for (std::size_t i = 0; i < all.summary.size(); ++i) {
    CHECK(all.summary[i].median == one.summary[i].median);
    CHECK(all.summary[i].max == one.summary[i].max);
  }
}

TEST_CASE("failure warning when most trials fail") {
  ExperimentConfig cfg = small_config();
  cfg.n_grid = {500};
  cfg.trials = 2;
  cfg.creg = 1e-3;  // every robust synthesis is infeasible
  const GridResult g = run_grid(cfg, 1);
  CHECK(g.failure_warning);
  for (const TrialRecord& r : g.trials) CHECK(r.robust_status.find("regularization too tight") != std::string::npos);
}

TEST_CASE("slopes") {
  const std::vector<double> x{500, 2000, 8000, 32000};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 / std::sqrt(v));
  CHECK(loglog_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < x.size(); ++i) {
    SummaryRow r;
    r.n_samples = static_cast<Index>(x[i]);
    r.filter = "ce";
    r.ok = 1;
    r.median = y[i];
    rows.push_back(r);
  }
  CHECK(median_slope(rows, "ce") == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK_THROWS(loglog_slope({1.0}, {1.0}));
}

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_grid = {100, 50};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.trials = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.creg = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.model.R(0, 0) = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
