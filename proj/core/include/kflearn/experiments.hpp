#pragma once

#include <kflearn/common.hpp>
#include <kflearn/filtering.hpp>
#include <kflearn/lti.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kflearn {

/// Three-state, single-output benchmark system used by the default experiment.
Model reference_system();

struct ExperimentConfig {
  Model model = reference_system();
  std::vector<Index> n_grid{500, 2000, 8000, 32000};
  int trials = 100;
  HankelConfig hankel;  // p = f = 6, Moesp weighting
  int order = 3;
  double creg = 10.0;
  int horizon = 30;
  TerminalCondition terminal = TerminalCondition::Fir;
  std::uint64_t seed = 1;
  Basis basis = Basis::AlignedOriginal;
  Index eval_horizon = 100000;
  std::optional<Index> burn_in;  // default_burn_in per filter when empty
  bool perfect_knowledge = false;  // skip identification and use the true model
  double tail_threshold = 0.97;

  /// Throws ConfigError.
  void validate() const;
};

/// Counter-based per-trial seed: a splitmix64 hash of (master, N, trial).
std::uint64_t trial_seed(std::uint64_t master, Index samples, int trial);
/// Independent sub-stream of a trial seed (1: identification data, 2: evaluation data).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

inline constexpr const char* kStageOk = "ok";

struct TrialRecord {
  Index n_samples = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double j_ce = std::numeric_limits<double>::quiet_NaN();
  double j_robust = std::numeric_limits<double>::quiet_NaN();
  double rho_ce_closed_loop = std::numeric_limits<double>::quiet_NaN();
  double rho_k_hat = std::numeric_limits<double>::quiet_NaN();  // rho(A^ - K^ C^)
  double rho_a_hat = std::numeric_limits<double>::quiet_NaN();
  double sigma_n_G = std::numeric_limits<double>::quiet_NaN();
  double hankel_error = std::numeric_limits<double>::quiet_NaN();  // ||G^ - G||_2
  double robust_objective = std::numeric_limits<double>::quiet_NaN();
  double robust_constraint = std::numeric_limits<double>::quiet_NaN();
  std::string ident_status = kStageOk;
  std::string ce_status = kStageOk;
  std::string robust_status = kStageOk;

  bool ce_ok() const { return ce_status == kStageOk; }
  bool robust_ok() const { return robust_status == kStageOk; }
};

/// simulate -> identify -> CE and robust synthesis -> empirical MSE of both
/// filters on a fresh evaluation trajectory. Stage failures are recorded in
/// the status fields; only configuration errors throw.
TrialRecord run_trial(const ExperimentConfig& cfg, Index samples, int trial);
TrialRecord run_trial(const ExperimentConfig& cfg, Index samples, int trial, std::uint64_t seed);

struct SummaryRow {
  Index n_samples = 0;
  std::string filter;  // "ce" or "robust"
  int ok = 0;
  int failed = 0;
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  double p975 = 0.0;
  double max = 0.0;
  double failure_rate = 0.0;
  bool warning = false;  // failure rate above 50%
};

/// Nearest-rank percentile: the ceil(q/100 * n)-th smallest value, q in (0, 100].
double percentile(std::vector<double> values, double q);

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& trials);

struct GridResult {
  std::vector<TrialRecord> trials;  // ordered by (N, trial)
  std::vector<SummaryRow> summary;
  bool failure_warning = false;
};

/// Runs every (N, trial) pair on `workers` threads; the output does not depend
/// on the worker count.
GridResult run_grid(const ExperimentConfig& cfg, int workers = 1);

struct TailReport {
  double threshold = 0.97;
  int conditioned = 0;  // trials with a CE filter and rho(A^ - L C^) > threshold
  int paired = 0;       // of those, trials where the robust filter also succeeded
  bool empty = true;
  std::string message;
  double worst_ce = 0.0;
  double worst_robust = 0.0;
  double worst_ratio = 0.0;     // worst_robust / worst_ce
  double max_pair_ratio = 0.0;  // max over paired trials of j_robust / j_ce
  std::uint64_t worst_ce_seed = 0;
  std::uint64_t worst_robust_seed = 0;
  std::vector<SummaryRow> summary;  // per-N summary over the conditioned trials
};

/// Distribution of both errors conditioned on rho(A^ - L_CE C^) > threshold.
/// Worst cases are compared over paired trials.
TailReport tail_analysis(const std::vector<TrialRecord>& trials, double threshold = 0.97);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Slope of the per-N median for "ce" or "robust".
double median_slope(const std::vector<SummaryRow>& summary, const std::string& filter);

}  // namespace kflearn
