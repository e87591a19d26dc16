#pragma once

#include <kflearn/bounds.hpp>
#include <kflearn/experiments.hpp>
#include <kflearn/filtering.hpp>
#include <kflearn/lti.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kflearn {

// Model, filter and config files are JSON documents; matrices are row-major
// nested arrays. Malformed files raise ConfigError.

std::string model_to_json(const Model& model);
Model model_from_json(std::string_view text);
void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

/// Header `t,y_1..y_m[,x_1..x_n,e_1..e_m]` preceded by a `# seed=<seed>` line.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

struct FilterFile {
  FilterMode mode = FilterMode::Ce;
  FilterSpec spec;
  std::vector<std::pair<std::string, double>> diagnostics;
};

std::string filter_to_json(const FilterFile& filter);
FilterFile filter_from_json(std::string_view text);
void write_filter(const std::filesystem::path& path, const FilterFile& filter);
FilterFile read_filter(const std::filesystem::path& path);

/// Keys: model (object or path), n_grid, trials, past, future, order,
/// weighting, creg, horizon, terminal, seed, basis, eval_horizon, burn_in,
/// perfect_knowledge, tail_threshold. Missing keys keep their defaults;
/// unknown keys are rejected. Relative model paths resolve against `base`.
ExperimentConfig config_from_json(std::string_view text,
                                  const std::filesystem::path& base = {});
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig read_config(const std::filesystem::path& path);

void write_trials_csv(const std::filesystem::path& path, const std::vector<TrialRecord>& trials);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
void write_tail_csv(const std::filesystem::path& path, const TailReport& tail);
void write_bounds_csv(const std::filesystem::path& path, const std::vector<BoundReport>& reports);
void write_mse_csv(const std::filesystem::path& path, const MseReport& report,
                   std::string_view filter_mode);
/// Singular values of G^W with sigma_n flagged, plus residual norms.
void write_ident_diagnostics_csv(const std::filesystem::path& path, const IdentResult& ident,
                                 const std::vector<std::pair<std::string, double>>& extras);

/// Log-log plot of per-N error statistics: median line, 95% and 97.5%
/// percentile lines and a shaded band between median and 97.5%, one colour
/// per filter present in `rows`.
void write_error_plot_svg(const std::filesystem::path& path, const std::vector<SummaryRow>& rows,
                          std::string_view title);

}  // namespace kflearn
