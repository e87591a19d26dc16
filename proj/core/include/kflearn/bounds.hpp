#pragma once

#include <kflearn/common.hpp>
#include <kflearn/lti.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kflearn {

struct BoundReport {
  std::string name;
  double value = 0.0;
  bool condition_satisfied = true;  // false: value is reported but non-binding
  std::vector<std::pair<std::string, double>> inputs;
  std::vector<std::pair<std::string, double>> components;

  bool binding() const { return condition_satisfied; }
  /// Throws if the key is absent.
  double input(std::string_view key) const;
  double component(std::string_view key) const;
};

/// ||[R_A K; I] R^{1/2}||_H2, i.e. the system (A, K R^{1/2}, [I; 0], [0; R^{1/2}]).
double innovation_h2(const Model& truth);
/// ||[R_A K; I] R^{1/2}||_Hinf.
double innovation_hinf_scaled(const Model& truth);
/// ||[R_A K; I]||_Hinf, without the R^{1/2} factor.
double innovation_hinf(const Model& truth);

/// sqrt(3) Cbar eps ||[R_A K; I] R^{1/2}||_H2 with
/// Cbar = 2 tau(A-KC, rho) / (1 - rho) (1 + ||K|| + eps_K), eps = max(eps_A, eps_C, eps_K).
BoundReport ce_suboptimality_bound(const Model& truth, const ParameterErrors& eps, double rho);

/// sqrt(3) C eps ||[R_A K; I]||_Hinf ||R^{1/2}|| + 2 eps ||R_{A-KC}||_H2 ||R^{1/2}||.
BoundReport robust_suboptimality_bound(const Model& truth, const ParameterErrors& eps,
                                       double c_reg);

/// Sigma_E,s = T_s (I_s (x) R) T_s^* for the innovation Toeplitz matrix T_s.
Matrix innovation_noise_covariance(const Model& truth, int s);

/// 8 C1 sqrt(fmp/N log(5 f kappa / delta)) + C2 ||(A-KC)^p||.
BoundReport regression_error_bound(const Model& truth, const HankelConfig& cfg, Index samples,
                                   double delta);

struct DeltaN {
  double value = 0.0;      // may underflow to 0
  double log_value = 0.0;  // natural log
  double log10_value = 0.0;
};

/// (2(N+p-1)m)^{-log^2(2pm) log(2(N+p-1)m)}, evaluated in log space.
DeltaN delta_n(Index samples, int past, int m);

/// C_KF for the chosen filter, C_ID, and their product. Throws "no spectral
/// gap" when rho(A-KC) >= 1 - 1e-4.
BoundReport end_to_end_constants(const Model& truth, const HankelConfig& cfg, FilterMode mode);

/// tau(A-KC, rho)/(1 - rho) (1 + ||K||) ||[R_A K; I] R^{1/2}||_H2 at one rho,
/// the function minimised by the CE constant.
double ce_constant_at(const Model& truth, double rho);

}  // namespace kflearn
