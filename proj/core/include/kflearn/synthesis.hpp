#pragma once

#include <kflearn/common.hpp>
#include <kflearn/lti.hpp>

#include <string_view>
#include <vector>

namespace kflearn {

/// Which synthesis a filter came from.
enum class FilterMode { Ce, Robust };

std::string_view to_string(FilterMode m);
FilterMode parse_filter_mode(std::string_view text);

enum class CeBranch {
  StableTrivial,   // rho(A - KC) < 1, so P = 0 and L = K
  UnstableSolved,  // stabilizing P found by iterating the Q-free Riccati map
};

std::string_view to_string(CeBranch b);

struct CeResult {
  Matrix P;  // n x n
  Matrix L;  // n x m
  double closed_loop_rho = 0.0;
  CeBranch branch = CeBranch::StableTrivial;
  int iterations = 0;
};

/// Certainty-equivalent gain from the Riccati equation with correlation terms
///   P = A P A* + K R K* - (A P C* + K R)(C P C* + R)^{-1}(A P C* + K R)*.
/// The iteration runs on the equivalent form in F = A - KC that has no
/// constant term. Throws "no stabilizing solution" when F has an eigenvalue
/// within 1e-6 of the unit circle.
CeResult ce_synthesize(const Model& model_hat);

/// Residual of the correlation-form Riccati equation at P.
Matrix riccati_residual(const Model& model_hat, const Matrix& P);

/// Finite-horizon closed-loop responses, Phi_w[t-1] and Phi_v[t-1] for t = 1..T.
struct FirResponse {
  std::vector<Matrix> phi_w;  // n x n
  std::vector<Matrix> phi_v;  // n x m

  int horizon() const { return static_cast<int>(phi_w.size()); }
};

/// Responses of the static predictor with gain L, truncated to T terms:
/// Phi_w,t = (A - LC)^{t-1}, Phi_v,t = -(A - LC)^{t-1} L.
FirResponse gain_response(const Model& model_hat, const Matrix& L, int horizon);

/// ||Phi_w K + Phi_v||_H2 over the stored coefficients.
double response_objective(const FirResponse& r, const Matrix& K);
/// ||[Phi_w Phi_v]||_H2 over the stored coefficients.
double response_norm(const FirResponse& r);
/// Phi_w,T A + Phi_v,T C, the first coefficient dropped by truncation.
Matrix terminal_residual(const FirResponse& r, const Matrix& A, const Matrix& C);
/// Largest ||Phi_w,t+1 - Phi_w,t A - Phi_v,t C||_F over t = 1..T-1, and
/// ||Phi_w,1 - I||_F.
double recursion_residual(const FirResponse& r, const Matrix& A, const Matrix& C);

struct RobustFilter {
  std::vector<Matrix> coeffs;  // g_t = -Phi_v,t, t = 1..T
  double objective_value = 0.0;
  double constraint_norm = 0.0;
};

enum class TerminalCondition {
  Fir,   // impose Phi_w,T A + Phi_v,T C = 0, so the responses are exactly FIR
  Free,  // drop the terminal coefficient and report it as a tail residual
};

std::string_view to_string(TerminalCondition t);
TerminalCondition parse_terminal(std::string_view text);

struct SlsOptions {
  TerminalCondition terminal = TerminalCondition::Fir;
  int max_bisections = 400;
};

struct SlsResult {
  FirResponse response;
  RobustFilter filter;
  double lambda = 0.0;          // multiplier of the squared norm constraint
  bool constraint_active = false;
  double tail_residual = 0.0;   // ||Phi_w,T A + Phi_v,T C||_F
};

/// Finite-horizon robust synthesis
///   min ||Phi_w K + Phi_v||_H2  s.t.  ||[Phi_w Phi_v]||_H2 <= c_reg
/// over responses satisfying Phi_w,1 = I and the state recursion. Phi_w is
/// eliminated so the unknowns are Phi_v,1..T; each multiplier value gives a
/// ridge-regularised least-squares problem and the multiplier is found by
/// bisection.
SlsResult sls_synthesize(const Model& model_hat, double c_reg, int horizon,
                         const SlsOptions& options = {});

/// 2(1 + ||K||) ||[Phi_w Phi_v]||_H2 for the truncated CE responses.
double default_creg(const Model& model_hat, int horizon);

/// Parameter error magnitudes, spectral norms.
struct ParameterErrors {
  double a = 0.0;
  double c = 0.0;
  double k = 0.0;
  double r = 0.0;

  double max_akc() const;
};

struct ConditionCheck {
  bool satisfied = false;
  double margin = 0.0;  // rhs - lhs; for two inequalities the smaller slack
  double lhs = 0.0;
  double rhs = 0.0;
};

/// 2 tau(A-KC, rho) (eps_A + eps_C (||K|| + eps_K) + eps_K ||C||) <= 1 - rho.
ConditionCheck check_ce_robustness(const Model& truth, const ParameterErrors& eps, double rho);

/// (eps_A + eps_C ||K||) ||R_{A-KC}||_Hinf <= 1/2 and
/// c_reg >= 2 (1 + ||K||) ||R_{A-KC}||_H2. lhs/rhs describe the first
/// inequality; margin is the smaller of the two slacks.
struct FeasibilityCheck : ConditionCheck {
  bool perturbation_ok = false;
  bool regularization_ok = false;
  double creg_required = 0.0;
};
FeasibilityCheck check_robust_feasibility(const Model& truth, const ParameterErrors& eps,
                                          double c_reg);

}  // namespace kflearn
