#pragma once

#include <kflearn/common.hpp>
#include <kflearn/lti.hpp>
#include <kflearn/synthesis.hpp>
#include <kflearn/sysid.hpp>

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace kflearn {

/// Static predictor x~_k = A x~_{k-1} + L (y_{k-1} - C x~_{k-1}).
struct CeStatic {
  Matrix L;
};

/// Output convolution x~_k = sum_{t=1..T} g_t y_{k-t}.
struct RobustFir {
  std::vector<Matrix> coeffs;
};

struct FilterSpec {
  std::variant<CeStatic, RobustFir> mode;
  Model model_hat;

  static FilterSpec ce(const Model& model_hat, const Matrix& L);
  static FilterSpec fir(const Model& model_hat, std::vector<Matrix> coeffs);

  bool is_ce() const { return std::holds_alternative<CeStatic>(mode); }
  Index n() const { return model_hat.n(); }
  Index m() const { return model_hat.m(); }

  /// Throws on dimension mismatches, an unstable CE loop or an empty FIR.
  void validate() const;
  /// rho(A - LC) for CE filters, 0 for FIR filters.
  double closed_loop_rho() const;
};

/// Predictions x~_0..x~_{N-1} (n x N), with x~_0 = 0 and y_k = 0 for k < 0.
Matrix run_filter(const FilterSpec& spec, const Trajectory& traj);

enum class Basis {
  Identified,       // compare x~ with S^{-1} x
  AlignedOriginal,  // compare S x~ with x
};

std::string_view to_string(Basis b);
Basis parse_basis(std::string_view text);

struct MseReport {
  double j_tilde = 0.0;
  Index horizon_used = 0;
  Index burn_in = 0;
  Basis basis = Basis::AlignedOriginal;
};

/// 10/(1 - rho) samples with rho the slowest of the filter loop and the
/// estimated dynamics (plus T for FIR filters), capped at 10% of `length`.
Index default_burn_in(const FilterSpec& spec, Index length);

/// Root-mean-square prediction error over samples k >= burn_in. Without an
/// alignment the filter is assumed to share the basis of the simulated states.
MseReport empirical_mse(const FilterSpec& spec, const Trajectory& traj,
                        const std::optional<BasisAlignment>& alignment = std::nullopt,
                        Basis basis = Basis::AlignedOriginal,
                        std::optional<Index> burn_in = std::nullopt);

/// Same, for predictions that were already computed by run_filter.
MseReport empirical_mse(const Matrix& predictions, const Trajectory& traj,
                        const std::optional<BasisAlignment>& alignment, Basis basis,
                        Index burn_in);

/// Estimated model expressed in the reference basis: (S A S^{-1}, C S^{-1}, S K, R).
Model to_reference_basis(const Model& model_hat, const BasisAlignment& alignment);
/// Responses in the reference basis: (S Phi_w S^{-1}, S Phi_v).
FirResponse transform_response(const FirResponse& r, const BasisAlignment& alignment);

/// Responses realised by a filter: truncated closed loop for CE (horizon grows
/// until the loop has decayed below 1e-13, at most 10^4 terms), and Phi_v = -g
/// with Phi_w rebuilt by the recursion for FIR.
FirResponse filter_response(const FilterSpec& spec);

struct AnalyticMse {
  double j_tilde = 0.0;   // MSE of the FIR predictor x~ = -Phi_v y, including the terminal term
  double lemma_value = 0.0;  // ||[Phi_w Phi_v]{[dA dK; dC 0][R_A K; I] + [K^; I]} R^{1/2}||_H2
  double terminal = 0.0;  // ||z^{-T} (Phi_w,T A^ + Phi_v,T C^) R_A K R^{1/2}||_H2
  double tail_bound = 0.0;  // bound on the neglected impulse tail of R_A K
  int impulse_terms = 0;
};

/// Model-based prediction error of the responses against the true system.
/// `model_hat` and `response` must already be in the basis of `truth`.
AnalyticMse analytic_mse(const Model& truth, const Model& model_hat, const FirResponse& response);

}  // namespace kflearn
