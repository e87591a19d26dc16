#pragma once

#include <kflearn/common.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace kflearn {

/// Innovations-form model
///   x_{k+1} = A x_k + K e_k,   y_k = C x_k + e_k,   e_k ~ N(0, R).
struct Model {
  Matrix A;  // n x n
  Matrix C;  // m x n
  Matrix K;  // n x m
  Matrix R;  // m x m, symmetric positive definite

  Index n() const { return A.rows(); }
  Index m() const { return C.rows(); }

  /// Throws Error on inconsistent dimensions or a non-PD innovation covariance.
  void validate() const;

  /// rho(A) < 1 and rho(A - KC) < 1.
  bool admissible() const;

  Matrix closed_loop() const { return A - K * C; }
};

/// Sampled output trajectory. Columns are time samples.
struct Trajectory {
  Matrix y;                 // m x N
  std::optional<Matrix> x;  // n x N, simulation only
  std::optional<Matrix> e;  // m x N, simulation only
  std::uint64_t seed = 0;

  Index length() const { return y.cols(); }
  Index output_dim() const { return y.rows(); }
  bool has_states() const { return x.has_value(); }
};

struct SpectralReport {
  double rho = 0.0;
  double tau = 1.0;
  double h2 = 0.0;
  double hinf = 0.0;
};

/// Symmetric square-root factor F with F F^T = S. Cholesky when S is positive
/// definite, otherwise an eigenvalue square root with small negative
/// eigenvalues clipped to zero.
Matrix covariance_sqrt(const Matrix& S);

/// Symmetric PSD square root S^{1/2}.
Matrix symmetric_sqrt(const Matrix& S);

Trajectory simulate(const Model& model, Index samples, std::uint64_t seed);

/// Solves X = M X M^T + Q by the doubling iteration.
Matrix lyapunov_solve(const Matrix& M, const Matrix& Q);

double spectral_radius(const Matrix& M);
double spectral_norm(const Matrix& M);

/// Values of rho within this distance below 1 are reported as marginal.
inline constexpr double kMarginalTolerance = 1e-9;
inline bool is_marginally_stable(double rho) { return rho >= 1.0 - kMarginalTolerance; }

/// sup_t ||M^t||_2 rho^{-t}. The cutoff doubles from 64 until the running
/// term falls below 1e-3 of the running max, capped at 2^14.
double tau_decay(const Matrix& M, double rho);

/// ||Cout (zI - M)^{-1} B + D||_{H2} via the controllability Gramian.
double h2_norm(const Matrix& M, const Matrix& B, const Matrix& Cout);
double h2_norm(const Matrix& M, const Matrix& B, const Matrix& Cout, const Matrix& D);

/// Peak gain of D + Cout (zI - M)^{-1} B on the unit circle. Grid of 4096
/// frequencies in [0, pi] followed by golden-section refinement around the
/// grid maximiser.
double hinf_norm(const Matrix& M, const Matrix& B, const Matrix& Cout, const Matrix& D);

/// Coefficients [B, MB, ..., M^{T-1} B] of z^{-1}..z^{-T} in (zI - M)^{-1} B.
std::vector<Matrix> fir_impulse(const Matrix& M, const Matrix& B, int horizon);

SpectralReport spectral_report(const Matrix& M, const Matrix& B, const Matrix& Cout,
                               const Matrix& D, double rho);

/// Extended observability matrix [C; CA; ...; CA^{k-1}].
Matrix observability_matrix(const Matrix& A, const Matrix& C, int k);

}  // namespace kflearn
