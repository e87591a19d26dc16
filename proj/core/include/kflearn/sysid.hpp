#pragma once

#include <kflearn/common.hpp>
#include <kflearn/lti.hpp>

#include <optional>
#include <string_view>

namespace kflearn {

/// Column weighting applied to the regressed Hankel matrix before the SVD.
enum class Weighting {
  Identity,  // W = I (balanced realization)
  Moesp,     // W = (sum_k Y^-_k Y^-*_k)^{1/2}
};

std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view text);

struct HankelConfig {
  int past = 6;    // p
  int future = 6;  // f
  Weighting weighting = Weighting::Moesp;

  void validate() const;
};

/// Stacked future and past outputs, one column per regression time k = p..N+p-1.
struct HankelData {
  Matrix future;  // mf x N, column k-p stacks y_k .. y_{k+f-1}
  Matrix past;    // mp x N, column k-p stacks y_{k-p} .. y_{k-1}

  Index columns() const { return future.cols(); }
  /// sum_k Y^-_k Y^-*_k
  Matrix past_gram() const { return past * past.transpose(); }
};

/// Uses every available column when `columns` is empty.
HankelData build_hankel_data(const Trajectory& traj, const HankelConfig& cfg,
                             std::optional<Index> columns = std::nullopt);

/// Least-squares estimate sum Y+Y-* (sum Y-Y-*)^{-1}, via a linear solve
/// against the Gram matrix.
Matrix regress_hankel(const Matrix& future, const Matrix& past);

struct TrueHankel {
  Matrix G;                 // O_f K_p
  Matrix observability;     // O_f, mf x n
  Matrix controllability;   // K_p, n x mp
};

/// Reversed controllability matrix [(A-KC)^{p-1}K, ..., (A-KC)K, K].
Matrix reversed_controllability(const Model& model, int p);

/// Block lower-triangular innovation Toeplitz matrix with identity diagonal
/// blocks and C A^{i-j-1} K below the diagonal.
Matrix innovation_toeplitz(const Model& model, int s);

TrueHankel true_hankel(const Model& model, const HankelConfig& cfg);

struct Realization {
  Matrix observability;    // O_hat, mf x n
  Matrix controllability;  // K_hat_p, n x mp
  Vector singular_values;  // all singular values of G_hat W, descending
};

/// Rank-n factorisation of G_hat W. Left singular vectors are sign-normalised
/// so that their first non-negligible entry is positive. `past_gram` is the
/// regression Gram matrix and is required for Moesp weighting.
Realization realize(const Matrix& g_hat, int order, Weighting weighting,
                    const std::optional<Matrix>& past_gram = std::nullopt);

struct StateSpaceEstimate {
  Matrix A;
  Matrix C;
  Matrix K;
};

/// Shift-invariance least squares for A, first block row for C and last block
/// column for K.
StateSpaceEstimate extract_params(const Matrix& observability, const Matrix& controllability,
                                  int m, int f, int p);

/// Sample covariance of the first-block regression residual y_k - G_hat(1:m,:) Y^-_k.
Matrix estimate_R(const HankelData& data, const Matrix& g_hat, int m);
Matrix estimate_R(const Trajectory& traj, const Matrix& g_hat, const HankelConfig& cfg);

struct BasisAlignment {
  Matrix S;      // maps identified coordinates to reference coordinates: O_f S ~= O_hat
  Matrix S_inv;
  double condition = 1.0;
};

/// S = O_f^+ O_hat, with O_f built from the reference model at horizon f.
BasisAlignment align_basis(const Model& reference, const Matrix& observability, int f);

struct IdentResult {
  Matrix G_hat;
  Vector singular_values;
  Matrix O_hat;
  Matrix K_hat_ctrb;
  Matrix A_hat;
  Matrix C_hat;
  Matrix K_hat;
  Matrix R_hat;
  int n_used = 0;
  Index columns = 0;

  Model model() const { return {A_hat, C_hat, K_hat, R_hat}; }
};

/// Regression, realization, parameter extraction and R estimation.
IdentResult identify(const Trajectory& traj, const HankelConfig& cfg, int order);

/// max(n+1, ceil(beta log N)) with beta slightly above -1/(2 log rho).
int default_horizon(int order, Index samples, double rho_guess = 0.95);

/// Diagnostics only: index i (1-based order) maximising log s_i - log s_{i+1}.
int largest_singular_gap(const Vector& singular_values);

}  // namespace kflearn
