#include <kflearn/filtering.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kflearn {

FilterSpec FilterSpec::ce(const Model& model_hat, const Matrix& L) {
  return {CeStatic{L}, model_hat};
}

FilterSpec FilterSpec::fir(const Model& model_hat, std::vector<Matrix> coeffs) {
  return {RobustFir{std::move(coeffs)}, model_hat};
}

void FilterSpec::validate() const {
  const Index nn = n();
  const Index mm = m();
  if (model_hat.A.cols() != nn || model_hat.C.cols() != nn)
    throw Error("filter model dimensions inconsistent");
  if (const auto* ce = std::get_if<CeStatic>(&mode)) {
    if (ce->L.rows() != nn || ce->L.cols() != mm) throw Error("CE gain must be n x m");
    if (!(closed_loop_rho() < 1.0)) throw Error("CE filter loop A - LC is unstable");
  } else {
    const auto& fir = std::get<RobustFir>(mode);
    if (fir.coeffs.empty()) throw Error("FIR filter needs at least one coefficient");
    for (const Matrix& g : fir.coeffs)
      if (g.rows() != nn || g.cols() != mm) throw Error("FIR coefficients must be n x m");
  }
}

double FilterSpec::closed_loop_rho() const {
  if (const auto* ce = std::get_if<CeStatic>(&mode))
    return spectral_radius(model_hat.A - ce->L * model_hat.C);
  return 0.0;
}

Matrix run_filter(const FilterSpec& spec, const Trajectory& traj) {
  spec.validate();
  if (traj.output_dim() != spec.m()) throw Error("trajectory output dimension does not match filter");
  const Index N = traj.length();
  const Index n = spec.n();
  if (N < 1) throw Error("trajectory is empty");

  Matrix xt = Matrix::Zero(n, N);
  if (const auto* ce = std::get_if<CeStatic>(&spec.mode)) {
    const Matrix F = spec.model_hat.A - ce->L * spec.model_hat.C;
    for (Index k = 1; k < N; ++k) {
      xt.col(k).noalias() = F * xt.col(k - 1);
      xt.col(k).noalias() += ce->L * traj.y.col(k - 1);
    }
  } else {
    const auto& g = std::get<RobustFir>(spec.mode).coeffs;
    const Index T = static_cast<Index>(g.size());
    for (Index t = 1; t <= std::min(T, N - 1); ++t)
      xt.rightCols(N - t).noalias() += g[static_cast<std::size_t>(t - 1)] * traj.y.leftCols(N - t);
  }
  return xt;
}

std::string_view to_string(Basis b) {
  return b == Basis::Identified ? "identified" : "original";
}

Basis parse_basis(std::string_view text) {
  if (text == "identified") return Basis::Identified;
  if (text == "original" || text == "aligned_original") return Basis::AlignedOriginal;
  throw ConfigError("unknown basis '" + std::string(text) + "' (expected identified|original)");
}

Index default_burn_in(const FilterSpec& spec, Index length) {
  double rho = spectral_radius(spec.model_hat.A);
  double extra = 0.0;
  if (spec.is_ce())
    rho = std::max(rho, spec.closed_loop_rho());
  else
    extra = static_cast<double>(std::get<RobustFir>(spec.mode).coeffs.size());
  const double cap = 0.1 * static_cast<double>(length);
  const double want = rho < 1.0 ? extra + 10.0 / (1.0 - rho) : cap;
  return static_cast<Index>(std::ceil(std::min(want, cap)));
}

MseReport empirical_mse(const Matrix& predictions, const Trajectory& traj,
                        const std::optional<BasisAlignment>& alignment, Basis basis,
                        Index burn_in) {
  if (!traj.has_states()) throw Error("empirical MSE needs simulated states");
  const Matrix& x = *traj.x;
  const Index N = traj.length();
  if (predictions.cols() != N || predictions.rows() != x.rows())
    throw Error("predictions do not match the trajectory states");
  if (burn_in < 0 || burn_in >= N) throw Error("burn-in must be smaller than the trajectory length");

  const Index used = N - burn_in;
  const auto xt = predictions.rightCols(used);
  const auto xs = x.rightCols(used);
  double sq = 0.0;
  if (!alignment) {
    sq = (xt - xs).squaredNorm();
  } else if (basis == Basis::Identified) {
    sq = (xt - alignment->S_inv * xs).squaredNorm();
  } else {
    sq = (alignment->S * xt - xs).squaredNorm();
  }

  MseReport r;
  r.j_tilde = std::sqrt(sq / static_cast<double>(used));
  r.horizon_used = used;
  r.burn_in = burn_in;
  r.basis = basis;
  return r;
}

MseReport empirical_mse(const FilterSpec& spec, const Trajectory& traj,
                        const std::optional<BasisAlignment>& alignment, Basis basis,
                        std::optional<Index> burn_in) {
  if (!traj.has_states()) throw Error("empirical MSE needs simulated states");
  const Index b = burn_in.value_or(default_burn_in(spec, traj.length()));
  return empirical_mse(run_filter(spec, traj), traj, alignment, basis, b);
}

Model to_reference_basis(const Model& mh, const BasisAlignment& al) {
  return {al.S * mh.A * al.S_inv, mh.C * al.S_inv, al.S * mh.K, mh.R};
}

FirResponse transform_response(const FirResponse& r, const BasisAlignment& al) {
  FirResponse out;
  out.phi_w.reserve(r.phi_w.size());
  out.phi_v.reserve(r.phi_v.size());
  for (const Matrix& w : r.phi_w) out.phi_w.push_back(al.S * w * al.S_inv);
  for (const Matrix& v : r.phi_v) out.phi_v.push_back(al.S * v);
  return out;
}

FirResponse filter_response(const FilterSpec& spec) {
  spec.validate();
  const Model& mh = spec.model_hat;
  if (const auto* ce = std::get_if<CeStatic>(&spec.mode)) {
    const Matrix F = mh.A - ce->L * mh.C;
    Matrix power = Matrix::Identity(mh.n(), mh.n());
    int horizon = 1;
    constexpr int kMaxTerms = 10000;
    while (horizon < kMaxTerms && power.norm() >= 1e-13) {
      power = power * F;
      ++horizon;
    }
    return gain_response(mh, ce->L, horizon);
  }
  const auto& g = std::get<RobustFir>(spec.mode).coeffs;
  FirResponse r;
  r.phi_w.push_back(Matrix::Identity(mh.n(), mh.n()));
  for (std::size_t t = 0; t < g.size(); ++t) {
    r.phi_v.push_back(-g[t]);
    if (t + 1 < g.size()) r.phi_w.push_back(r.phi_w.back() * mh.A + r.phi_v.back() * mh.C);
  }
  return r;
}

AnalyticMse analytic_mse(const Model& truth, const Model& mh, const FirResponse& resp) {
  if (spectral_radius(truth.A) >= 1.0)
    throw Error("unstable A: prediction error is unbounded");
  if (mh.A.rows() != truth.n() || mh.C.rows() != truth.m() || mh.K.cols() != truth.m())
    throw Error("estimated model is not in the basis of the true model");
  const int T = resp.horizon();
  if (T < 1 || static_cast<int>(resp.phi_v.size()) != T) throw Error("malformed response");
  const Index n = truth.n();
  const Index m = truth.m();

  // Impulse of (zI - A)^{-1} K, coefficients A^{i-1} K for i = 1..I.
  std::vector<Matrix> imp;
  const double stop = 1e-10 * std::max(1.0, spectral_norm(truth.K));
  constexpr int kMaxTerms = 10000;
  Matrix term = truth.K;
  while (static_cast<int>(imp.size()) < kMaxTerms) {
    imp.push_back(term);
    if (term.norm() < stop) break;
    term = truth.A * term;
  }
  const int I = static_cast<int>(imp.size());

  const Matrix dA = truth.A - mh.A;
  const Matrix dC = truth.C - mh.C;
  const Matrix dK = truth.K - mh.K;
  std::vector<Matrix> U, V;  // coefficients of dA R_A K + dK + K^ and dC R_A K + I
  U.reserve(static_cast<std::size_t>(I) + 1);
  V.reserve(static_cast<std::size_t>(I) + 1);
  U.push_back(dK + mh.K);
  V.push_back(Matrix::Identity(m, m));
  for (int i = 0; i < I; ++i) {
    U.push_back(dA * imp[static_cast<std::size_t>(i)]);
    V.push_back(dC * imp[static_cast<std::size_t>(i)]);
  }

  const Matrix D = terminal_residual(resp, mh.A, mh.C);
  double lemma_sq = 0.0;
  double term_sq = 0.0;
  double total_sq = 0.0;
  Matrix E(n, m);
  Matrix Dj(n, m);
  for (int j = 1; j <= T + I; ++j) {
    E.setZero();
    for (int t = std::max(1, j - I); t <= std::min(T, j); ++t) {
      const std::size_t lag = static_cast<std::size_t>(j - t);
      E.noalias() += resp.phi_w[static_cast<std::size_t>(t - 1)] * U[lag];
      E.noalias() += resp.phi_v[static_cast<std::size_t>(t - 1)] * V[lag];
    }
    Dj.setZero();
    if (j - T - 1 >= 0 && j - T - 1 < I) Dj.noalias() = D * imp[static_cast<std::size_t>(j - T - 1)];
    lemma_sq += (E * truth.R * E.transpose()).trace();
    term_sq += (Dj * truth.R * Dj.transpose()).trace();
    const Matrix sum = E + Dj;
    total_sq += (sum * truth.R * sum.transpose()).trace();
  }

  // Neglected tail: sum_{i >= I} A^i K e contributes through dA, dC and D.
  const Matrix gamma = lyapunov_solve(truth.A, truth.K * truth.R * truth.K.transpose());
  Matrix AI = Matrix::Identity(n, n);
  for (int i = 0; i < I; ++i) AI = AI * truth.A;
  const double tail_state = std::sqrt(std::max(0.0, (AI * gamma * AI.transpose()).trace()));
  double gain = spectral_norm(D);
  const double nA = spectral_norm(dA);
  const double nC = spectral_norm(dC);
  for (int t = 0; t < T; ++t)
    gain += spectral_norm(resp.phi_w[static_cast<std::size_t>(t)]) * nA +
            spectral_norm(resp.phi_v[static_cast<std::size_t>(t)]) * nC;

  AnalyticMse out;
  out.lemma_value = std::sqrt(std::max(0.0, lemma_sq));
  out.terminal = std::sqrt(std::max(0.0, term_sq));
  out.j_tilde = std::sqrt(std::max(0.0, total_sq));
  out.tail_bound = gain * tail_state;
  out.impulse_terms = I;
  return out;
}

}  // namespace kflearn
