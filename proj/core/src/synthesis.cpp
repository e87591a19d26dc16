#include <kflearn/synthesis.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kflearn {

std::string_view to_string(FilterMode m) { return m == FilterMode::Ce ? "ce" : "robust"; }

FilterMode parse_filter_mode(std::string_view text) {
  if (text == "ce") return FilterMode::Ce;
  if (text == "robust") return FilterMode::Robust;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected ce|robust)");
}

std::string_view to_string(CeBranch b) {
  return b == CeBranch::StableTrivial ? "stable_trivial" : "unstable_solved";
}

std::string_view to_string(TerminalCondition t) {
  return t == TerminalCondition::Fir ? "fir" : "free";
}

TerminalCondition parse_terminal(std::string_view text) {
  if (text == "fir") return TerminalCondition::Fir;
  if (text == "free") return TerminalCondition::Free;
  throw ConfigError("unknown terminal condition '" + std::string(text) + "' (expected fir|free)");
}

namespace {

void check_dims(const Model& m) {
  if (m.A.rows() != m.A.cols() || m.C.cols() != m.A.rows() || m.K.rows() != m.A.rows() ||
      m.K.cols() != m.C.rows() || m.R.rows() != m.C.rows() || m.R.cols() != m.C.rows())
    throw Error("model dimensions inconsistent");
}

Matrix correlation_gain(const Model& mh, const Matrix& P) {
  const Matrix innov = mh.C * P * mh.C.transpose() + mh.R;
  const Matrix cross = mh.A * P * mh.C.transpose() + mh.K * mh.R;
  // cross * innov^{-1}, innov symmetric
  return innov.ldlt().solve(cross.transpose()).transpose();
}

}  // namespace

Matrix riccati_residual(const Model& mh, const Matrix& P) {
  check_dims(mh);
  const Matrix innov = mh.C * P * mh.C.transpose() + mh.R;
  const Matrix cross = mh.A * P * mh.C.transpose() + mh.K * mh.R;
  const Matrix rhs = mh.A * P * mh.A.transpose() + mh.K * mh.R * mh.K.transpose() -
                     cross * innov.ldlt().solve(cross.transpose());
  return P - rhs;
}

CeResult ce_synthesize(const Model& mh) {
  check_dims(mh);
  const Index n = mh.n();
  const Matrix F = mh.closed_loop();

  CeResult out;
  const double rho_f = spectral_radius(F);
  if (rho_f < 1.0 - kMarginalTolerance) {
    out.P = Matrix::Zero(n, n);
    out.L = mh.K;
    out.closed_loop_rho = rho_f;
    out.branch = CeBranch::StableTrivial;
    return out;
  }

  Eigen::EigenSolver<Matrix> es(F, false);
  for (Index i = 0; i < n; ++i) {
    if (std::abs(std::abs(es.eigenvalues()(i)) - 1.0) <= 1e-6)
      throw Error("no stabilizing solution: A - KC has an eigenvalue on the unit circle");
  }

  Matrix P = Matrix::Identity(n, n);
  if (spectral_radius(mh.A) < 1.0) {
    Matrix gamma = lyapunov_solve(mh.A, mh.K * mh.R * mh.K.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> ges(gamma, Eigen::EigenvaluesOnly);
    if (ges.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, ges.eigenvalues().maxCoeff()))
      P = std::move(gamma);
  }

  constexpr int kMaxIterations = 100000;
  Matrix next(n, n);
  double step = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    const Matrix FP = F * P;
    const Matrix innov = mh.C * P * mh.C.transpose() + mh.R;
    const Matrix FPCt = FP * mh.C.transpose();
    next = FP * F.transpose() - FPCt * innov.ldlt().solve(FPCt.transpose());
    next = 0.5 * (next + next.transpose());
    step = (next - P).norm();
    const bool done = step <= 1e-10 * (1.0 + P.norm());
    P.swap(next);
    if (done) break;
  }
  if (it == kMaxIterations) {
    std::ostringstream os;
    os << "Riccati iteration did not converge after " << kMaxIterations
       << " steps (last step " << step << ")";
    throw Error(os.str());
  }

  out.P = P;
  out.L = correlation_gain(mh, P);
  out.closed_loop_rho = spectral_radius(mh.A - out.L * mh.C);
  out.branch = CeBranch::UnstableSolved;
  out.iterations = it + 1;
  if (!(out.closed_loop_rho < 1.0 - kMarginalTolerance))
    throw Error("no stabilizing solution: Riccati limit does not stabilize A - LC");
  return out;
}

FirResponse gain_response(const Model& mh, const Matrix& L, int horizon) {
  check_dims(mh);
  if (horizon < 1) throw Error("response horizon must be >= 1");
  const Matrix M = mh.A - L * mh.C;
  FirResponse r;
  r.phi_w = fir_impulse(M, Matrix::Identity(mh.n(), mh.n()), horizon);
  r.phi_v.reserve(r.phi_w.size());
  for (const Matrix& w : r.phi_w) r.phi_v.push_back(-w * L);
  return r;
}

double response_objective(const FirResponse& r, const Matrix& K) {
  double s = 0.0;
  for (int t = 0; t < r.horizon(); ++t) s += (r.phi_w[t] * K + r.phi_v[t]).squaredNorm();
  return std::sqrt(s);
}

double response_norm(const FirResponse& r) {
  double s = 0.0;
  for (int t = 0; t < r.horizon(); ++t) s += r.phi_w[t].squaredNorm() + r.phi_v[t].squaredNorm();
  return std::sqrt(s);
}

Matrix terminal_residual(const FirResponse& r, const Matrix& A, const Matrix& C) {
  if (r.horizon() < 1) throw Error("empty response");
  return r.phi_w.back() * A + r.phi_v.back() * C;
}

double recursion_residual(const FirResponse& r, const Matrix& A, const Matrix& C) {
  if (r.horizon() < 1) throw Error("empty response");
  double worst = (r.phi_w[0] - Matrix::Identity(A.rows(), A.cols())).norm();
  for (int t = 0; t + 1 < r.horizon(); ++t)
    worst = std::max(worst, (r.phi_w[t + 1] - r.phi_w[t] * A - r.phi_v[t] * C).norm());
  return worst;
}

namespace {

// Stacked finite-horizon problem in X = [Phi_v,1 ... Phi_v,T] (n x Tm):
//   [Phi_w,1 ... Phi_w,T] = W0 + X M
//   [Phi_w,t K + Phi_v,t]_t = A0 + X F
//   Phi_w,T A + Phi_v,T C = d + X h
class SlsProblem {
 public:
  SlsProblem(const Model& mh, int T, TerminalCondition terminal)
      : n_(mh.n()), m_(mh.m()), T_(T), terminal_(terminal) {
    std::vector<Matrix> powers;  // A^0 .. A^T
    powers.reserve(static_cast<std::size_t>(T) + 1);
    powers.push_back(Matrix::Identity(n_, n_));
    for (int t = 1; t <= T; ++t) powers.push_back(powers.back() * mh.A);

    std::vector<Matrix> markov;  // C A^j, j = 0..T-1
    markov.reserve(static_cast<std::size_t>(T));
    for (int j = 0; j < T; ++j) markov.push_back(mh.C * powers[static_cast<std::size_t>(j)]);

    W0_.resize(n_, T * n_);
    for (int t = 0; t < T; ++t) W0_.middleCols(t * n_, n_) = powers[static_cast<std::size_t>(t)];
    M_ = Matrix::Zero(T * m_, T * n_);
    for (int s = 0; s < T; ++s)
      for (int t = s + 1; t < T; ++t)
        M_.block(s * m_, t * n_, m_, n_) = markov[static_cast<std::size_t>(t - 1 - s)];
    h_.resize(T * m_, n_);
    for (int s = 0; s < T; ++s)
      h_.middleRows(s * m_, m_) = markov[static_cast<std::size_t>(T - 1 - s)];
    d_ = powers.back();

    Matrix MK(T * m_, T * m_);
    for (int t = 0; t < T; ++t) MK.middleCols(t * m_, m_) = M_.middleCols(t * n_, n_) * mh.K;
    A0_.resize(n_, T * m_);
    for (int t = 0; t < T; ++t) A0_.middleCols(t * m_, m_) = W0_.middleCols(t * n_, n_) * mh.K;
    F_ = MK + Matrix::Identity(T * m_, T * m_);
    FFt_ = F_ * F_.transpose();
    Q_ = M_ * M_.transpose() + Matrix::Identity(T * m_, T * m_);
    A0Ft_ = A0_ * F_.transpose();
    W0Mt_ = W0_ * M_.transpose();
  }

  // Minimiser of ||A0 + XF||^2 + lambda g(X), or of g(X) alone when
  // `constraint_only` is set. g(X) = ||W0 + XM||^2 + ||X||^2.
  Matrix solve(double lambda, bool constraint_only = false) const {
    Matrix H = constraint_only ? Q_ : Matrix(FFt_ + lambda * Q_);
    Matrix B = constraint_only ? W0Mt_ : Matrix(A0Ft_ + lambda * W0Mt_);
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) throw Error("SLS subproblem is not positive definite");
    Matrix X = -llt.solve(B.transpose()).transpose();
    if (terminal_ == TerminalCondition::Free) return X;

    // X = (-B - Lambda h^T) H^{-1} with Lambda chosen so that X h = -d.
    const Matrix Y = llt.solve(h_);
    const Matrix S = h_.transpose() * Y;
    Eigen::LDLT<Matrix> sdl(S);
    Eigen::SelfAdjointEigenSolver<Matrix> ses(S, Eigen::EigenvaluesOnly);
    if (!(ses.eigenvalues().minCoeff() > 1e-13 * ses.eigenvalues().maxCoeff()))
      throw Error("terminal condition infeasible: estimated model is not observable over the horizon");
    const Matrix rhs = d_ + X * h_;  // d - B H^{-1} h
    const Matrix Lambda = sdl.solve(rhs.transpose()).transpose();
    X.noalias() -= Lambda * Y.transpose();
    return X;
  }

  double constraint(const Matrix& X) const {
    return std::sqrt((W0_ + X * M_).squaredNorm() + X.squaredNorm());
  }
  double objective(const Matrix& X) const { return (A0_ + X * F_).norm(); }

  FirResponse response(const Matrix& X, const Matrix& A, const Matrix& C) const {
    FirResponse r;
    r.phi_w.reserve(static_cast<std::size_t>(T_));
    r.phi_v.reserve(static_cast<std::size_t>(T_));
    r.phi_w.push_back(Matrix::Identity(n_, n_));
    for (int t = 0; t < T_; ++t) {
      r.phi_v.push_back(X.middleCols(t * m_, m_));
      if (t + 1 < T_) r.phi_w.push_back(r.phi_w.back() * A + r.phi_v.back() * C);
    }
    return r;
  }

 private:
  Index n_, m_;
  int T_;
  TerminalCondition terminal_;
  Matrix W0_, M_, h_, d_, A0_, F_, FFt_, Q_, A0Ft_, W0Mt_;
};

}  // namespace

SlsResult sls_synthesize(const Model& mh, double c_reg, int horizon, const SlsOptions& options) {
  check_dims(mh);
  if (!(c_reg > 0.0) || !std::isfinite(c_reg)) throw Error("regularization C must be positive");
  if (horizon < 2) throw Error("SLS horizon must be >= 2");

  const SlsProblem problem(mh, horizon, options.terminal);
  const double accept = c_reg * (1.0 + 1e-6);

  SlsResult out;
  Matrix X = problem.solve(0.0);
  double c = problem.constraint(X);
  if (c > c_reg) {
    const Matrix X_min = problem.solve(1.0, true);
    const double c_min = problem.constraint(X_min);
    if (c_min > accept) {
      std::ostringstream os;
      os << "regularization too tight, increase C: smallest achievable response norm is " << c_min
         << " > " << c_reg << " (robust feasibility asks for C >= 2(1+||K||) ||(zI-A+KC)^{-1}||_H2)";
      throw Error(os.str());
    }
    out.constraint_active = true;

    double lo = 0.0;
    double hi = 1.0;
    Matrix X_hi = problem.solve(hi);
    double c_hi = problem.constraint(X_hi);
    int doublings = 0;
    while (c_hi > c_reg && doublings < 200) {
      lo = hi;
      hi *= 2.0;
      X_hi = problem.solve(hi);
      c_hi = problem.constraint(X_hi);
      ++doublings;
    }
    if (c_hi > c_reg) {
      // Only the constraint minimiser is feasible (C at the feasibility boundary).
      X = X_min;
      c = c_min;
      out.lambda = std::numeric_limits<double>::infinity();
    } else {
      for (int it = 0; it < options.max_bisections; ++it) {
        if (hi - lo <= 1e-14 * hi || c_reg - c_hi <= 1e-12 * c_reg) break;
        const double mid = 0.5 * (lo + hi);
        Matrix X_mid = problem.solve(mid);
        const double c_mid = problem.constraint(X_mid);
        if (c_mid > c_reg) {
          lo = mid;
        } else {
          hi = mid;
          X_hi = std::move(X_mid);
          c_hi = c_mid;
        }
      }
      X = std::move(X_hi);
      c = c_hi;
      out.lambda = hi;
    }
  }

  out.response = problem.response(X, mh.A, mh.C);
  out.filter.coeffs.reserve(static_cast<std::size_t>(horizon));
  for (const Matrix& v : out.response.phi_v) out.filter.coeffs.push_back(-v);
  out.filter.objective_value = problem.objective(X);
  out.filter.constraint_norm = c;
  out.tail_residual = terminal_residual(out.response, mh.A, mh.C).norm();
  return out;
}

double default_creg(const Model& mh, int horizon) {
  const CeResult ce = ce_synthesize(mh);
  const FirResponse r = gain_response(mh, ce.L, horizon);
  return 2.0 * (1.0 + spectral_norm(mh.K)) * response_norm(r);
}

double ParameterErrors::max_akc() const { return std::max({a, c, k}); }

namespace {

void check_errors(const ParameterErrors& eps) {
  if (!(eps.a >= 0.0 && eps.c >= 0.0 && eps.k >= 0.0 && eps.r >= 0.0))
    throw Error("parameter errors must be non-negative");
}

}  // namespace

ConditionCheck check_ce_robustness(const Model& truth, const ParameterErrors& eps, double rho) {
  check_dims(truth);
  check_errors(eps);
  const Matrix F = truth.closed_loop();
  const double rho_f = spectral_radius(F);
  if (!(rho < 1.0) || !(rho > 0.0) || rho < rho_f * (1.0 - kMarginalTolerance))
    throw Error("rho out of range: need rho(A-KC) <= rho < 1");
  const double tau = tau_decay(F, rho);
  const double normK = spectral_norm(truth.K);
  const double normC = spectral_norm(truth.C);
  ConditionCheck out;
  out.lhs = 2.0 * tau * (eps.a + eps.c * (normK + eps.k) + eps.k * normC);
  out.rhs = 1.0 - rho;
  out.margin = out.rhs - out.lhs;
  out.satisfied = out.lhs <= out.rhs;
  return out;
}

FeasibilityCheck check_robust_feasibility(const Model& truth, const ParameterErrors& eps,
                                          double c_reg) {
  check_dims(truth);
  check_errors(eps);
  const Matrix F = truth.closed_loop();
  const Index n = truth.n();
  const Matrix I = Matrix::Identity(n, n);
  const double hinf = hinf_norm(F, I, I, Matrix::Zero(n, n));
  const double h2 = h2_norm(F, I, I);
  const double normK = spectral_norm(truth.K);

  FeasibilityCheck out;
  out.lhs = (eps.a + eps.c * normK) * hinf;
  out.rhs = 0.5;
  out.creg_required = 2.0 * (1.0 + normK) * h2;
  out.perturbation_ok = out.lhs <= out.rhs;
  out.regularization_ok = c_reg >= out.creg_required;
  out.satisfied = out.perturbation_ok && out.regularization_ok;
  out.margin = std::min(out.rhs - out.lhs, c_reg - out.creg_required);
  return out;
}

}  // namespace kflearn
