#include <kflearn/bounds.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace kflearn {

double BoundReport::input(std::string_view key) const {
  for (const auto& [k, v] : inputs)
    if (k == key) return v;
  throw Error("bound report has no input '" + std::string(key) + "'");
}

double BoundReport::component(std::string_view key) const {
  for (const auto& [k, v] : components)
    if (k == key) return v;
  throw Error("bound report has no component '" + std::string(key) + "'");
}

namespace {

// [R_A K; I] B_scale as a state-space quadruple.
struct Stacked {
  Matrix B, Cout, D;
};

Stacked innovation_system(const Model& truth, const Matrix& scale) {
  const Index n = truth.n();
  const Index m = truth.m();
  Stacked s;
  s.B = truth.K * scale;
  s.Cout = Matrix::Zero(n + m, n);
  s.Cout.topRows(n) = Matrix::Identity(n, n);
  s.D = Matrix::Zero(n + m, m);
  s.D.bottomRows(m) = scale;
  return s;
}

// n-th largest singular value, zero when M has fewer than n rows or columns.
double sigma_n(const Matrix& M, Index n) {
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues().size() < n ? 0.0 : svd.singularValues()(n - 1);
}

double sym_min_eig(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double pinv_norm(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, s(0));
  for (Index i = s.size() - 1; i >= 0; --i)
    if (s(i) > tol) return 1.0 / s(i);
  throw Error("matrix is numerically zero");
}

void require_stable(const Model& truth) {
  if (spectral_radius(truth.A) >= 1.0) throw Error("true model must satisfy rho(A) < 1");
}

void check_dims(const Model& m) {
  if (m.A.rows() != m.A.cols() || m.C.cols() != m.A.rows() || m.K.rows() != m.A.rows() ||
      m.K.cols() != m.C.rows() || m.R.rows() != m.C.rows() || m.R.cols() != m.C.rows())
    throw Error("model dimensions inconsistent");
}

constexpr std::size_t kMaxNoiseDim = 2048;

}  // namespace

double innovation_h2(const Model& truth) {
  check_dims(truth);
  const Stacked s = innovation_system(truth, symmetric_sqrt(truth.R));
  return h2_norm(truth.A, s.B, s.Cout, s.D);
}

double innovation_hinf_scaled(const Model& truth) {
  check_dims(truth);
  const Stacked s = innovation_system(truth, symmetric_sqrt(truth.R));
  return hinf_norm(truth.A, s.B, s.Cout, s.D);
}

double innovation_hinf(const Model& truth) {
  check_dims(truth);
  const Stacked s = innovation_system(truth, Matrix::Identity(truth.m(), truth.m()));
  return hinf_norm(truth.A, s.B, s.Cout, s.D);
}

BoundReport ce_suboptimality_bound(const Model& truth, const ParameterErrors& eps, double rho) {
  const ConditionCheck cond = check_ce_robustness(truth, eps, rho);
  require_stable(truth);
  const double tau = tau_decay(truth.closed_loop(), rho);
  const double normK = spectral_norm(truth.K);
  const double cbar = 2.0 * tau / (1.0 - rho) * (1.0 + normK + eps.k);
  const double h2 = innovation_h2(truth);
  const double e = eps.max_akc();

  BoundReport r;
  r.name = "ce_suboptimality";
  r.value = std::sqrt(3.0) * cbar * e * h2;
  r.condition_satisfied = cond.satisfied;
  r.inputs = {{"eps_a", eps.a}, {"eps_c", eps.c}, {"eps_k", eps.k}, {"eps_r", eps.r}, {"rho", rho}};
  r.components = {{"eps", e},           {"tau", tau},          {"norm_k", normK},
                  {"cbar", cbar},       {"h2_innovation", h2}, {"condition_lhs", cond.lhs},
                  {"condition_rhs", cond.rhs}};
  return r;
}

BoundReport robust_suboptimality_bound(const Model& truth, const ParameterErrors& eps,
                                       double c_reg) {
  if (!(c_reg >= 0.0)) throw Error("regularization C must be non-negative");
  require_stable(truth);
  const FeasibilityCheck cond = check_robust_feasibility(truth, eps, c_reg);
  const Index n = truth.n();
  const Matrix I = Matrix::Identity(n, n);
  const double hinf = innovation_hinf(truth);
  const double h2_loop = h2_norm(truth.closed_loop(), I, I);
  const double r_half = std::sqrt(spectral_norm(truth.R));
  const double e = eps.max_akc();

  BoundReport r;
  r.name = "robust_suboptimality";
  const double first = std::sqrt(3.0) * c_reg * e * hinf * r_half;
  const double second = 2.0 * e * h2_loop * r_half;
  r.value = first + second;
  r.condition_satisfied = cond.satisfied;
  r.inputs = {{"eps_a", eps.a}, {"eps_c", eps.c}, {"eps_k", eps.k}, {"eps_r", eps.r},
              {"creg", c_reg}};
  r.components = {{"eps", e},
                  {"hinf_innovation", hinf},
                  {"h2_closed_loop", h2_loop},
                  {"norm_r_half", r_half},
                  {"first_term", first},
                  {"second_term", second},
                  {"creg_required", cond.creg_required},
                  {"condition_lhs", cond.lhs}};
  return r;
}

Matrix innovation_noise_covariance(const Model& truth, int s) {
  check_dims(truth);
  if (static_cast<std::size_t>(s) * static_cast<std::size_t>(truth.m()) > kMaxNoiseDim)
    throw Error("noise covariance too large: m*s must not exceed 2048");
  const Matrix T = innovation_toeplitz(truth, s);
  Matrix blockR = Matrix::Zero(T.cols(), T.cols());
  const Index m = truth.m();
  for (int i = 0; i < s; ++i) blockR.block(i * m, i * m, m, m) = truth.R;
  return T * blockR * T.transpose();
}

BoundReport regression_error_bound(const Model& truth, const HankelConfig& cfg, Index samples,
                                   double delta) {
  cfg.validate();
  require_stable(truth);
  if (samples < 1) throw Error("sample count must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  const int p = cfg.past;
  const int f = cfg.future;
  const double m = static_cast<double>(truth.m());

  const Matrix sig_f = innovation_noise_covariance(truth, f);
  const Matrix sig_p = innovation_noise_covariance(truth, p);
  const double sig_p_min = sym_min_eig(sig_p);
  if (!(sig_p_min > 0.0)) throw Error("past noise covariance is singular");
  const double sig_f_norm = spectral_norm(sig_f);
  const Matrix gamma = lyapunov_solve(truth.A, truth.K * truth.R * truth.K.transpose());
  const Matrix O_p = observability_matrix(truth.A, truth.C, p);
  const Matrix O_f = observability_matrix(truth.A, truth.C, f);
  const double normOp = spectral_norm(O_p);

  const double kappa =
      4.0 / sig_p_min * (normOp * normOp * gamma.trace() + sig_p.trace()) + delta;
  const double c1 = std::sqrt(sig_f_norm / sig_p_min);
  const double c2 = 4.0 * spectral_norm(O_f) * pinv_norm(O_p);
  Matrix Fp = Matrix::Identity(truth.n(), truth.n());
  const Matrix F = truth.closed_loop();
  for (int i = 0; i < p; ++i) Fp = Fp * F;
  const double bias_norm = spectral_norm(Fp);

  const double N = static_cast<double>(samples);
  const double log_term = std::log(5.0 * f * kappa / delta);
  const double first = 8.0 * c1 * std::sqrt(f * m * p / N * std::max(0.0, log_term));
  const double second = c2 * bias_norm;

  BoundReport r;
  r.name = "regression_error";
  r.value = first + second;
  r.condition_satisfied = p >= f;
  r.inputs = {{"n_samples", N}, {"delta", delta}, {"past", double(p)}, {"future", double(f)}};
  r.components = {{"kappa", kappa},         {"c1", c1},
                  {"c2", c2},               {"bias_norm", bias_norm},
                  {"sigma_min_past", sig_p_min}, {"norm_sigma_future", sig_f_norm},
                  {"trace_gamma", gamma.trace()}, {"first_term", first},
                  {"second_term", second}};
  return r;
}

DeltaN delta_n(Index samples, int past, int m) {
  if (samples < 1 || past < 1 || m < 1) throw Error("delta_N needs N, p, m >= 1");
  const double a = std::log(2.0 * past * m);
  const double b = std::log(2.0 * (static_cast<double>(samples) + past - 1.0) * m);
  DeltaN d;
  d.log_value = -a * a * b * b;
  d.log10_value = d.log_value / std::log(10.0);
  d.value = std::exp(d.log_value);
  return d;
}

double ce_constant_at(const Model& truth, double rho) {
  const double tau = tau_decay(truth.closed_loop(), rho);
  return tau / (1.0 - rho) * (1.0 + spectral_norm(truth.K)) * innovation_h2(truth);
}

namespace {

struct Minimum {
  double x = 0.0;
  double value = 0.0;
};

Minimum golden_section(const std::function<double(double)>& fn, double lo, double hi) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo);
  double b = lo + ratio * (hi - lo);
  double fa = fn(a);
  double fb = fn(b);
  for (int it = 0; it < 100 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = fn(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = fn(b);
    }
  }
  return fa < fb ? Minimum{a, fa} : Minimum{b, fb};
}

}  // namespace

BoundReport end_to_end_constants(const Model& truth, const HankelConfig& cfg, FilterMode mode) {
  cfg.validate();
  check_dims(truth);
  require_stable(truth);
  const Matrix F = truth.closed_loop();
  const double rho_f = spectral_radius(F);
  if (rho_f >= 1.0 - 1e-4) throw Error("no spectral gap: rho(A-KC) >= 1 - 1e-4");
  if (cfg.future < 2) throw Error("C_ID needs f >= 2");
  const Index n = truth.n();
  const double normK = spectral_norm(truth.K);

  BoundReport r;
  r.name = mode == FilterMode::Ce ? "end_to_end_ce" : "end_to_end_robust";
  double c_kf = 0.0;
  if (mode == FilterMode::Ce) {
    const double lo = rho_f + 1e-4;
    const double hi = 1.0 - 1e-4;
    const Minimum linear = golden_section([&](double rho) { return ce_constant_at(truth, rho); },
                                          lo, hi);
    // Same search in s = log(1 - rho), which resolves the region near 1.
    const Minimum logged = golden_section(
        [&](double s) { return ce_constant_at(truth, 1.0 - std::exp(s)); }, std::log(1.0 - hi),
        std::log(1.0 - lo));
    Minimum best = linear.value <= logged.value ? linear : Minimum{1.0 - std::exp(logged.x), logged.value};
    bool grid_used = false;
    if (std::abs(linear.value - logged.value) > 0.01 * std::min(linear.value, logged.value)) {
      grid_used = true;
      constexpr int kGrid = 512;
      for (int i = 0; i < kGrid; ++i) {
        const double rho = lo + (hi - lo) * i / (kGrid - 1);
        const double v = ce_constant_at(truth, rho);
        if (v < best.value) best = {rho, v};
      }
    }
    c_kf = best.value;
    r.components.emplace_back("rho_star", best.x);
    r.components.emplace_back("grid_fallback", grid_used ? 1.0 : 0.0);
    r.components.emplace_back("h2_innovation", innovation_h2(truth));
  } else {
    const Matrix I = Matrix::Identity(n, n);
    const double h2_loop = h2_norm(F, I, I);
    const double hinf = innovation_hinf_scaled(truth);
    c_kf = h2_loop * (1.0 + normK) * hinf;
    r.components.emplace_back("h2_closed_loop", h2_loop);
    r.components.emplace_back("hinf_innovation", hinf);
  }

  const int p = cfg.past;
  const int f = cfg.future;
  const Matrix sig_f = innovation_noise_covariance(truth, f);
  const Matrix sig_p = innovation_noise_covariance(truth, p);
  const double sig_p_min = sym_min_eig(sig_p);
  if (!(sig_p_min > 0.0)) throw Error("past noise covariance is singular");
  const TrueHankel th = true_hankel(truth, cfg);
  const double sigma_n_G = sigma_n(th.G, n);
  const double sigma_n_O = sigma_n(observability_matrix(truth.A, truth.C, f - 1), n);
  if (!(sigma_n_G > 0.0) || !(sigma_n_O > 0.0)) throw Error("true model is not identifiable at these horizons");
  const double m = static_cast<double>(truth.m());
  const double c_id = std::sqrt(spectral_norm(sig_f) / sig_p_min) /
                      (sigma_n_O * std::sqrt(sigma_n_G)) * std::sqrt(f * m * p * double(n));

  r.value = c_kf * c_id;
  r.condition_satisfied = true;
  r.inputs = {{"past", double(p)}, {"future", double(f)}, {"rho_closed_loop", rho_f}};
  r.components.emplace_back("c_kf", c_kf);
  r.components.emplace_back("c_id", c_id);
  r.components.emplace_back("sigma_n_g", sigma_n_G);
  r.components.emplace_back("sigma_n_obs", sigma_n_O);
  r.components.emplace_back("norm_k", normK);
  return r;
}

}  // namespace kflearn
