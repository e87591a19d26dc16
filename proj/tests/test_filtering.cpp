#include <doctest.h>

#include <kflearn/experiments.hpp>
#include <kflearn/filtering.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace kflearn;

namespace {

// Error impulse of x - sum_t g_t y_{k-t} driven by e, by direct convolution.
double fir_error_oracle(const Model& truth, const std::vector<Matrix>& g, int terms) {
  const Index n = truth.n(), m = truth.m();
  std::vector<Matrix> hx(terms + 1, Matrix::Zero(n, m)), hy(terms + 1, Matrix::Zero(m, m));
  hy[0] = Matrix::Identity(m, m);
  Matrix p = truth.K;
  for (int j = 1; j <= terms; ++j) {
    hx[j] = p;
    hy[j] = truth.C * p;
    p = truth.A * p;
  }
  double sq = 0.0;
  for (int j = 1; j <= terms; ++j) {
    Matrix h = hx[j];
    for (int t = 1; t <= std::min<int>(j, static_cast<int>(g.size())); ++t) h -= g[t - 1] * hy[j - t];
    sq += (h * truth.R * h.transpose()).trace();
  }
  return std::sqrt(sq);
}

// Stacked [x; x~] driven by e, with x~ the static predictor on model_hat.
double ce_error_oracle(const Model& truth, const Model& mh, const Matrix& L, int terms) {
  const Index n = truth.n();
  Matrix M = Matrix::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = truth.A;
  M.bottomLeftCorner(n, n) = L * truth.C;
  M.bottomRightCorner(n, n) = mh.A - L * mh.C;
  Matrix B(2 * n, truth.m());
  B << truth.K, L;
  const Matrix X = oracle::lyapunov_series(M, B * truth.R * B.transpose(), terms);
  Matrix D(n, 2 * n);
  D << Matrix::Identity(n, n), -Matrix::Identity(n, n);
  return std::sqrt((D * X * D.transpose()).trace());
}

Model perturbed(const Model& md, double scale, std::mt19937_64& rng) {
  Model out = md;
  out.A += scale * oracle::gaussian(rng, md.n(), md.n());
  out.C += scale * oracle::gaussian(rng, md.m(), md.n());
  out.K += scale * oracle::gaussian(rng, md.n(), md.m());
  return out;
}

}  // namespace

TEST_SUITE("filtering") {

TEST_CASE("CE filter with the true gain reproduces the state") {
  const Model md = reference_system();
  const Trajectory tr = simulate(md, 5000, 3);
  const FilterSpec spec = FilterSpec::ce(md, md.K);
  const Matrix xt = run_filter(spec, tr);
  CHECK((xt - *tr.x).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + tr.x->cwiseAbs().maxCoeff()));
  CHECK(empirical_mse(spec, tr, std::nullopt, Basis::AlignedOriginal, 0).j_tilde < 1e-9);
}

TEST_CASE("FIR with g1 = I predicts the previous output") {
  Model md;
  md.A = Matrix::Constant(1, 1, 0.5);
  md.C = Matrix::Constant(1, 1, 1.0);
  md.K = Matrix::Constant(1, 1, 0.3);
  md.R = Matrix::Constant(1, 1, 1.0);
  const Trajectory tr = simulate(md, 50, 4);
  const Matrix xt = run_filter(FilterSpec::fir(md, {Matrix::Identity(1, 1)}), tr);
  CHECK(xt(0, 0) == 0.0);
  for (Index k = 1; k < 50; ++k) CHECK(xt(0, k) == tr.y(0, k - 1));
}

TEST_CASE("FIR convolution against a direct sum") {
  std::mt19937_64 rng(31);
  const Model md = oracle::random_admissible(rng, 2, 2);
  const Trajectory tr = simulate(md, 40, 5);
  std::vector<Matrix> g;
  for (int t = 0; t < 5; ++t) g.push_back(oracle::gaussian(rng, 2, 2));
  const Matrix xt = run_filter(FilterSpec::fir(md, g), tr);
  for (Index k = 0; k < 40; ++k) {
    Vector s = Vector::Zero(2);
    for (Index t = 1; t <= 5; ++t)
      if (k - t >= 0) s += g[t - 1] * tr.y.col(k - t);
    CHECK((xt.col(k) - s).norm() < 1e-12);
  }
}

TEST_CASE("filters are linear in the output sequence") {
  std::mt19937_64 rng(32);
  const Model md = oracle::random_admissible(rng, 3, 2);
  Trajectory a = simulate(md, 300, 6), b = simulate(md, 300, 7), s = a;
  s.y = 2.0 * a.y - 0.5 * b.y;
  const FilterSpec ce = FilterSpec::ce(md, md.K);
  const FilterSpec fir = FilterSpec::fir(md, gain_response(md, md.K, 20).phi_v);
  for (const FilterSpec* f : {&ce, &fir}) {
    const Matrix lhs = run_filter(*f, s);
    const Matrix rhs = 2.0 * run_filter(*f, a) - 0.5 * run_filter(*f, b);
    CHECK((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
  }
}

TEST_CASE("robust and CE filters on a shared trajectory") {
  const Model md = reference_system();
  const Trajectory tr = simulate(md, 20000, 8);
  const SlsResult sls = sls_synthesize(md, 10.0, 30);
  const FilterSpec fir = FilterSpec::fir(md, sls.filter.coeffs);
  const FilterSpec ce = FilterSpec::ce(md, md.K);
  const double j_fir = empirical_mse(fir, tr).j_tilde;
  const double j_ce = empirical_mse(ce, tr).j_tilde;
  CHECK(j_ce < 1e-9);
  CHECK(j_fir > j_ce);
  const double j_an = analytic_mse(md, md, filter_response(fir)).j_tilde;
  CHECK(j_fir == doctest::Approx(j_an).epsilon(0.05));
}

TEST_CASE("zero filter error is the state variance") {
  const Model md = reference_system();
  const FilterSpec zero = FilterSpec::fir(md, std::vector<Matrix>(30, Matrix::Zero(3, 1)));
  const AnalyticMse a = analytic_mse(md, md, filter_response(zero));
  CHECK(a.j_tilde * a.j_tilde == doctest::Approx(6089.6).epsilon(1e-4));
  const Trajectory tr = simulate(md, 200000, 9);
  CHECK(std::pow(empirical_mse(zero, tr).j_tilde, 2) == doctest::Approx(6089.6).epsilon(0.1));
}

TEST_CASE("exact model gives zero analytic error") {
  const Model md = reference_system();
  CHECK(analytic_mse(md, md, gain_response(md, md.K, 200)).j_tilde < 1e-8);
  const AnalyticMse fin = analytic_mse(md, md, filter_response(FilterSpec::ce(md, md.K)));
  CHECK(fin.j_tilde < 1e-8);
}

TEST_CASE("analytic FIR error against direct convolution") {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 8; ++rep) {
    const Model md = rep == 0 ? reference_system() : oracle::random_admissible(rng, 1 + rep % 3, 1 + rep % 2);
    const Model mh = perturbed(md, 0.02, rng);
    const SlsResult sls = sls_synthesize(mh, default_creg(mh, 20), 20);
    const FirResponse r = filter_response(FilterSpec::fir(mh, sls.filter.coeffs));
    const double oracle_value = fir_error_oracle(md, sls.filter.coeffs, 4000);
    const AnalyticMse a = analytic_mse(md, mh, r);
    CHECK(a.j_tilde == doctest::Approx(oracle_value).epsilon(1e-6));
    CHECK(a.tail_bound <= 1e-6 * (1.0 + a.j_tilde));
  }
}

TEST_CASE("scalar perturbed dynamics") {
  Model md;
  md.A = Matrix::Constant(1, 1, 0.9);
  md.C = Matrix::Constant(1, 1, 1.0);
  md.K = Matrix::Constant(1, 1, 0.5);
  md.R = Matrix::Constant(1, 1, 2.0);
  Model mh = md;
  mh.A(0, 0) = 0.85;
  const Matrix L = ce_synthesize(mh).L;
  const FilterSpec spec = FilterSpec::ce(mh, L);
  const double j = analytic_mse(md, mh, filter_response(spec)).j_tilde;
  CHECK(j == doctest::Approx(ce_error_oracle(md, mh, L, 2000)).epsilon(1e-6));
  // FIR form of the same predictor via the direct convolution
  std::vector<Matrix> g;
  for (const Matrix& v : filter_response(spec).phi_v) g.push_back(-v);
  CHECK(j == doctest::Approx(fir_error_oracle(md, g, 2000)).epsilon(1e-6));
}

TEST_CASE("analytic CE error on random perturbed models") {
  std::mt19937_64 rng(34);
  for (int rep = 0; rep < 8; ++rep) {
    const Model md = oracle::random_admissible(rng, 1 + rep % 3, 1 + rep % 2);
    const Model mh = perturbed(md, 0.03, rng);
    const CeResult ce = ce_synthesize(mh);
    if (ce.closed_loop_rho > 0.98) continue;  // neither truncation reaches 1e-6 there
    const FilterSpec spec = FilterSpec::ce(mh, ce.L);
    INFO("rho loop ", ce.closed_loop_rho, " rho A ", spectral_radius(md.A), " T ", filter_response(spec).horizon());
    CHECK(analytic_mse(md, mh, filter_response(spec)).j_tilde ==
          doctest::Approx(ce_error_oracle(md, mh, ce.L, 3000)).epsilon(1e-6));
  }
}

TEST_CASE("analytic and empirical errors agree on long trajectories") {
  std::mt19937_64 rng(35);
  const Model md = reference_system();
  const Model mh = perturbed(md, 0.01, rng);
  const FilterSpec spec = FilterSpec::ce(mh, ce_synthesize(mh).L);
  const double j_an = analytic_mse(md, mh, filter_response(spec)).j_tilde;
  const double j_emp = empirical_mse(spec, simulate(md, 200000, 10)).j_tilde;
  CHECK(j_emp == doctest::Approx(j_an).epsilon(0.05));
}

TEST_CASE("basis handling") {
  std::mt19937_64 rng(36);
  const Model md = oracle::random_admissible(rng, 3, 1);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(oracle::gaussian(rng, 3, 3)).householderQ();
  BasisAlignment al;  // identified -> reference: x = S x^
  al.S = Q;
  al.S_inv = Q.transpose();
  const Model mh{Q.transpose() * md.A * Q, md.C * Q, Q.transpose() * md.K, md.R};
  const FilterSpec spec = FilterSpec::ce(mh, mh.K);
  const Trajectory tr = simulate(md, 3000, 11);
  const double j1 = empirical_mse(spec, tr, al, Basis::AlignedOriginal).j_tilde;
  const double j2 = empirical_mse(spec, tr, al, Basis::Identified).j_tilde;
  CHECK(j1 < 1e-9);
  CHECK(j2 == doctest::Approx(j1).epsilon(1e-9));

  const Model back = to_reference_basis(mh, al);
  CHECK((back.A - md.A).norm() < 1e-12);
  CHECK((back.K - md.K).norm() < 1e-12);
  const FirResponse r = transform_response(gain_response(mh, mh.K, 10), al);
  const FirResponse ref = gain_response(md, md.K, 10);
  for (int t = 0; t < 10; ++t) {
    CHECK((r.phi_w[t] - ref.phi_w[t]).norm() < 1e-12);
    CHECK((r.phi_v[t] - ref.phi_v[t]).norm() < 1e-12);
  }
  CHECK(parse_basis(to_string(Basis::Identified)) == Basis::Identified);
  CHECK_THROWS_AS(parse_basis("diagonal"), ConfigError);
}

TEST_CASE("burn-in") {
  const Model md = reference_system();
  const Trajectory tr = simulate(md, 1000, 12);
  Model mh = md;
  mh.A(0, 0) = 0.7;
  const FilterSpec spec = FilterSpec::ce(mh, ce_synthesize(mh).L);
  const Matrix xt = run_filter(spec, tr);
  const MseReport r = empirical_mse(spec, tr, std::nullopt, Basis::AlignedOriginal, 100);
  CHECK(r.burn_in == 100);
  CHECK(r.horizon_used == 900);
  const double manual = std::sqrt((xt.rightCols(900) - tr.x->rightCols(900)).squaredNorm() / 900.0);
  CHECK(r.j_tilde == doctest::Approx(manual).epsilon(1e-12));
  CHECK(empirical_mse(xt, tr, std::nullopt, Basis::AlignedOriginal, 100).j_tilde == r.j_tilde);
  const Index b = default_burn_in(spec, 1000);
  CHECK(b <= 100);
  CHECK(b >= 1);
  CHECK(default_burn_in(spec, 1000000) >= b);
  CHECK_THROWS(empirical_mse(spec, tr, std::nullopt, Basis::AlignedOriginal, 1000));
}

TEST_CASE("filter contract errors") {
  const Model md = reference_system();
  Trajectory tr = simulate(md, 100, 13);
  tr.x.reset();
  CHECK_THROWS_WITH(empirical_mse(FilterSpec::ce(md, md.K), tr), doctest::Contains("states"));
  CHECK_THROWS(run_filter(FilterSpec::fir(md, {}), tr));
  Model unstable = md;
  unstable.A(0, 0) = 1.5;
  CHECK_THROWS_WITH(run_filter(FilterSpec::ce(unstable, Matrix::Zero(3, 1)), tr), doctest::Contains("unstable"));
  CHECK_THROWS_WITH(analytic_mse(unstable, md, gain_response(md, md.K, 5)), doctest::Contains("unstable A"));
}

}  // TEST_SUITE
