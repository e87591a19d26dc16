#include <doctest.h>

#include <kflearn/experiments.hpp>
#include <kflearn/synthesis.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace kflearn;

namespace {

Model scalar_model(double a, double c, double k, double r) {
  Model md;
  md.A = Matrix::Constant(1, 1, a);
  md.C = Matrix::Constant(1, 1, c);
  md.K = Matrix::Constant(1, 1, k);
  md.R = Matrix::Constant(1, 1, r);
  return md;
}

}  // namespace

TEST_SUITE("synthesis") {

TEST_CASE("CE gain is K^ whenever A^ - K^C^ is stable") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const Index n = 1 + i % 3, m = 1 + i % 2;
    Model md;
    md.C = oracle::gaussian(rng, m, n);
    md.K = oracle::gaussian(rng, n, m);
    md.A = oracle::with_radius(rng, n, 0.9) + md.K * md.C;  // A itself may be unstable
    md.R = Matrix::Identity(m, m);
    const CeResult r = ce_synthesize(md);
    CHECK(r.branch == CeBranch::StableTrivial);
    CHECK(r.P.isZero(0.0));
    CHECK(r.L == md.K);
    CHECK(r.closed_loop_rho < 1.0);
  }
}

TEST_CASE("CE scalar unstable case") {
  const Model md = scalar_model(2.0, 1.0, 0.0, 1.0);
  const CeResult r = ce_synthesize(md);
  CHECK(r.branch == CeBranch::UnstableSolved);
  const double p = oracle::scalar_riccati(2.0, 1.0, 0.0, 1.0);
  CHECK(p == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(r.P(0, 0) - p) <= 1e-8 * (1.0 + p));
  CHECK(r.L(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(r.closed_loop_rho == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("CE random scalar unstable cases against the root finder") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> ua(1.05, 3.0), uc(0.3, 2.0), uk(-0.5, 0.5), ur(0.2, 3.0);
  for (int i = 0; i < 20; ++i) {
    const double a = ua(rng), c = uc(rng), k = uk(rng), r = ur(rng);
    if (std::abs(a - k * c) < 1.01) continue;
    const CeResult res = ce_synthesize(scalar_model(a, c, k, r));
    const double p = oracle::scalar_riccati(a, c, k, r);
    CHECK(std::abs(res.P(0, 0) - p) <= 1e-8 * (1.0 + p));
    CHECK(res.closed_loop_rho < 1.0);
  }
}

TEST_CASE("CE rejects unit-circle eigenvalues") {
  Model md;
  const double th = 0.7;
  md.A.resize(2, 2);
  md.A << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  md.C = Matrix::Zero(1, 2);
  md.C(0, 0) = 1.0;
  md.K = Matrix::Zero(2, 1);
  md.R = Matrix::Identity(1, 1);
  CHECK_THROWS_WITH(ce_synthesize(md), doctest::Contains("no stabilizing solution"));
}

TEST_CASE("CE fixed point on unstable multivariable models") {
  std::mt19937_64 rng(23);
  int tested = 0;
  while (tested < 10) {
    Model md = oracle::random_admissible(rng, 3, 1 + tested % 2, 0.9);
    md.A = oracle::with_radius(rng, 3, 1.4);
    const double rk = spectral_radius(md.closed_loop());
    if (rk < 1.05) continue;
    const CeResult r = ce_synthesize(md);
    CHECK(r.branch == CeBranch::UnstableSolved);
    CHECK(riccati_residual(md, r.P).norm() <= 1e-8 * (1.0 + r.P.norm()));
    CHECK(r.closed_loop_rho < 1.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r.P).eigenvalues().minCoeff() >= -1e-9);
    ++tested;
  }
}

TEST_CASE("gain response and diagnostics") {
  const Model md = reference_system();
  const FirResponse r = gain_response(md, md.K, 30);
  CHECK(r.horizon() == 30);
  CHECK(r.phi_w[0] == Matrix::Identity(3, 3));
  CHECK(recursion_residual(r, md.A, md.C) < 1e-12);
  CHECK(response_objective(r, md.K) < 1e-12);
  const Matrix F = md.closed_loop();
  Matrix F30 = Matrix::Identity(3, 3);
  for (int i = 0; i < 30; ++i) F30 = F30 * F;
  CHECK((terminal_residual(r, md.A, md.C) - F30).norm() < 1e-14);
}

TEST_CASE("SLS free terminal matches the projected-gradient oracle") {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 12; ++i) {
    const oracle::SlsCase c = oracle::random_sls_case(rng, false);
    const auto cmp = oracle::compare_sls(c, TerminalCondition::Free);
    INFO("n=", c.model.n(), " m=", c.model.m(), " T=", c.T, " lib=", cmp.lib_objective, " pg=", cmp.pg_objective,
         " c=", cmp.lib_constraint, "/", c.c_reg);
    CHECK(cmp.within);
    CHECK(cmp.constraint_ok);
    CHECK(cmp.recursion <= 1e-9);
  }
}

TEST_CASE("SLS FIR terminal matches the projected-gradient oracle") {
  std::mt19937_64 rng(25);
  for (int i = 0; i < 12; ++i) {
    const oracle::SlsCase c = oracle::random_sls_case(rng, true);
    const auto cmp = oracle::compare_sls(c, TerminalCondition::Fir);
    INFO("n=", c.model.n(), " m=", c.model.m(), " T=", c.T, " lib=", cmp.lib_objective, " pg=", cmp.pg_objective,
         " c=", cmp.lib_constraint, "/", c.c_reg);
    CHECK(cmp.within);
    CHECK(cmp.constraint_ok);
    CHECK(cmp.recursion <= 1e-9);
    CHECK(cmp.terminal <= 1e-9);
  }
}

TEST_CASE("SLS on a stable estimate with large C returns the CE responses") {
  const Model md = reference_system();
  SlsOptions free;
  free.terminal = TerminalCondition::Free;
  const SlsResult r = sls_synthesize(md, 1e3, 30, free);
  CHECK_FALSE(r.constraint_active);
  CHECK(r.filter.objective_value <= 1e-8);
  const FirResponse ce = gain_response(md, md.K, 30);
  for (int t = 0; t < 30; ++t) CHECK((r.response.phi_v[t] - ce.phi_v[t]).norm() < 1e-8);

  const SlsResult fir = sls_synthesize(md, 1e3, 30);
  CHECK(fir.tail_residual < 1e-9);
  // terminal correction costs about the size of the dropped tail
  CHECK(fir.filter.objective_value <= 1e-8 + 10.0 * terminal_residual(ce, md.A, md.C).norm());
}

TEST_CASE("SLS decoupled case A = 0, K = 0") {
  Model md;
  md.A = Matrix::Zero(2, 2);
  md.C = Matrix::Identity(1, 2);
  md.K = Matrix::Zero(2, 1);
  md.R = Matrix::Identity(1, 1);
  SlsOptions free;
  free.terminal = TerminalCondition::Free;
  const SlsResult r = sls_synthesize(md, 10.0, 5, free);
  CHECK(r.filter.objective_value < 1e-12);
  CHECK(r.response.phi_w[0] == Matrix::Identity(2, 2));
  for (int t = 1; t < 5; ++t) CHECK(r.response.phi_w[t].norm() < 1e-12);
  for (const Matrix& v : r.response.phi_v) CHECK(v.norm() < 1e-12);
}

TEST_CASE("SLS active constraint sits on the boundary") {
  const Model md = reference_system();
  const oracle::SlsProbe pr = oracle::probe_sls(md, 30);
  const double c_min = oracle::projected_gradient(pr, 1e300, false, 1).min_constraint;
  const double c_free = oracle::unconstrained_constraint(pr, false);
  REQUIRE(c_min < c_free);
  const double c_reg = 0.5 * (c_min + c_free);
  SlsOptions free;
  free.terminal = TerminalCondition::Free;
  const SlsResult r = sls_synthesize(md, c_reg, 30, free);
  CHECK(r.constraint_active);
  CHECK(std::abs(r.filter.constraint_norm - c_reg) <= 1e-9 * c_reg);
  CHECK(r.filter.objective_value > 0.0);
  CHECK_THROWS_WITH(sls_synthesize(md, 0.99 * c_min, 30, free), doctest::Contains("regularization too tight"));
}

TEST_CASE("SLS objective is non-increasing in C") {
  std::mt19937_64 rng(26);
  for (int inst = 0; inst < 3; ++inst) {
    const oracle::SlsCase c = oracle::random_sls_case(rng, inst % 2 == 0);
    const TerminalCondition tc = inst % 2 == 0 ? TerminalCondition::Fir : TerminalCondition::Free;
    SlsOptions o;
    o.terminal = tc;
    double prev = std::numeric_limits<double>::infinity();
    for (double scale : {1.0, 1.2, 1.5, 2.0, 4.0, 10.0}) {
      const SlsResult r = sls_synthesize(c.model, c.c_reg * scale, c.T, o);
      CHECK(r.filter.objective_value <= prev * (1.0 + 1e-7) + 1e-12);
      prev = r.filter.objective_value;
    }
  }
}

TEST_CASE("SLS infeasible regularization") {
  const Model md = reference_system();
  CHECK_THROWS_WITH(sls_synthesize(md, 0.5, 30), doctest::Contains("regularization too tight, increase C"));
  CHECK_THROWS(sls_synthesize(md, -1.0, 30));
  CHECK_THROWS(sls_synthesize(md, 10.0, 1));
}

TEST_CASE("SLS coefficients are the negated Phi_v") {
  const SlsResult r = sls_synthesize(reference_system(), 10.0, 30);
  REQUIRE(r.filter.coeffs.size() == 30);
  for (int t = 0; t < 30; ++t) CHECK(r.filter.coeffs[t] == -r.response.phi_v[t]);
  CHECK(r.filter.constraint_norm <= 10.0 * (1.0 + 1e-6));
  CHECK(r.filter.objective_value >= 0.0);
}

TEST_CASE("default C") {
  const Model md = reference_system();
  const double c = default_creg(md, 30);
  CHECK(c == doctest::Approx(2.0 * (1.0 + spectral_norm(md.K)) * response_norm(gain_response(md, md.K, 30))));
}

TEST_CASE("CE robustness condition") {
  const Model md = reference_system();
  const ConditionCheck zero = check_ce_robustness(md, {}, 0.9);
  CHECK(zero.satisfied);
  CHECK(zero.margin == doctest::Approx(0.1));
  CHECK_FALSE(check_ce_robustness(md, {10.0, 10.0, 10.0, 0.0}, 0.9).satisfied);
  CHECK_THROWS_WITH(check_ce_robustness(md, {}, 0.2), doctest::Contains("rho out of range"));
  CHECK_THROWS(check_ce_robustness(md, {}, 1.0));

  const double rho = 0.99, e = 0.01;
  const double tau = oracle::tau_powering(md.closed_loop(), rho, 2000);
  const double nk = md.K.norm(), nc = 1.0;  // single column / row: spectral = Euclidean
  const double lhs = 2.0 * tau * (e + e * (nk + e) + e * nc);
  const ConditionCheck c = check_ce_robustness(md, {e, e, e, 0.0}, rho);
  CHECK(c.lhs == doctest::Approx(lhs).epsilon(1e-10));
  CHECK(c.rhs == doctest::Approx(1.0 - rho));
  CHECK(c.satisfied == (lhs <= 1.0 - rho));
}

TEST_CASE("robust feasibility condition") {
  const Model md = reference_system();
  CHECK(check_robust_feasibility(md, {}, 1e6).satisfied);
  CHECK_FALSE(check_robust_feasibility(md, {}, 0.0).satisfied);
  const Index n = 3;
  oracle::StateSpace s{md.closed_loop(), Matrix::Identity(n, n), Matrix::Identity(n, n), Matrix::Zero(n, n)};
  const double hinf = oracle::hinf_grid(s, 1 << 16);
  const double h2 = oracle::h2_impulse(s, 2000);
  const FeasibilityCheck f = check_robust_feasibility(md, {0.01, 0.01, 0.0, 0.0}, 10.0);
  CHECK(f.creg_required == doctest::Approx(2.0 * (1.0 + md.K.norm()) * h2).epsilon(1e-8));
  CHECK(f.lhs == doctest::Approx((0.01 + 0.01 * md.K.norm()) * hinf).epsilon(1e-4));
  CHECK(f.regularization_ok == (10.0 >= f.creg_required));
}

TEST_CASE("mode parsing") {
  CHECK(parse_filter_mode("ce") == FilterMode::Ce);
  CHECK(parse_filter_mode("robust") == FilterMode::Robust);
  CHECK_THROWS_AS(parse_filter_mode("kalman"), ConfigError);
  CHECK(parse_terminal(to_string(TerminalCondition::Free)) == TerminalCondition::Free);
}

}  // TEST_SUITE
