#include <kflearn/lti.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

namespace kflearn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

void require_square(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) {
    std::ostringstream os;
    os << name << " must be square (got " << M.rows() << "x" << M.cols() << ")";
    throw Error(os.str());
  }
}

}  // namespace

void Model::validate() const {
  require_square(A, "A");
  const Index nn = A.rows();
  if (C.cols() != nn) throw Error("C must have n columns");
  const Index mm = C.rows();
  if (K.rows() != nn || K.cols() != mm) throw Error("K must be n x m");
  if (R.rows() != mm || R.cols() != mm) throw Error("R must be m x m");
  if (!(R - R.transpose()).isZero(1e-9 * (1.0 + R.norm())))
    throw Error("covariance not positive definite");
  Eigen::SelfAdjointEigenSolver<Matrix> es(R, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw Error("covariance not positive definite");
}

bool Model::admissible() const {
  return spectral_radius(A) < 1.0 && spectral_radius(closed_loop()) < 1.0;
}

Matrix covariance_sqrt(const Matrix& S) {
  require_square(S, "covariance");
  const Matrix sym = 0.5 * (S + S.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector& lambda = es.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() < -1e-10 * scale) throw Error("covariance not positive definite");
  return es.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Matrix symmetric_sqrt(const Matrix& S) {
  require_square(S, "matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Trajectory simulate(const Model& model, Index samples, std::uint64_t seed) {
  require(samples >= 1, "simulate needs at least one sample");
  require_square(model.A, "A");
  const Index n = model.n();
  const Index m = model.m();
  if (model.K.rows() != n || model.K.cols() != m || model.R.rows() != m)
    throw Error("model dimensions inconsistent");
  const Matrix noise_factor = covariance_sqrt(model.R);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Trajectory traj;
  traj.seed = seed;
  traj.y.resize(m, samples);
  traj.x = Matrix(n, samples);
  traj.e = Matrix(m, samples);
  Matrix& x = *traj.x;
  Matrix& e = *traj.e;

  Vector white(m);
  Vector state = Vector::Zero(n);
  Vector next(n);
  for (Index k = 0; k < samples; ++k) {
    for (Index i = 0; i < m; ++i) white(i) = gauss(rng);
    e.col(k).noalias() = noise_factor * white;
    x.col(k) = state;
    traj.y.col(k).noalias() = model.C * state;
    traj.y.col(k) += e.col(k);
    next.noalias() = model.A * state;
    next.noalias() += model.K * e.col(k);
    state.swap(next);
  }
  return traj;
}

Matrix lyapunov_solve(const Matrix& M, const Matrix& Q) {
  require_square(M, "M");
  if (Q.rows() != M.rows() || Q.cols() != M.cols()) throw Error("Q must match M");
  if (spectral_radius(M) >= 1.0) throw Error("unstable Lyapunov operator");

  // After k doublings X = sum_{j < 2^k} M^j Q (M^j)^T.
  Matrix X = Q;
  Matrix power = M;
  Matrix increment(M.rows(), M.cols());
  for (int k = 0; k < 64; ++k) {
    increment.noalias() = power * X * power.transpose();
    X += increment;
    if (increment.norm() <= 1e-17 * (1.0 + X.norm()) || power.isZero(0.0)) break;
    power = power * power;
    if (power.norm() < 1e-300) break;
  }
  return 0.5 * (X + X.transpose());
}

double spectral_radius(const Matrix& M) {
  require_square(M, "M");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

double tau_decay(const Matrix& M, double rho) {
  require_square(M, "M");
  const double rho_m = spectral_radius(M);
  if (!(rho > 0.0) || rho < rho_m * (1.0 - kMarginalTolerance))
    throw Error("decay rate not dominating");

  const Index n = M.rows();
  const Matrix scaled = M / rho;
  Matrix power = Matrix::Identity(n, n);
  Matrix next(n, n);
  double best = 1.0;  // t = 0
  double term = 1.0;
  int t = 0;
  int cutoff = 64;
  constexpr int kMaxCutoff = 1 << 14;
  for (;;) {
    while (t < cutoff) {
      next.noalias() = power * scaled;
      power.swap(next);
      ++t;
      term = spectral_norm(power);
      best = std::max(best, term);
    }
    if (term < 1e-3 * best || cutoff >= kMaxCutoff) break;
    cutoff *= 2;
  }
  return best;
}

double h2_norm(const Matrix& M, const Matrix& B, const Matrix& Cout) {
  return h2_norm(M, B, Cout, Matrix::Zero(Cout.rows(), B.cols()));
}

double h2_norm(const Matrix& M, const Matrix& B, const Matrix& Cout, const Matrix& D) {
  require_square(M, "M");
  if (B.rows() != M.rows() || Cout.cols() != M.cols()) throw Error("h2_norm: dimension mismatch");
  if (spectral_radius(M) >= 1.0) throw Error("unstable system: H2 norm undefined");
  const Matrix X = lyapunov_solve(M, B * B.transpose());
  const double strictly_proper = (Cout * X * Cout.transpose()).trace();
  return std::sqrt(std::max(0.0, strictly_proper) + D.squaredNorm());
}

namespace {

class FrequencyResponse {
 public:
  FrequencyResponse(const Matrix& M, const Matrix& B, const Matrix& Cout, const Matrix& D)
      : M_(M.cast<std::complex<double>>()),
        B_(B.cast<std::complex<double>>()),
        C_(Cout.cast<std::complex<double>>()),
        D_(D.cast<std::complex<double>>()) {}

  double gain(double theta) const {
    const Index n = M_.rows();
    Eigen::MatrixXcd G = D_;
    if (n > 0) {
      Eigen::MatrixXcd pencil = -M_;
      pencil.diagonal().array() += std::polar(1.0, theta);
      G += C_ * pencil.partialPivLu().solve(B_);
    }
    if (G.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G);
    return svd.singularValues()(0);
  }

 private:
  Eigen::MatrixXcd M_, B_, C_, D_;
};

}  // namespace

double hinf_norm(const Matrix& M, const Matrix& B, const Matrix& Cout, const Matrix& D) {
  require_square(M, "M");
  if (B.rows() != M.rows() || Cout.cols() != M.cols() || D.rows() != Cout.rows() ||
      D.cols() != B.cols())
    throw Error("hinf_norm: dimension mismatch");
  if (spectral_radius(M) >= 1.0) throw Error("unstable system: H-infinity norm undefined");

  const FrequencyResponse response(M, B, Cout, D);
  constexpr int kGrid = 4096;
  const double step = std::numbers::pi / (kGrid - 1);
  int arg = 0;
  double peak = -1.0;
  for (int j = 0; j < kGrid; ++j) {
    const double g = response.gain(j * step);
    if (g > peak) {
      peak = g;
      arg = j;
    }
  }

  // Golden-section search for the maximiser within the neighbouring cells.
  double lo = std::max(0, arg - 1) * step;
  double hi = std::min(kGrid - 1, arg + 1) * step;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo);
  double b = lo + ratio * (hi - lo);
  double fa = response.gain(a);
  double fb = response.gain(b);
  for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = response.gain(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = response.gain(b);
    }
  }
  return std::max({peak, fa, fb});
}

std::vector<Matrix> fir_impulse(const Matrix& M, const Matrix& B, int horizon) {
  require_square(M, "M");
  require(horizon >= 1, "fir_impulse needs horizon >= 1");
  if (B.rows() != M.rows()) throw Error("fir_impulse: dimension mismatch");
  std::vector<Matrix> coeffs;
  coeffs.reserve(static_cast<std::size_t>(horizon));
  coeffs.push_back(B);
  for (int t = 1; t < horizon; ++t) coeffs.push_back(M * coeffs.back());
  return coeffs;
}

SpectralReport spectral_report(const Matrix& M, const Matrix& B, const Matrix& Cout,
                               const Matrix& D, double rho) {
  SpectralReport report;
  report.rho = spectral_radius(M);
  report.tau = tau_decay(M, rho);
  report.h2 = h2_norm(M, B, Cout, D);
  report.hinf = hinf_norm(M, B, Cout, D);
  return report;
}

Matrix observability_matrix(const Matrix& A, const Matrix& C, int k) {
  require(k >= 1, "observability horizon must be >= 1");
  const Index m = C.rows();
  Matrix O(m * k, A.cols());
  Matrix block = C;
  for (int i = 0; i < k; ++i) {
    O.middleRows(i * m, m) = block;
    block = block * A;
  }
  return O;
}

}  // namespace kflearn
