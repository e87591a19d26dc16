#include <kflearn/sysid.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kflearn {

std::string_view to_string(Weighting w) {
  return w == Weighting::Identity ? "identity" : "moesp";
}

Weighting parse_weighting(std::string_view text) {
  if (text == "identity") return Weighting::Identity;
  if (text == "moesp") return Weighting::Moesp;
  throw ConfigError("unknown weighting '" + std::string(text) + "' (expected identity|moesp)");
}

void HankelConfig::validate() const {
  if (past < 1 || future < 1) throw Error("Hankel horizons must satisfy p >= 1 and f >= 1");
}

HankelData build_hankel_data(const Trajectory& traj, const HankelConfig& cfg,
                             std::optional<Index> columns) {
  cfg.validate();
  const Index m = traj.output_dim();
  const Index p = cfg.past;
  const Index f = cfg.future;
  const Index available = traj.length() - p - f + 1;
  const Index N = columns.value_or(available);
  if (N < 1 || traj.length() < N + p + f - 1) {
    std::ostringstream os;
    os << "insufficient samples: need N+p+f-1 = " << std::max<Index>(N, 1) + p + f - 1
       << " outputs, trajectory has " << traj.length();
    throw Error(os.str());
  }

  HankelData data;
  data.future.resize(m * f, N);
  data.past.resize(m * p, N);
  for (Index col = 0; col < N; ++col) {
    const Index k = col + p;
    for (Index i = 0; i < f; ++i) data.future.block(i * m, col, m, 1) = traj.y.col(k + i);
    for (Index i = 0; i < p; ++i) data.past.block(i * m, col, m, 1) = traj.y.col(k - p + i);
  }
  return data;
}

Matrix regress_hankel(const Matrix& future, const Matrix& past) {
  if (future.cols() != past.cols()) throw Error("regress_hankel: column count mismatch");
  const Matrix gram = past * past.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const double trace = gram.trace();
  if (!(trace > 0.0) || es.eigenvalues().minCoeff() <= 1e-10 * trace)
    throw Error("insufficient excitation / too few samples");
  const Matrix cross = past * future.transpose();  // (Y+ Y-*)^T
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw Error("insufficient excitation / too few samples");
  return llt.solve(cross).transpose();
}

Matrix reversed_controllability(const Model& model, int p) {
  if (p < 1) throw Error("controllability horizon must be >= 1");
  const Index n = model.n();
  const Index m = model.m();
  const Matrix F = model.closed_loop();
  Matrix Kp(n, m * p);
  Matrix block = model.K;
  for (int i = p - 1; i >= 0; --i) {
    Kp.middleCols(i * m, m) = block;
    block = F * block;
  }
  return Kp;
}

Matrix innovation_toeplitz(const Model& model, int s) {
  if (s < 1) throw Error("Toeplitz size must be >= 1");
  const Index m = model.m();
  Matrix T = Matrix::Zero(m * s, m * s);
  // Markov parameters C A^{d-1} K for lag d >= 1.
  std::vector<Matrix> markov(static_cast<std::size_t>(s));
  markov[0] = Matrix::Identity(m, m);
  Matrix AK = model.K;
  for (int d = 1; d < s; ++d) {
    markov[static_cast<std::size_t>(d)] = model.C * AK;
    AK = model.A * AK;
  }
  for (int i = 0; i < s; ++i)
    for (int j = 0; j <= i; ++j)
      T.block(i * m, j * m, m, m) = markov[static_cast<std::size_t>(i - j)];
  return T;
}

TrueHankel true_hankel(const Model& model, const HankelConfig& cfg) {
  cfg.validate();
  TrueHankel th;
  th.observability = observability_matrix(model.A, model.C, cfg.future);
  th.controllability = reversed_controllability(model, cfg.past);
  th.G = th.observability * th.controllability;
  return th;
}

namespace {

struct Weight {
  Matrix W;
  Matrix W_inv;
  Index rank;
};

Weight past_weight(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
  const Vector& lambda = es.eigenvalues();
  const double top = lambda.maxCoeff();
  if (!(top > 0.0)) throw Error("weighting matrix is singular");
  Vector root(lambda.size());
  Vector inv_root(lambda.size());
  Index rank = 0;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > 1e-12 * top) {
      root(i) = std::sqrt(lambda(i));
      inv_root(i) = 1.0 / root(i);
      ++rank;
    } else {
      root(i) = 0.0;
      inv_root(i) = 0.0;
    }
  }
  const Matrix& V = es.eigenvectors();
  return {V * root.asDiagonal() * V.transpose(), V * inv_root.asDiagonal() * V.transpose(), rank};
}

}  // namespace

Realization realize(const Matrix& g_hat, int order, Weighting weighting,
                    const std::optional<Matrix>& past_gram) {
  const Index cols = g_hat.cols();
  if (order < 1 || order > std::min(g_hat.rows(), cols))
    throw Error("order too large / rank collapse");

  Matrix W = Matrix::Identity(cols, cols);
  Matrix W_inv = Matrix::Identity(cols, cols);
  if (weighting == Weighting::Moesp) {
    if (!past_gram) throw Error("Moesp weighting needs the past-output Gram matrix");
    if (past_gram->rows() != cols || past_gram->cols() != cols)
      throw Error("past-output Gram matrix has the wrong size");
    Weight w = past_weight(*past_gram);
    if (w.rank < order) throw Error("weighting matrix is near-singular");
    W = std::move(w.W);
    W_inv = std::move(w.W_inv);
  }

  Eigen::JacobiSVD<Matrix> svd(g_hat * W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  if (!(sigma(order - 1) > 1e-12 * std::max(1.0, sigma(0))))
    throw Error("order too large / rank collapse");

  Matrix U = svd.matrixU().leftCols(order);
  Matrix V = svd.matrixV().leftCols(order);
  for (Index j = 0; j < order; ++j) {
    const double scale = U.col(j).cwiseAbs().maxCoeff();
    for (Index i = 0; i < U.rows(); ++i) {
      if (std::abs(U(i, j)) > 1e-12 * scale) {
        if (U(i, j) < 0.0) {
          U.col(j) *= -1.0;
          V.col(j) *= -1.0;
        }
        break;
      }
    }
  }

  const Vector root = sigma.head(order).cwiseSqrt();
  Realization r;
  r.observability = U * root.asDiagonal();
  r.controllability = root.asDiagonal() * V.transpose() * W_inv;
  r.singular_values = sigma;
  return r;
}

StateSpaceEstimate extract_params(const Matrix& observability, const Matrix& controllability,
                                  int m, int f, int p) {
  if (f < 2) throw Error("parameter extraction needs f >= 2");
  if (observability.rows() != static_cast<Index>(m) * f ||
      controllability.cols() != static_cast<Index>(m) * p)
    throw Error("extract_params: dimension mismatch");
  const Index n = observability.cols();
  const Index rows = static_cast<Index>(m) * (f - 1);
  const Matrix upper = observability.topRows(rows);
  const Matrix lower = observability.bottomRows(rows);

  Eigen::JacobiSVD<Matrix> svd(upper, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() < n || !(s(n - 1) > 1e-10)) throw Error("unobservable estimate");

  StateSpaceEstimate est;
  est.A = svd.solve(lower);
  est.C = observability.topRows(m);
  est.K = controllability.rightCols(m);
  return est;
}

Matrix estimate_R(const HankelData& data, const Matrix& g_hat, int m) {
  const Index N = data.columns();
  if (N < m + 1) throw Error("estimate_R needs at least m+1 regression columns");
  const Matrix residual = data.future.topRows(m) - g_hat.topRows(m) * data.past;
  const Vector mean = residual.rowwise().mean();
  const Matrix centered = residual.colwise() - mean;
  Matrix R = centered * centered.transpose() / static_cast<double>(N - 1);
  R = 0.5 * (R + R.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(R);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

Matrix estimate_R(const Trajectory& traj, const Matrix& g_hat, const HankelConfig& cfg) {
  return estimate_R(build_hankel_data(traj, cfg), g_hat, static_cast<int>(traj.output_dim()));
}

BasisAlignment align_basis(const Model& reference, const Matrix& observability, int f) {
  const Matrix O_f = observability_matrix(reference.A, reference.C, f);
  if (O_f.rows() != observability.rows() || O_f.cols() != observability.cols())
    throw Error("align_basis: observability matrices differ in shape");
  Eigen::JacobiSVD<Matrix> ref_svd(O_f, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& rs = ref_svd.singularValues();
  if (!(rs(rs.size() - 1) > 1e-12 * rs(0))) throw Error("reference model is unobservable");

  BasisAlignment out;
  out.S = ref_svd.solve(observability);
  Eigen::JacobiSVD<Matrix> s_svd(out.S);
  const Vector& ss = s_svd.singularValues();
  out.condition = ss(ss.size() - 1) > 0.0 ? ss(0) / ss(ss.size() - 1)
                                          : std::numeric_limits<double>::infinity();
  if (!(out.condition <= 1e8)) throw Error("basis alignment ill-conditioned");
  out.S_inv = out.S.inverse();
  return out;
}

IdentResult identify(const Trajectory& traj, const HankelConfig& cfg, int order) {
  const HankelData data = build_hankel_data(traj, cfg);
  const int m = static_cast<int>(traj.output_dim());

  IdentResult r;
  r.columns = data.columns();
  r.G_hat = regress_hankel(data.future, data.past);
  std::optional<Matrix> gram;
  if (cfg.weighting == Weighting::Moesp) gram = data.past_gram();
  Realization real = realize(r.G_hat, order, cfg.weighting, gram);
  r.singular_values = std::move(real.singular_values);
  r.O_hat = std::move(real.observability);
  r.K_hat_ctrb = std::move(real.controllability);

  StateSpaceEstimate est = extract_params(r.O_hat, r.K_hat_ctrb, m, cfg.future, cfg.past);
  r.A_hat = std::move(est.A);
  r.C_hat = std::move(est.C);
  r.K_hat = std::move(est.K);
  r.R_hat = estimate_R(data, r.G_hat, m);
  r.n_used = order;
  return r;
}

int default_horizon(int order, Index samples, double rho_guess) {
  if (!(rho_guess > 0.0 && rho_guess < 1.0)) throw Error("rho guess must lie in (0, 1)");
  if (samples < 2) return order + 1;
  const double beta = -1.05 / (2.0 * std::log(rho_guess));
  const int scaled = static_cast<int>(std::ceil(beta * std::log(static_cast<double>(samples))));
  return std::max(order + 1, scaled);
}

int largest_singular_gap(const Vector& singular_values) {
  int best = 1;
  double gap = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < singular_values.size(); ++i) {
    const double a = std::max(singular_values(i), 1e-300);
    const double b = std::max(singular_values(i + 1), 1e-300);
    const double g = std::log(a) - std::log(b);
    if (g > gap) {
      gap = g;
      best = static_cast<int>(i + 1);
    }
  }
  return best;
}

}  // namespace kflearn
