#pragma once

// Exact second-moment dynamics of the closed loop under a fixed compensator.
//
// Stacked moments  X_k = [vec E[x x'], vec E[x xhat'], vec E[xhat x'], vec E[xhat xhat']]
// obey  X_{k+1} = H X_k + Phi [vec Sw; vec Sv],  so the steady state, when
// rho(H) < 1, solves (I - H) X = Phi V. Residual and estimation-error second
// moments follow from the blocks:
//
//   E = X - Xtilde - Xbreve + Xhat
//   R = (C (x) C) E + Sigma'_C X + vec Sv

#include <optional>
#include <vector>

#include "mnad/model.hpp"

namespace mnad {

template <typename Scalar>
struct SecondMomentOperator {
  Matrix<Scalar> H;    // 4n^2 x 4n^2
  Matrix<Scalar> Phi;  // 4n^2 x (n^2 + p^2)
  Matrix<Scalar> sigma_A_prime;  // n^2 x n^2
  Matrix<Scalar> sigma_B_prime;  // n^2 x m^2
  Matrix<Scalar> sigma_C_prime;  // p^2 x n^2
  Matrix<Scalar> K;
  Matrix<Scalar> L;
};

template <typename Scalar>
struct SteadyStateMoments {
  Vector<Scalar> X_inf, Xtilde_inf, Xbreve_inf, Xhat_inf;
  Vector<Scalar> E_inf;  // n^2
  Vector<Scalar> R_inf;  // p^2
  Matrix<Scalar> sigma_r;
  Matrix<Scalar> sigma_x_err;
  Scalar rho_H{0};

  /// All four blocks stacked in operator order.
  Vector<Scalar> stacked() const {
    Vector<Scalar> out(4 * X_inf.size());
    out << X_inf, Xtilde_inf, Xbreve_inf, Xhat_inf;
    return out;
  }
};

template <typename Scalar>
struct StabilityDiagnostics {
  Scalar rho_open{0};
  std::optional<Scalar> rho_closed;
  std::optional<Scalar> rho_H;

  bool mean_square_stable() const { return rho_open < Scalar(1); }
  bool mean_square_stabilized() const { return rho_closed && *rho_closed < Scalar(1); }
  bool mean_square_compensated() const { return rho_H && *rho_H < Scalar(1); }
};

template <typename Scalar>
struct MomentTrajectory {
  std::vector<Vector<Scalar>> stacked;  // k = 0..T
  std::vector<Vector<Scalar>> e_mean;   // E[e_k]
  std::vector<Vector<Scalar>> r_mean;   // E[r_k] = C_bar E[e_k]
};

/// sum_i var_i (D_i (x) D_i)
template <typename Scalar>
Matrix<Scalar> lifted_covariance(const std::vector<NoiseDirection<Scalar>>& dirs,
                                 Eigen::Index rows, Eigen::Index cols) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(rows * rows, cols * cols);
  for (const auto& d : dirs) out += d.variance * kron(d.pattern, d.pattern);
  return out;
}

template <typename Scalar>
SecondMomentOperator<Scalar> build_operator(const UncertainLinearSystem<Scalar>& sys,
                                            const Matrix<Scalar>& K, const Matrix<Scalar>& L) {
  const Eigen::Index n = sys.n(), m = sys.m(), p = sys.p();
  if (K.rows() != m || K.cols() != n || L.rows() != n || L.cols() != p) {
    throw Error(ErrorCode::dimension_mismatch,
                "build_operator: gains K " + detail::dims(K.rows(), K.cols()) + ", L " +
                    detail::dims(L.rows(), L.cols()) + " do not match system (n=" +
                    std::to_string(n) + ", m=" + std::to_string(m) + ", p=" + std::to_string(p) +
                    ")");
  }
  const auto& A = sys.A_bar;
  const auto& B = sys.B_bar;
  const auto& C = sys.C_bar;

  SecondMomentOperator<Scalar> op;
  op.K = K;
  op.L = L;
  op.sigma_A_prime = lifted_covariance(sys.a_dirs, n, n);
  op.sigma_B_prime = lifted_covariance(sys.b_dirs, n, m);
  op.sigma_C_prime = lifted_covariance(sys.c_dirs, p, n);

  const Matrix<Scalar> BK = B * K;
  const Matrix<Scalar> LC = L * C;
  const Matrix<Scalar> Acl = A + BK - LC;
  const Eigen::Index nn = n * n;

  op.H.resize(4 * nn, 4 * nn);
  auto block = [&](int i, int j) { return op.H.block(i * nn, j * nn, nn, nn); };
  block(0, 0) = kron(A, A) + op.sigma_A_prime;
  block(0, 1) = kron(BK, A);
  block(0, 2) = kron(A, BK);
  block(0, 3) = (kron(B, B) + op.sigma_B_prime) * kron(K, K);

  block(1, 0) = kron(LC, A);
  block(1, 1) = kron(Acl, A);
  block(1, 2) = kron(LC, BK);
  block(1, 3) = kron(Acl, BK);

  block(2, 0) = kron(A, LC);
  block(2, 1) = kron(BK, LC);
  block(2, 2) = kron(A, Acl);
  block(2, 3) = kron(BK, Acl);

  block(3, 0) = kron(L, L) * (kron(C, C) + op.sigma_C_prime);
  block(3, 1) = kron(Acl, LC);
  block(3, 2) = kron(LC, Acl);
  block(3, 3) = kron(Acl, Acl);

  op.Phi = Matrix<Scalar>::Zero(4 * nn, nn + p * p);
  op.Phi.topLeftCorner(nn, nn).setIdentity();
  op.Phi.bottomRightCorner(nn, p * p) = kron(L, L);
  return op;
}

/// [vec Sw; vec Sv]
template <typename Scalar>
Vector<Scalar> noise_vector(const UncertainLinearSystem<Scalar>& sys) {
  Vector<Scalar> v(sys.sigma_w.size() + sys.sigma_v.size());
  v << vectorize(sys.sigma_w), vectorize(sys.sigma_v);
  return v;
}

/// Sigma'_C X evaluated as sum_l var_l vec(C_l mat(X) C_l').
template <typename Scalar>
Vector<Scalar> output_noise_term(const UncertainLinearSystem<Scalar>& sys,
                                 const Vector<Scalar>& X) {
  const Eigen::Index n = sys.n(), p = sys.p();
  const Matrix<Scalar> Xm = matricize(X, n, n);
  Matrix<Scalar> acc = Matrix<Scalar>::Zero(p, p);
  for (const auto& d : sys.c_dirs) acc += d.variance * d.pattern * Xm * d.pattern.transpose();
  return vectorize(acc);
}

/// Splits a stacked moment vector and derives E, R, Sigma_r, Sigma_x.
template <typename Scalar>
SteadyStateMoments<Scalar> moments_from_stacked(const UncertainLinearSystem<Scalar>& sys,
                                                const Vector<Scalar>& stacked, Scalar rho_H) {
  const Eigen::Index n = sys.n(), p = sys.p(), nn = n * n;
  SteadyStateMoments<Scalar> ss;
  ss.rho_H = rho_H;
  ss.X_inf = stacked.segment(0, nn);
  ss.Xtilde_inf = stacked.segment(nn, nn);
  ss.Xbreve_inf = stacked.segment(2 * nn, nn);
  ss.Xhat_inf = stacked.segment(3 * nn, nn);
  ss.E_inf = ss.X_inf - ss.Xtilde_inf - ss.Xbreve_inf + ss.Xhat_inf;
  ss.R_inf = kron(sys.C_bar, sys.C_bar) * ss.E_inf + output_noise_term(sys, ss.X_inf) +
             vectorize(sys.sigma_v);
  ss.sigma_r = symmetrize(matricize(ss.R_inf, p, p));
  ss.sigma_x_err = symmetrize(matricize(ss.E_inf, n, n));
  return ss;
}

/// Throws not_compensated when rho(H) >= 1: the fixed point exists
/// algebraically but is not the limit of the moment recursion.
template <typename Scalar>
SteadyStateMoments<Scalar> steady_state(const SecondMomentOperator<Scalar>& op,
                                        const UncertainLinearSystem<Scalar>& sys) {
  const Scalar rho = spectral_radius(op.H);
  if (!(rho < Scalar(1))) {
    throw Error(ErrorCode::not_compensated,
                "steady state does not exist: rho(H) = " + std::to_string(static_cast<double>(rho)) +
                    " >= 1");
  }
  const Eigen::Index dim = op.H.rows();
  const Matrix<Scalar> lhs = Matrix<Scalar>::Identity(dim, dim) - op.H;
  const Vector<Scalar> rhs = op.Phi * noise_vector(sys);
  return moments_from_stacked(sys, solve_linear(lhs, rhs), rho);
}

/// Iterates the exact moment recursions for T steps from x0 ~ (0, x0_second
/// moment), xhat_0 = 0 and the given initial error mean. Defined for any
/// rho(H); values may grow without bound.
template <typename Scalar>
MomentTrajectory<Scalar> propagate_moments(const SecondMomentOperator<Scalar>& op,
                                           const UncertainLinearSystem<Scalar>& sys,
                                           const Matrix<Scalar>& x0_second_moment,
                                           const Vector<Scalar>& e0_mean, long horizon) {
  const Eigen::Index n = sys.n(), nn = n * n;
  if (horizon < 0) throw Error(ErrorCode::invalid_argument, "propagate_moments: negative horizon");
  if (x0_second_moment.rows() != n || x0_second_moment.cols() != n || e0_mean.size() != n) {
    throw Error(ErrorCode::dimension_mismatch, "propagate_moments: initial moments have wrong size");
  }
  MomentTrajectory<Scalar> traj;
  traj.stacked.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.e_mean.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.r_mean.reserve(static_cast<std::size_t>(horizon) + 1);

  Vector<Scalar> X = Vector<Scalar>::Zero(4 * nn);
  X.head(nn) = vectorize(x0_second_moment);
  Vector<Scalar> e = e0_mean;
  const Vector<Scalar> forcing = op.Phi * noise_vector(sys);
  const Matrix<Scalar> error_dynamics = sys.A_bar - op.L * sys.C_bar;

  for (long k = 0;; ++k) {
    traj.stacked.push_back(X);
    traj.e_mean.push_back(e);
    traj.r_mean.push_back(sys.C_bar * e);
    if (k == horizon) break;
    X = op.H * X + forcing;
    e = error_dynamics * e;
  }
  return traj;
}

/// Spectral-radius tests for mean-square stability (open loop), mean-square
/// stabilization under u = K x, and mean-square compensation under (K, L).
template <typename Scalar>
StabilityDiagnostics<Scalar> stability_diagnostics(
    const UncertainLinearSystem<Scalar>& sys, const std::optional<Matrix<Scalar>>& K = std::nullopt,
    const std::optional<Matrix<Scalar>>& L = std::nullopt) {
  const Eigen::Index n = sys.n(), m = sys.m();
  StabilityDiagnostics<Scalar> out;
  const Matrix<Scalar> SA = lifted_covariance(sys.a_dirs, n, n);
  out.rho_open = spectral_radius(Matrix<Scalar>(kron(sys.A_bar, sys.A_bar) + SA));
  if (K) {
    if (K->rows() != m || K->cols() != n) {
      throw Error(ErrorCode::dimension_mismatch, "stability_diagnostics: K has wrong shape");
    }
    const Matrix<Scalar> closed = sys.A_bar + sys.B_bar * *K;
    const Matrix<Scalar> SB = lifted_covariance(sys.b_dirs, n, m);
    out.rho_closed =
        spectral_radius(Matrix<Scalar>(kron(closed, closed) + SA + SB * kron(*K, *K)));
    if (L) out.rho_H = spectral_radius(build_operator(sys, *K, *L).H);
  } else if (L) {
    throw Error(ErrorCode::invalid_argument, "stability_diagnostics: L requires K");
  }
  return out;
}

/// E[q] = p + e' C' Sigma_r^{-1} C e
template <typename Scalar>
Scalar expected_q(const SteadyStateMoments<Scalar>& ss, const Vector<Scalar>& e_mean,
                  const Matrix<Scalar>& C_bar) {
  const Eigen::Index p = ss.sigma_r.rows();
  if (C_bar.rows() != p || C_bar.cols() != e_mean.size()) {
    throw Error(ErrorCode::dimension_mismatch, "expected_q: C_bar does not match moments");
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(ss.sigma_r, Eigen::EigenvaluesOnly);
  const Scalar lo = eig.eigenvalues().minCoeff();
  const Scalar hi = eig.eigenvalues().maxCoeff();
  if (!(lo > Scalar(0)) || hi / lo > Scalar(1e12)) {
    throw Error(ErrorCode::singular_matrix, "expected_q: Sigma_r is near singular");
  }
  const Vector<Scalar> mean_r = C_bar * e_mean;
  return Scalar(p) + mean_r.dot(ss.sigma_r.ldlt().solve(mean_r));
}

}  // namespace mnad
