#pragma once

// Joint controller/estimator synthesis for multiplicative-noise systems.
//
// The optimal linear compensator u = K xhat, xhat+ = (A + B K) xhat + L (y - C xhat)
// is characterized by four coupled Riccati equations in P1..P4:
//
//   P1 = Q + A'P1A + sum sa A_i'(P1 + P2)A_i - K'Ka K + sum sc C_l'L'P2 L C_l
//   P2 = (A - LC)'P2(A - LC) + K'Ka K
//   P3 = W + A P3 A' - L La L' + sum sa A_i(P3 + P4)A_i' + sum sb B_j K P4 K'B_j'
//   P4 = (A + BK)P4(A + BK)' + L La L'
//
//   Ka = R + B'P1B + sum sb B_j'(P1 + P2)B_j
//   La = V + C P3 C' + sum sc C_l(P3 + P4)C_l'
//   K  = -Ka^{-1} B'P1 A,   L = A P3 C' La^{-1}
//
// solved by fixed-point sweeps from P1 = Q, P2 = 0, P3 = W, P4 = 0.

#include <algorithm>
#include <array>
#include <limits>

#include "mnad/model.hpp"

namespace mnad {

struct SolverOptions {
  double tol = 1e-9;
  long max_iters = 100000;
  double divergence_norm = 1e12;
};

template <typename Scalar>
struct CompensatorGains {
  Matrix<Scalar> K;  // m x n
  Matrix<Scalar> L;  // n x p
  Matrix<Scalar> P1, P2, P3, P4;
  long iterations = 0;
  Scalar residual{0};
  bool converged = false;
};

namespace detail {

template <typename Scalar>
struct RiccatiIterate {
  Matrix<Scalar> P1, P2, P3, P4;
};

template <typename Scalar>
struct GainTerms {
  Matrix<Scalar> K_alpha, L_alpha, K, L;
};

template <typename Scalar>
Matrix<Scalar> checked_solve(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* what) {
  Eigen::PartialPivLU<Matrix<Scalar>> lu(a);
  if (!(lu.rcond() > Scalar(1e-14))) {
    throw Error(ErrorCode::singular_matrix,
                std::string(what) + " is singular to working precision");
  }
  return lu.solve(b);
}

template <typename Scalar>
GainTerms<Scalar> gain_terms(const UncertainLinearSystem<Scalar>& sys,
                             const SynthesisWeights<Scalar>& w, const RiccatiIterate<Scalar>& it) {
  const auto& A = sys.A_bar;
  const auto& B = sys.B_bar;
  const auto& C = sys.C_bar;
  GainTerms<Scalar> g;
  g.K_alpha = w.R + B.transpose() * it.P1 * B;
  const Matrix<Scalar> P12 = it.P1 + it.P2;
  for (const auto& d : sys.b_dirs) {
    g.K_alpha += d.variance * d.pattern.transpose() * P12 * d.pattern;
  }
  g.L_alpha = sys.sigma_v + C * it.P3 * C.transpose();
  const Matrix<Scalar> P34 = it.P3 + it.P4;
  for (const auto& d : sys.c_dirs) {
    g.L_alpha += d.variance * d.pattern * P34 * d.pattern.transpose();
  }
  g.K_alpha = symmetrize(g.K_alpha);
  g.L_alpha = symmetrize(g.L_alpha);
  g.K = -checked_solve<Scalar>(g.K_alpha, B.transpose() * it.P1 * A, "K_alpha");
  // L = A P3 C' La^{-1}  <=>  L' = La^{-1} C P3' A'  (La symmetric)
  g.L = checked_solve<Scalar>(g.L_alpha, C * it.P3.transpose() * A.transpose(), "L_alpha")
            .transpose();
  return g;
}

/// Right-hand sides of the four coupled equations for given P and gains.
template <typename Scalar>
RiccatiIterate<Scalar> riccati_rhs(const UncertainLinearSystem<Scalar>& sys,
                                   const SynthesisWeights<Scalar>& w,
                                   const RiccatiIterate<Scalar>& it, const GainTerms<Scalar>& g) {
  const auto& A = sys.A_bar;
  const auto& B = sys.B_bar;
  const auto& C = sys.C_bar;
  const Matrix<Scalar> KtKaK = g.K.transpose() * g.K_alpha * g.K;
  const Matrix<Scalar> LLaLt = g.L * g.L_alpha * g.L.transpose();

  RiccatiIterate<Scalar> next;
  next.P1 = w.Q + A.transpose() * it.P1 * A - KtKaK;
  const Matrix<Scalar> P12 = it.P1 + it.P2;
  for (const auto& d : sys.a_dirs) {
    next.P1 += d.variance * d.pattern.transpose() * P12 * d.pattern;
  }
  for (const auto& d : sys.c_dirs) {
    const Matrix<Scalar> LC = g.L * d.pattern;
    next.P1 += d.variance * LC.transpose() * it.P2 * LC;
  }

  const Matrix<Scalar> estimator = A - g.L * C;
  next.P2 = estimator.transpose() * it.P2 * estimator + KtKaK;

  next.P3 = sys.sigma_w + A * it.P3 * A.transpose() - LLaLt;
  const Matrix<Scalar> P34 = it.P3 + it.P4;
  for (const auto& d : sys.a_dirs) {
    next.P3 += d.variance * d.pattern * P34 * d.pattern.transpose();
  }
  for (const auto& d : sys.b_dirs) {
    const Matrix<Scalar> BK = d.pattern * g.K;
    next.P3 += d.variance * BK * it.P4 * BK.transpose();
  }

  const Matrix<Scalar> closed = A + B * g.K;
  next.P4 = closed * it.P4 * closed.transpose() + LLaLt;

  next.P1 = symmetrize(next.P1);
  next.P2 = symmetrize(next.P2);
  next.P3 = symmetrize(next.P3);
  next.P4 = symmetrize(next.P4);
  return next;
}

template <typename Scalar>
Scalar max_abs_diff(const RiccatiIterate<Scalar>& a, const RiccatiIterate<Scalar>& b) {
  return std::max({(a.P1 - b.P1).cwiseAbs().maxCoeff(), (a.P2 - b.P2).cwiseAbs().maxCoeff(),
                   (a.P3 - b.P3).cwiseAbs().maxCoeff(), (a.P4 - b.P4).cwiseAbs().maxCoeff()});
}

template <typename Scalar>
Scalar max_abs(const RiccatiIterate<Scalar>& a) {
  return std::max({a.P1.cwiseAbs().maxCoeff(), a.P2.cwiseAbs().maxCoeff(),
                   a.P3.cwiseAbs().maxCoeff(), a.P4.cwiseAbs().maxCoeff()});
}

template <typename Scalar>
bool all_finite(const RiccatiIterate<Scalar>& a) {
  return a.P1.allFinite() && a.P2.allFinite() && a.P3.allFinite() && a.P4.allFinite();
}

template <typename Scalar>
void require_valid(const UncertainLinearSystem<Scalar>& sys, const SynthesisWeights<Scalar>& w) {
  const auto report = validate_system(sys);
  if (!report.ok()) throw Error(ErrorCode::validation_error, report.summary());
  const auto wreport = validate_weights(w, sys.n(), sys.m());
  if (!wreport.ok()) throw Error(ErrorCode::validation_error, wreport.summary());
}

}  // namespace detail

/// Fixed-point iteration on the coupled Riccati equations. Non-convergence
/// (iterate magnitude above opts.divergence_norm, non-finite values, or
/// opts.max_iters sweeps) is reported with converged = false and the last
/// iterate; it signals that mean-square compensation was lost.
template <typename Scalar>
CompensatorGains<Scalar> solve_coupled_riccati(const UncertainLinearSystem<Scalar>& sys,
                                               const SynthesisWeights<Scalar>& w,
                                               const SolverOptions& opts = {}) {
  detail::require_valid(sys, w);
  if (!(opts.tol > 0.0) || !(opts.tol < opts.divergence_norm) || opts.max_iters < 1) {
    throw Error(ErrorCode::invalid_argument, "solve_coupled_riccati: invalid solver options");
  }
  const Eigen::Index n = sys.n();
  detail::RiccatiIterate<Scalar> it{symmetrize(w.Q), Matrix<Scalar>::Zero(n, n),
                                    symmetrize(sys.sigma_w), Matrix<Scalar>::Zero(n, n)};

  CompensatorGains<Scalar> out;
  detail::GainTerms<Scalar> g = detail::gain_terms(sys, w, it);
  for (long k = 1; k <= opts.max_iters; ++k) {
    detail::RiccatiIterate<Scalar> next = detail::riccati_rhs(sys, w, it, g);
    out.iterations = k;
    if (!detail::all_finite(next) || detail::max_abs(next) > Scalar(opts.divergence_norm)) {
      out.residual = std::numeric_limits<Scalar>::infinity();
      it = std::move(next);
      out.K = g.K;
      out.L = g.L;
      out.P1 = it.P1;
      out.P2 = it.P2;
      out.P3 = it.P3;
      out.P4 = it.P4;
      out.converged = false;
      return out;
    }
    out.residual = detail::max_abs_diff(next, it);
    it = std::move(next);
    g = detail::gain_terms(sys, w, it);
    if (out.residual <= Scalar(opts.tol)) {
      out.converged = true;
      break;
    }
  }
  out.K = g.K;
  out.L = g.L;
  out.P1 = it.P1;
  out.P2 = it.P2;
  out.P3 = it.P3;
  out.P4 = it.P4;
  return out;
}

/// Classical LQG: the coupled solve with every multiplicative variance zeroed.
template <typename Scalar>
CompensatorGains<Scalar> solve_lqg(const UncertainLinearSystem<Scalar>& sys,
                                   const SynthesisWeights<Scalar>& w,
                                   const SolverOptions& opts = {}) {
  return solve_coupled_riccati(sys.without_multiplicative_noise(), w, opts);
}

/// Max absolute elementwise residual of the four equations re-evaluated at
/// the stored P1..P4 with freshly computed gains.
template <typename Scalar>
Scalar riccati_residual(const UncertainLinearSystem<Scalar>& sys,
                        const SynthesisWeights<Scalar>& w, const CompensatorGains<Scalar>& gains) {
  const detail::RiccatiIterate<Scalar> it{gains.P1, gains.P2, gains.P3, gains.P4};
  const auto g = detail::gain_terms(sys, w, it);
  return detail::max_abs_diff(detail::riccati_rhs(sys, w, it, g), it);
}

}  // namespace mnad
