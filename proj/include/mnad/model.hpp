#pragma once

// Uncertain linear system description:
//
//   x_{k+1} = (A_bar + sum_i gamma_ki A_i) x_k + (B_bar + sum_j delta_kj B_j) u_k + w_k
//   y_k     = (C_bar + sum_l kappa_kl C_l) x_k + v_k
//
// with zero-mean, mutually independent scalar multiplicative noises of known
// variance and additive noises of known covariance.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mnad/matops.hpp"

namespace mnad {

template <typename Scalar>
struct NoiseDirection {
  Matrix<Scalar> pattern;
  Scalar variance{0};
};

template <typename Scalar>
struct UncertainLinearSystem {
  Matrix<Scalar> A_bar;
  Matrix<Scalar> B_bar;
  Matrix<Scalar> C_bar;
  std::vector<NoiseDirection<Scalar>> a_dirs;
  std::vector<NoiseDirection<Scalar>> b_dirs;
  std::vector<NoiseDirection<Scalar>> c_dirs;
  Matrix<Scalar> sigma_w;
  Matrix<Scalar> sigma_v;
  Matrix<Scalar> sigma_x0;

  Eigen::Index n() const { return A_bar.rows(); }
  Eigen::Index m() const { return B_bar.cols(); }
  Eigen::Index p() const { return C_bar.rows(); }

  /// Same nominal system with every multiplicative variance set to zero.
  UncertainLinearSystem without_multiplicative_noise() const {
    UncertainLinearSystem out = *this;
    for (auto* dirs : {&out.a_dirs, &out.b_dirs, &out.c_dirs}) {
      for (auto& d : *dirs) d.variance = Scalar(0);
    }
    return out;
  }
};

template <typename Scalar>
struct SynthesisWeights {
  Matrix<Scalar> Q;
  Matrix<Scalar> R;
};

enum class NoiseKind { gaussian, laplacian };

inline const char* to_string(NoiseKind kind) {
  return kind == NoiseKind::gaussian ? "gaussian" : "laplacian";
}

struct RunOptions {
  std::optional<MatrixXd> true_A;  // fixed-mismatch simulation only
  NoiseKind noise_kind = NoiseKind::laplacian;
  std::uint64_t seed = 0;
};

/// Everything a config file (or the built-in benchmark) describes.
struct ProblemSetup {
  UncertainLinearSystem<double> system;
  SynthesisWeights<double> weights;
  RunOptions options;
};

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v;
    }
    return out;
  }
};

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void check_shape(ValidationReport& report, const std::string& name, const Matrix<Scalar>& m,
                 Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows) {
    report.violations.push_back(name + " row count " + std::to_string(m.rows()) +
                                " != " + std::to_string(rows));
  }
  if (m.cols() != cols) {
    report.violations.push_back(name + " column count " + std::to_string(m.cols()) +
                                " != " + std::to_string(cols));
  }
}

template <typename Scalar>
void check_finite(ValidationReport& report, const std::string& name, const Matrix<Scalar>& m) {
  if (!m.allFinite()) report.violations.push_back(name + " has non-finite entries");
}

/// Symmetry to 1e-10 relative, then min eigenvalue >= -1e-10 * max |eigenvalue|.
/// With `strict`, additionally requires min eigenvalue > 1e-10 * max |eigenvalue|.
template <typename Scalar>
void check_psd(ValidationReport& report, const std::string& name, const Matrix<Scalar>& m,
               bool strict = false) {
  if (m.rows() != m.cols() || m.size() == 0 || !m.allFinite()) return;
  const Scalar scale = m.cwiseAbs().maxCoeff();
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-10) * scale) {
    report.violations.push_back(name + " not symmetric (max asymmetry " +
                                std::to_string(static_cast<double>(asym)) + ")");
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(symmetrize(m), Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const Scalar min_ev = ev.minCoeff();
  const Scalar max_abs = ev.cwiseAbs().maxCoeff();
  const Scalar tol = Scalar(1e-10) * max_abs;
  if (min_ev < -tol) {
    report.violations.push_back(name + " not PSD (min eigenvalue " +
                                std::to_string(static_cast<double>(min_ev)) + ")");
  } else if (strict && !(min_ev > tol)) {
    report.violations.push_back(name + " not positive definite (min eigenvalue " +
                                std::to_string(static_cast<double>(min_ev)) + ")");
  }
}

}  // namespace detail

template <typename Scalar>
ValidationReport validate_system(const UncertainLinearSystem<Scalar>& sys) {
  using detail::check_finite;
  using detail::check_psd;
  using detail::check_shape;
  ValidationReport report;
  const Eigen::Index n = sys.n();
  const Eigen::Index m = sys.m();
  const Eigen::Index p = sys.p();
  if (n == 0) report.violations.push_back("A_bar is empty (n must be positive)");
  if (m == 0) report.violations.push_back("B_bar has no columns (m must be positive)");
  if (p == 0) report.violations.push_back("C_bar has no rows (p must be positive)");

  check_shape(report, "A_bar", sys.A_bar, n, n);
  check_shape(report, "B_bar", sys.B_bar, n, m);
  check_shape(report, "C_bar", sys.C_bar, p, n);
  check_shape(report, "sigma_w", sys.sigma_w, n, n);
  check_shape(report, "sigma_v", sys.sigma_v, p, p);
  check_shape(report, "sigma_x0", sys.sigma_x0, n, n);

  auto check_dirs = [&](const auto& dirs, const std::string& label, Eigen::Index rows,
                        Eigen::Index cols) {
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      const std::string name = label + "[" + std::to_string(i) + "]";
      check_shape(report, name + ".pattern", dirs[i].pattern, rows, cols);
      check_finite(report, name + ".pattern", dirs[i].pattern);
      if (!(dirs[i].variance >= Scalar(0)) || !std::isfinite(static_cast<double>(dirs[i].variance))) {
        report.violations.push_back(name + ".variance must be finite and >= 0");
      }
    }
  };
  check_dirs(sys.a_dirs, "a_dirs", n, n);
  check_dirs(sys.b_dirs, "b_dirs", n, m);
  check_dirs(sys.c_dirs, "c_dirs", p, n);

  for (const auto& [name, mat] :
       {std::pair<const char*, const Matrix<Scalar>*>{"A_bar", &sys.A_bar},
        {"B_bar", &sys.B_bar},
        {"C_bar", &sys.C_bar},
        {"sigma_w", &sys.sigma_w},
        {"sigma_v", &sys.sigma_v},
        {"sigma_x0", &sys.sigma_x0}}) {
    check_finite(report, name, *mat);
  }
  check_psd(report, "sigma_w", sys.sigma_w);
  check_psd(report, "sigma_v", sys.sigma_v);
  check_psd(report, "sigma_x0", sys.sigma_x0);
  return report;
}

template <typename Scalar>
ValidationReport validate_weights(const SynthesisWeights<Scalar>& w, Eigen::Index n,
                                  Eigen::Index m) {
  ValidationReport report;
  detail::check_shape(report, "Q", w.Q, n, n);
  detail::check_shape(report, "R", w.R, m, m);
  detail::check_finite(report, "Q", w.Q);
  detail::check_finite(report, "R", w.R);
  detail::check_psd(report, "Q", w.Q);
  detail::check_psd(report, "R", w.R, /*strict=*/true);
  return report;
}

/// Forward-Euler linearization of the inverted pendulum with torque input,
/// dt = 0.1, nominal mass constant 5 (true value 10), angle measured.
/// Multiplicative noise perturbs the (2,1) entry of A and the gain of the
/// angle sensor.
inline ProblemSetup build_pendulum(double sigma2_a, double sigma2_c) {
  if (!(sigma2_a >= 0.0) || !(sigma2_c >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "build_pendulum: variances must be >= 0");
  }
  constexpr double dt = 0.1;
  constexpr double nominal_mc = 5.0;
  constexpr double true_mc = 10.0;

  ProblemSetup setup;
  auto& sys = setup.system;
  sys.A_bar.resize(2, 2);
  sys.A_bar << 1.0, dt, nominal_mc * dt, 1.0;
  sys.B_bar.resize(2, 1);
  sys.B_bar << 0.0, dt;
  sys.C_bar.resize(1, 2);
  sys.C_bar << 1.0, 0.0;

  MatrixXd a1(2, 2);
  a1 << 0.0, 0.0, 1.0, 0.0;
  MatrixXd c1(1, 2);
  c1 << 0.1, 0.0;
  sys.a_dirs = {{a1, sigma2_a}};
  sys.c_dirs = {{c1, sigma2_c}};

  sys.sigma_w = 2.0 * MatrixXd::Identity(2, 2);
  sys.sigma_v = 2.0 * MatrixXd::Identity(1, 1);
  sys.sigma_x0 = MatrixXd::Zero(2, 2);

  setup.weights.Q = MatrixXd::Identity(2, 2);
  setup.weights.R = MatrixXd::Identity(1, 1);

  MatrixXd true_A(2, 2);
  true_A << 1.0, dt, true_mc * dt, 1.0;
  setup.options.true_A = true_A;
  return setup;
}

}  // namespace mnad
