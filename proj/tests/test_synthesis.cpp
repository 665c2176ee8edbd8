#include <doctest.h>

#include "mnad/moments.hpp"
#include "mnad/synthesis.hpp"
#include "oracles.hpp"

using namespace mnad;

namespace {

ProblemSetup scalar_setup(double a) {
  ProblemSetup s;
  s.system.A_bar = MatrixXd::Constant(1, 1, a);
  s.system.B_bar = MatrixXd::Ones(1, 1);
  s.system.C_bar = MatrixXd::Ones(1, 1);
  s.system.sigma_w = MatrixXd::Ones(1, 1);
  s.system.sigma_v = MatrixXd::Ones(1, 1);
  s.system.sigma_x0 = MatrixXd::Zero(1, 1);
  s.weights = {MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)};
  return s;
}

double max_diff(const MatrixXd& a, const MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

bool is_psd(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  return eig.eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("zero dynamics give zero gains") {
  const auto s = scalar_setup(0.0);
  const auto g = solve_coupled_riccati(s.system, s.weights);
  REQUIRE(g.converged);
  CHECK(g.K(0, 0) == 0.0);
  CHECK(g.L(0, 0) == 0.0);
  CHECK(g.P1(0, 0) == 1.0);
  CHECK(g.P3(0, 0) == 1.0);
}

TEST_CASE("scalar LQG matches value-iteration oracle") {
  const auto s = scalar_setup(0.5);
  const auto g = solve_lqg(s.system, s.weights);
  REQUIRE(g.converged);
  const auto ctrl = oracle::control_dare(s.system.A_bar, s.system.B_bar, s.weights.Q, s.weights.R);
  const auto filt = oracle::filter_dare(s.system.A_bar, s.system.C_bar, s.system.sigma_w,
                                        s.system.sigma_v);
  CHECK(max_diff(g.K, ctrl.gain) < 1e-8);
  CHECK(max_diff(g.L, filt.gain) < 1e-8);
  CHECK(max_diff(g.P1, ctrl.P) < 1e-8);
  CHECK(max_diff(g.P3, filt.P) < 1e-8);
}

TEST_CASE("pendulum without multiplicative noise reduces to LQG") {
  const auto s = build_pendulum(0.0, 0.0);
  const auto mlqg = solve_coupled_riccati(s.system, s.weights);
  const auto lqg = solve_lqg(s.system, s.weights);
  REQUIRE(mlqg.converged);
  REQUIRE(lqg.converged);
  CHECK(max_diff(mlqg.K, lqg.K) < 1e-8);
  CHECK(max_diff(mlqg.L, lqg.L) < 1e-8);
  const auto ctrl = oracle::control_dare(s.system.A_bar, s.system.B_bar, s.weights.Q, s.weights.R);
  const auto filt = oracle::filter_dare(s.system.A_bar, s.system.C_bar, s.system.sigma_w,
                                        s.system.sigma_v);
  CHECK(max_diff(mlqg.K, ctrl.gain) < 1e-8);
  CHECK(max_diff(mlqg.L, filt.gain) < 1e-8);
}

TEST_CASE("LQG gains ignore the multiplicative variances") {
  const auto a = build_pendulum(0.02, 0.02);
  const auto b = build_pendulum(0.3, 0.3);
  const auto ga = solve_lqg(a.system, a.weights);
  const auto gb = solve_lqg(b.system, b.weights);
  CHECK(ga.K == gb.K);
  CHECK(ga.L == gb.L);
}

TEST_CASE("converged fixed point re-evaluates within tolerance") {
  for (const double s2 : {0.06, 0.3, 2.0}) {
    CAPTURE(s2);
    const auto s = build_pendulum(s2, s2);
    const SolverOptions opts;
    const auto g = solve_coupled_riccati(s.system, s.weights, opts);
    REQUIRE(g.converged);
    CHECK(g.residual <= opts.tol);
    CHECK(riccati_residual(s.system, s.weights, g) <= 10 * opts.tol);
    for (const MatrixXd* p : {&g.P1, &g.P2, &g.P3, &g.P4}) {
      CHECK(*p == p->transpose());
      CHECK(is_psd(*p));
    }
  }
}

TEST_CASE("compensation holds across the converging range") {
  for (const double s2 : {0.5, 1.0, 2.0, 3.0, 3.5}) {
    CAPTURE(s2);
    const auto s = build_pendulum(s2, s2);
    const auto g = solve_coupled_riccati(s.system, s.weights);
    REQUIRE(g.converged);
    CHECK(spectral_radius(build_operator(s.system, g.K, g.L).H) < 1.0);
  }
}

TEST_CASE("MLQG beats LQG on the low-noise grid") {
  for (const double s2 : {0.02, 0.04, 0.06, 0.08, 0.10}) {
    CAPTURE(s2);
    const auto s = build_pendulum(s2, s2);
    const auto m = solve_coupled_riccati(s.system, s.weights);
    const auto l = solve_lqg(s.system, s.weights);
    CHECK(spectral_radius(build_operator(s.system, m.K, m.L).H) <
          spectral_radius(build_operator(s.system, l.K, l.L).H));
  }
}

TEST_CASE("strong noise is reported as non-convergence") {
  const auto s = build_pendulum(4.5, 4.5);
  const auto g = solve_coupled_riccati(s.system, s.weights);
  CHECK_FALSE(g.converged);
  CHECK(g.iterations > 0);
}

TEST_CASE("iteration cap is reported as non-convergence") {
  const auto s = build_pendulum(0.06, 0.06);
  SolverOptions opts;
  opts.max_iters = 3;
  const auto g = solve_coupled_riccati(s.system, s.weights, opts);
  CHECK_FALSE(g.converged);
  CHECK(g.iterations == 3);
}

TEST_CASE("invalid inputs throw") {
  auto s = build_pendulum(0.06, 0.06);
  SolverOptions opts;
  opts.tol = -1;
  CHECK_THROWS_AS(solve_coupled_riccati(s.system, s.weights, opts), Error);
  s.weights.R = MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(solve_coupled_riccati(s.system, s.weights), Error);
}

TEST_CASE("extended precision agrees with double") {
  const auto s = build_pendulum(0.1, 0.1);
  const auto gd = solve_coupled_riccati(s.system, s.weights);

  UncertainLinearSystem<long double> sl;
  sl.A_bar = s.system.A_bar.cast<long double>();
  sl.B_bar = s.system.B_bar.cast<long double>();
  sl.C_bar = s.system.C_bar.cast<long double>();
  for (const auto& d : s.system.a_dirs) sl.a_dirs.push_back({d.pattern.cast<long double>(), d.variance});
  for (const auto& d : s.system.c_dirs) sl.c_dirs.push_back({d.pattern.cast<long double>(), d.variance});
  sl.sigma_w = s.system.sigma_w.cast<long double>();
  sl.sigma_v = s.system.sigma_v.cast<long double>();
  sl.sigma_x0 = s.system.sigma_x0.cast<long double>();
  const SynthesisWeights<long double> wl{s.weights.Q.cast<long double>(),
                                         s.weights.R.cast<long double>()};
  const auto gl = solve_coupled_riccati(sl, wl);
  REQUIRE(gl.converged);
  CHECK(max_diff(gl.K.cast<double>(), gd.K) < 1e-7);
  CHECK(max_diff(gl.L.cast<double>(), gd.L) < 1e-7);
}
